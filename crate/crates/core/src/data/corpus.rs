use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary task: 0 = non-depressed, 1 = depressed.
pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub text: String,
    pub label: Option<usize>,
    pub lang: String,
}

impl Example {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Option<usize>) -> Self {
        Example {
            id: id.into(),
            text: text.into(),
            label,
            lang: "und".to_string(),
        }
    }

    pub fn with_lang(mut self, lang: impl Into<String>) -> Self {
        self.lang = lang.into();
        self
    }
}

/// Parse JSONL corpus text, validating unique ids and class indices.
pub fn read_corpus_str(text: &str, origin: &Path) -> Result<Vec<Example>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let example: Example = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if let Some(label) = example.label {
            if label >= NUM_CLASSES {
                return Err(parse_err(format!("label {label} is not a valid class")));
            }
        }
        if !seen.insert(example.id.clone()) {
            return Err(parse_err(format!("duplicate id `{}`", example.id)));
        }
        out.push(example);
    }
    Ok(out)
}

pub fn read_corpus(path: &Path) -> Result<Vec<Example>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_corpus_str(&text, path)
}

pub fn write_corpus(path: &Path, examples: &[Example]) -> Result<()> {
    let mut buf = Vec::new();
    for example in examples {
        serde_json::to_writer(&mut buf, example)?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_jsonl_with_null_labels() {
        let text = "{\"id\":\"a\",\"text\":\"hi\",\"label\":1,\"lang\":\"en\"}\n\
                    {\"id\":\"b\",\"text\":\"yo\",\"label\":null,\"lang\":\"es\"}\n";
        let corpus = read_corpus_str(text, Path::new("mem")).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus[0].label, Some(1));
        assert_eq!(corpus[1].label, None);
        assert_eq!(corpus[1].lang, "es");
    }

    #[test]
    fn rejects_duplicate_ids_and_bad_labels() {
        let dup = "{\"id\":\"a\",\"text\":\"\",\"label\":0,\"lang\":\"en\"}\n\
                   {\"id\":\"a\",\"text\":\"\",\"label\":0,\"lang\":\"en\"}\n";
        assert!(read_corpus_str(dup, Path::new("mem")).is_err());
        let bad = "{\"id\":\"a\",\"text\":\"\",\"label\":2,\"lang\":\"en\"}\n";
        let err = read_corpus_str(bad, Path::new("mem")).unwrap_err();
        assert!(err.to_string().contains("mem:1"));
    }
}
