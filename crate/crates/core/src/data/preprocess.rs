use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};

/// Symbols stripped by default: ASCII punctuation except `_` (kept so emoji descriptions such
/// as `sad_face` survive), plus common typographic quotes and ellipses.
const DEFAULT_SYMBOLS: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^`{|}~“”‘’…«»¡¿";

fn url_pattern() -> &'static Regex {
    static URL: OnceLock<Regex> = OnceLock::new();
    URL.get_or_init(|| Regex::new(r"(?i)(?:https?://|www\.)\S+").expect("valid url regex"))
}

/// Normalization resources for one language. Empty resources are valid.
#[derive(Debug, Clone)]
pub struct LanguageResources {
    pub stopwords: HashSet<String>,
    /// Surface form → description; matched as substrings, longest first.
    emoji: Vec<(String, String)>,
    /// Whole-token dialect form → formal equivalent.
    pub dialect: HashMap<String, String>,
    pub symbols: HashSet<char>,
}

impl Default for LanguageResources {
    fn default() -> Self {
        LanguageResources {
            stopwords: HashSet::new(),
            emoji: Vec::new(),
            dialect: HashMap::new(),
            symbols: DEFAULT_SYMBOLS.chars().collect(),
        }
    }
}

impl LanguageResources {
    pub fn with_stopwords<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.stopwords
            .extend(words.into_iter().map(|w| w.as_ref().to_lowercase()));
        self
    }

    pub fn with_emoji<I, S, T>(mut self, pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        for (surface, description) in pairs {
            let surface = surface.as_ref().to_lowercase();
            if surface.is_empty() {
                continue;
            }
            self.emoji.retain(|(s, _)| *s != surface);
            self.emoji
                .push((surface, description.as_ref().to_lowercase()));
        }
        // longest surface first so ":-(" wins over ":("
        self.emoji.sort_by(|a, b| {
            b.0.chars()
                .count()
                .cmp(&a.0.chars().count())
                .then(a.0.cmp(&b.0))
        });
        self
    }

    pub fn with_dialect<I, S, T>(mut self, pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        self.dialect.extend(
            pairs
                .into_iter()
                .map(|(k, v)| (k.as_ref().to_lowercase(), v.as_ref().to_lowercase())),
        );
        self
    }

    pub fn with_symbols(mut self, symbols: &str) -> Self {
        self.symbols = symbols.chars().collect();
        self
    }

    /// Load `stopwords.txt`, `emoji.tsv` and `dialect.tsv` from `dir`; missing files are empty.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut res = LanguageResources::default();
        let stop = dir.join("stopwords.txt");
        if stop.exists() {
            let text = fs::read_to_string(&stop).map_err(|e| Error::io(&stop, e))?;
            res = res.with_stopwords(text.lines().map(str::trim).filter(|l| !l.is_empty()));
        }
        let emoji = dir.join("emoji.tsv");
        if emoji.exists() {
            res = res.with_emoji(read_tsv(&emoji)?);
        }
        let dialect = dir.join("dialect.tsv");
        if dialect.exists() {
            res = res.with_dialect(read_tsv(&dialect)?);
        }
        Ok(res)
    }
}

/// Read `surface<TAB>replacement` rows.
pub(crate) fn read_tsv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected `surface<TAB>replacement`".into(),
        })?;
        rows.push((key.to_string(), value.to_string()));
    }
    Ok(rows)
}

/// Per-language resources with a shared fallback.
#[derive(Debug, Clone, Default)]
pub struct ResourceSet {
    pub fallback: LanguageResources,
    pub languages: HashMap<String, LanguageResources>,
}

impl ResourceSet {
    pub fn for_lang(&self, lang: &str) -> &LanguageResources {
        self.languages.get(lang).unwrap_or(&self.fallback)
    }

    /// Files directly in `root` form the fallback; each subdirectory is a language tag.
    pub fn load_dir(root: &Path) -> Result<Self> {
        let fallback = LanguageResources::load_dir(root)?;
        let mut languages = HashMap::new();
        let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            let path = entry.path();
            if path.is_dir() {
                let lang = entry.file_name().to_string_lossy().into_owned();
                languages.insert(lang, LanguageResources::load_dir(&path)?);
            }
        }
        Ok(ResourceSet {
            fallback,
            languages,
        })
    }
}

fn replace_emoji(text: &str, emoji: &[(String, String)]) -> String {
    if emoji.is_empty() {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    'scan: while let Some(c) = rest.chars().next() {
        for (surface, description) in emoji {
            if rest.starts_with(surface.as_str()) {
                out.push(' ');
                out.push_str(description);
                out.push(' ');
                rest = &rest[surface.len()..];
                continue 'scan;
            }
        }
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

/// Whole-word dialect substitution. Words are delimited by whitespace and by configured
/// symbols, so `gr8!!` matches `gr8` the same way it will once the symbols are stripped.
fn replace_dialect(text: &str, res: &LanguageResources) -> String {
    if res.dialect.is_empty() {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        match res.dialect.get(word.as_str()) {
            Some(formal) => out.push_str(formal),
            None => out.push_str(word),
        }
        word.clear();
    };
    for c in text.chars() {
        if c.is_whitespace() || res.symbols.contains(&c) {
            flush(&mut word, &mut out);
            out.push(c);
        } else {
            word.push(c);
        }
    }
    flush(&mut word, &mut out);
    out
}

/// Normalize raw text. Steps run in a fixed order: URL strip, lowercase, emoji descriptions,
/// dialect substitution, symbol strip, stopword removal, whitespace collapse.
pub fn preprocess(text: &str, res: &LanguageResources) -> String {
    let text = url_pattern().replace_all(text, " ");
    let text = text.to_lowercase();
    let text = replace_emoji(&text, &res.emoji);
    let text = replace_dialect(&text, res);
    let text: String = text
        .chars()
        .map(|c| if res.symbols.contains(&c) { ' ' } else { c })
        .collect();
    text.split_whitespace()
        .filter(|tok| !res.stopwords.contains(*tok))
        .collect::<Vec<_>>()
        .join(" ")
}
