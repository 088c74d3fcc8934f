use std::collections::HashMap;
use std::fs;
use std::path::Path;

use log::warn;

use super::Example;
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    /// Whitespace token count before truncation.
    pub original_length: usize,
    /// Set when normalization left nothing; `tokens` is then a single PAD.
    pub degenerate: bool,
}

impl TokenSequence {
    pub fn from_ids(tokens: Vec<u32>) -> Self {
        let original_length = tokens.len();
        let degenerate = tokens.is_empty();
        let tokens = if degenerate { vec![PAD] } else { tokens };
        TokenSequence {
            tokens,
            original_length,
            degenerate,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    to_id: HashMap<String, u32>,
    to_token: Vec<String>,
    frozen: bool,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    /// An open vocabulary holding only PAD and UNK.
    pub fn new() -> Self {
        let mut vocab = Vocabulary {
            to_id: HashMap::new(),
            to_token: Vec::new(),
            frozen: false,
        };
        vocab.push(PAD_TOKEN);
        vocab.push(UNK_TOKEN);
        vocab
    }

    fn push(&mut self, token: &str) -> u32 {
        let id = self.to_token.len() as u32;
        self.to_id.insert(token.to_string(), id);
        self.to_token.push(token.to_string());
        id
    }

    /// Insert a token, returning its id. Frozen vocabularies reject new tokens.
    pub fn insert(&mut self, token: &str) -> Result<u32> {
        if let Some(&id) = self.to_id.get(token) {
            return Ok(id);
        }
        if self.frozen {
            return Err(Error::Config(format!(
                "vocabulary is frozen; cannot insert `{token}`"
            )));
        }
        Ok(self.push(token))
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn len(&self) -> usize {
        self.to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.to_id.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.to_token.get(id as usize).map(String::as_str)
    }

    /// One token per line in id order, specials included.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for token in &self.to_token {
            out.push_str(token);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(PAD_TOKEN) || lines.next() != Some(UNK_TOKEN) {
            return Err(Error::Config(
                "vocabulary file must start with <pad> and <unk>".into(),
            ));
        }
        let mut vocab = Vocabulary::new();
        for line in lines {
            if vocab.to_id.contains_key(line) {
                return Err(Error::Config(format!(
                    "duplicate vocabulary entry `{line}`"
                )));
            }
            vocab.push(line);
        }
        vocab.freeze();
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Frequency vocabulary over whitespace tokens. Tokens are ordered by descending frequency,
/// ties broken lexicographically; the result is frozen.
pub fn build_vocab(corpus: &[Example], min_freq: usize) -> Vocabulary {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for example in corpus {
        for tok in example.text.split_whitespace() {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(tok, n)| n >= min_freq && tok != PAD_TOKEN && tok != UNK_TOKEN)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if ranked.is_empty() {
        warn!("no token reaches min_freq={min_freq}; vocabulary holds only PAD/UNK");
    }
    let mut vocab = Vocabulary::new();
    for (tok, _) in ranked {
        vocab.push(tok);
    }
    vocab.freeze();
    vocab
}

pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    let words: Vec<&str> = text.split_whitespace().collect();
    let original_length = words.len();
    if words.is_empty() {
        return TokenSequence::from_ids(Vec::new());
    }
    let tokens = words
        .iter()
        .take(max_len.max(1))
        .map(|w| vocab.id_or_unk(w))
        .collect();
    TokenSequence {
        tokens,
        original_length,
        degenerate: false,
    }
}
