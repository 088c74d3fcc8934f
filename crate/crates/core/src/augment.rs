//! Token-level weak augmentation.
//!
//! Operators work on token ids so their output is always inside the vocabulary. Every operator
//! takes its randomness from an explicit rng; the training loop derives one stream per
//! (seed, epoch, example), which keeps augmentation independent of iteration order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Vocabulary, PAD, UNK};
use crate::error::{Error, Result};

/// First id that [`random_insert`] may draw as a fallback (ids below are PAD and UNK).
const FIRST_REAL_ID: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentOp {
    Swap,
    Insert,
    Delete,
    Substitute,
    Backtranslate,
}

impl AugmentOp {
    pub const ALL: [AugmentOp; 5] = [
        AugmentOp::Swap,
        AugmentOp::Insert,
        AugmentOp::Delete,
        AugmentOp::Substitute,
        AugmentOp::Backtranslate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugmentOp::Swap => "swap",
            AugmentOp::Insert => "insert",
            AugmentOp::Delete => "delete",
            AugmentOp::Substitute => "substitute",
            AugmentOp::Backtranslate => "backtranslate",
        }
    }

    pub fn parse(name: &str) -> Option<AugmentOp> {
        AugmentOp::ALL.into_iter().find(|op| op.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub ops_enabled: BTreeSet<AugmentOp>,
    pub n_swaps: usize,
    pub n_inserts: usize,
    pub delete_rate: f64,
    pub substitute_rate: f64,
    pub seed: u64,
}

impl Default for AugmentPolicy {
    /// Swap, insert, delete and substitute; back-translation is opt-in since it needs a
    /// translator.
    fn default() -> Self {
        AugmentPolicy {
            ops_enabled: [
                AugmentOp::Swap,
                AugmentOp::Insert,
                AugmentOp::Delete,
                AugmentOp::Substitute,
            ]
            .into_iter()
            .collect(),
            n_swaps: 1,
            n_inserts: 1,
            delete_rate: 0.1,
            substitute_rate: 0.1,
            seed: 42,
        }
    }
}

impl AugmentPolicy {
    pub fn disabled() -> Self {
        AugmentPolicy {
            ops_enabled: BTreeSet::new(),
            ..AugmentPolicy::default()
        }
    }

    pub fn is_enabled(&self, op: AugmentOp) -> bool {
        self.ops_enabled.contains(&op)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [
            ("delete_rate", self.delete_rate),
            ("substitute_rate", self.substitute_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!(
                    "{name} must be in [0, 1], got {rate}"
                )));
            }
        }
        Ok(())
    }
}

/// Same-meaning alternatives per token id. Loaded from `token<TAB>syn1,syn2,...`; entries
/// naming tokens outside the vocabulary are dropped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynonymLexicon {
    synonyms: BTreeMap<u32, Vec<u32>>,
}

impl SynonymLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, token: u32, synonyms: impl IntoIterator<Item = u32>) {
        let entry = self.synonyms.entry(token).or_default();
        for s in synonyms {
            if s != token && !entry.contains(&s) {
                entry.push(s);
            }
        }
        if entry.is_empty() {
            self.synonyms.remove(&token);
        }
    }

    pub fn synonyms(&self, token: u32) -> &[u32] {
        self.synonyms.get(&token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.synonyms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.synonyms.len()
    }

    pub fn from_tsv(text: &str, vocab: &Vocabulary) -> Result<Self> {
        Self::parse(text, vocab, Path::new("<memory>"))
    }

    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, vocab, path)
    }

    fn parse(text: &str, vocab: &Vocabulary, path: &Path) -> Result<Self> {
        let mut lex = SynonymLexicon::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (token, list) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected `token<TAB>synonym,...`".into(),
            })?;
            let Some(id) = vocab.id(token.trim()) else {
                continue;
            };
            let ids: Vec<u32> = list
                .split(',')
                .filter_map(|s| vocab.id(s.trim()))
                .filter(|&s| s != PAD && s != UNK)
                .collect();
            lex.insert(id, ids);
        }
        Ok(lex)
    }

    /// Render back to TSV using `vocab` for surface forms.
    pub fn to_tsv(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        for (token, syns) in &self.synonyms {
            let (Some(t), names) = (
                vocab.token(*token),
                syns.iter()
                    .filter_map(|s| vocab.token(*s))
                    .collect::<Vec<_>>(),
            ) else {
                continue;
            };
            out.push_str(t);
            out.push('\t');
            out.push_str(&names.join(","));
            out.push('\n');
        }
        out
    }
}

/// Exchange `n_swaps` pairs of distinct positions. For each swap `i` is uniform over all
/// positions and `j` uniform over the remaining ones.
pub fn random_swap<T: Clone, R: Rng + ?Sized>(tokens: &[T], n_swaps: usize, rng: &mut R) -> Vec<T> {
    let mut out = tokens.to_vec();
    let n = out.len();
    if n < 2 {
        return out;
    }
    for _ in 0..n_swaps {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        out.swap(i, j);
    }
    out
}

/// Drop each token when a uniform draw falls below `rate`. If every token would go, one
/// uniformly chosen token is kept.
pub fn random_delete<T: Clone, R: Rng + ?Sized>(tokens: &[T], rate: f64, rng: &mut R) -> Vec<T> {
    if tokens.is_empty() || rate <= 0.0 {
        return tokens.to_vec();
    }
    let kept: Vec<T> = tokens
        .iter()
        .filter(|_| rng.gen::<f64>() >= rate)
        .cloned()
        .collect();
    if kept.is_empty() {
        let keep = rng.gen_range(0..tokens.len());
        return vec![tokens[keep].clone()];
    }
    kept
}

/// Insert `n_inserts` tokens. Each one is a synonym of a uniformly chosen existing token, or a
/// uniform draw from the vocabulary ids `2..vocab_size` when that token has no synonyms; it
/// goes to a uniform position in `0..=len`.
pub fn random_insert<R: Rng + ?Sized>(
    tokens: &[u32],
    n_inserts: usize,
    lexicon: &SynonymLexicon,
    vocab_size: usize,
    rng: &mut R,
) -> Vec<u32> {
    let mut out = tokens.to_vec();
    let fallback = vocab_size > FIRST_REAL_ID as usize;
    for _ in 0..n_inserts {
        let synonyms = if out.is_empty() {
            &[][..]
        } else {
            lexicon.synonyms(out[rng.gen_range(0..out.len())])
        };
        let new = if !synonyms.is_empty() {
            synonyms[rng.gen_range(0..synonyms.len())]
        } else if fallback {
            rng.gen_range(FIRST_REAL_ID..vocab_size as u32)
        } else {
            return tokens.to_vec();
        };
        let at = rng.gen_range(0..=out.len());
        out.insert(at, new);
    }
    out
}

/// Replace each token that has synonyms, with probability `rate`, by a uniformly chosen one.
/// A draw is consumed for every position so the stream does not depend on the lexicon.
pub fn substitute<R: Rng + ?Sized>(
    tokens: &[u32],
    rate: f64,
    lexicon: &SynonymLexicon,
    rng: &mut R,
) -> Vec<u32> {
    if rate <= 0.0 {
        return tokens.to_vec();
    }
    tokens
        .iter()
        .map(|&t| {
            let hit = rng.gen::<f64>() < rate;
            let syns = lexicon.synonyms(t);
            if hit && !syns.is_empty() {
                syns[rng.gen_range(0..syns.len())]
            } else {
                t
            }
        })
        .collect()
}

pub trait Translator: Send + Sync {
    fn translate(
        &self,
        tokens: &[String],
        source_lang: &str,
        target_lang: &str,
    ) -> Result<Vec<String>>;

    /// Whether equal inputs always produce equal outputs.
    fn is_deterministic(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, tokens: &[String], _: &str, _: &str) -> Result<Vec<String>> {
        Ok(tokens.to_vec())
    }
}

/// Word-for-word stub backed by `source<TAB>pivot` pairs. Translating into the pivot language
/// uses the pairs left to right; translating out of it uses them right to left. Unlisted words
/// pass through.
#[derive(Debug, Clone, Default)]
pub struct DictionaryTranslator {
    pivot: String,
    forward: HashMap<String, String>,
    backward: HashMap<String, String>,
}

impl DictionaryTranslator {
    pub fn new<I, S, T>(pivot: &str, pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut tr = DictionaryTranslator {
            pivot: pivot.to_string(),
            ..Default::default()
        };
        for (a, b) in pairs {
            let (a, b) = (a.into(), b.into());
            tr.forward.entry(a.clone()).or_insert_with(|| b.clone());
            tr.backward.entry(b).or_insert(a);
        }
        tr
    }

    pub fn load(path: &Path, pivot: &str) -> Result<Self> {
        Ok(Self::new(pivot, crate::data::read_tsv(path)?))
    }

    pub fn pivot(&self) -> &str {
        &self.pivot
    }
}

impl Translator for DictionaryTranslator {
    fn translate(&self, tokens: &[String], source: &str, target: &str) -> Result<Vec<String>> {
        let table = if source == target {
            return Ok(tokens.to_vec());
        } else if target == self.pivot {
            &self.forward
        } else if source == self.pivot {
            &self.backward
        } else {
            return Err(Error::Translation(format!(
                "no dictionary between `{source}` and `{target}` (pivot is `{}`)",
                self.pivot
            )));
        };
        Ok(tokens
            .iter()
            .map(|t| table.get(t).cloned().unwrap_or_else(|| t.clone()))
            .collect())
    }
}

/// Counts back-translations that failed and were skipped.
#[derive(Debug, Default)]
pub struct SkipCounter(AtomicUsize);

impl SkipCounter {
    pub fn get(&self) -> usize {
        self.0.load(Ordering::Relaxed)
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }
}

/// Round trip `lang → pivot → lang`. A translator error leaves the tokens unchanged and bumps
/// `skipped`.
pub fn backtranslate(
    tokens: &[String],
    lang: &str,
    pivot: &str,
    translator: &dyn Translator,
    skipped: &SkipCounter,
) -> Vec<String> {
    let round_trip = translator
        .translate(tokens, lang, pivot)
        .and_then(|mid| translator.translate(&mid, pivot, lang));
    match round_trip {
        Ok(out) => out,
        Err(e) => {
            log::debug!("back-translation skipped: {e}");
            skipped.bump();
            tokens.to_vec()
        }
    }
}

/// What [`weak_augment`] needs besides the policy.
pub struct AugmentContext<'a> {
    pub vocab: &'a Vocabulary,
    pub lexicon: &'a SynonymLexicon,
    pub translator: &'a dyn Translator,
    pub pivot: String,
    pub skipped: SkipCounter,
}

impl<'a> AugmentContext<'a> {
    pub fn new(vocab: &'a Vocabulary, lexicon: &'a SynonymLexicon) -> Self {
        AugmentContext {
            vocab,
            lexicon,
            translator: &IdentityTranslator,
            pivot: "en".to_string(),
            skipped: SkipCounter::default(),
        }
    }

    pub fn with_translator(mut self, translator: &'a dyn Translator, pivot: &str) -> Self {
        self.translator = translator;
        self.pivot = pivot.to_string();
        self
    }
}

/// Apply the enabled operators in the order swap, insert, delete, substitute, back-translate.
/// Back-translated words missing from the vocabulary map to UNK.
pub fn weak_augment<R: Rng + ?Sized>(
    tokens: &[u32],
    lang: &str,
    policy: &AugmentPolicy,
    ctx: &AugmentContext<'_>,
    rng: &mut R,
) -> Vec<u32> {
    let mut out = tokens.to_vec();
    if policy.is_enabled(AugmentOp::Swap) {
        out = random_swap(&out, policy.n_swaps, rng);
    }
    if policy.is_enabled(AugmentOp::Insert) {
        out = random_insert(&out, policy.n_inserts, ctx.lexicon, ctx.vocab.len(), rng);
    }
    if policy.is_enabled(AugmentOp::Delete) {
        out = random_delete(&out, policy.delete_rate, rng);
    }
    if policy.is_enabled(AugmentOp::Substitute) {
        out = substitute(&out, policy.substitute_rate, ctx.lexicon, rng);
    }
    if policy.is_enabled(AugmentOp::Backtranslate) {
        let words: Vec<String> = out
            .iter()
            .map(|&id| ctx.vocab.token(id).unwrap_or("<unk>").to_string())
            .collect();
        let back = backtranslate(&words, lang, &ctx.pivot, ctx.translator, &ctx.skipped);
        out = back.iter().map(|w| ctx.vocab.id_or_unk(w)).collect();
    }
    out
}
