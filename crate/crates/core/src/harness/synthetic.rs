//! Desk-scale synthetic corpora: several "languages" with disjoint vocabularies, each holding
//! class-signal words and neutral filler.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use std::fs;
use std::path::Path;

use crate::data::{Example, LanguageResources, ResourceSet, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_examples: usize,
    pub n_languages: usize,
    /// Distinct signal words per class and language.
    pub signal_vocab: usize,
    /// Signal words per example; odd keeps the majority rule free of ties.
    pub signal_tokens: usize,
    pub filler_vocab: usize,
    pub filler_tokens: usize,
    /// Probability that a signal slot carries a word of the other class.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_examples: 2000,
            n_languages: 4,
            signal_vocab: 300,
            signal_tokens: 3,
            filler_vocab: 20,
            filler_tokens: 4,
            noise_rate: 0.05,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_languages == 0 || self.signal_vocab == 0 || self.signal_tokens == 0 {
            return Err(Error::Config(
                "synthetic corpus needs at least one language, signal word and signal slot".into(),
            ));
        }
        if self.filler_tokens > 0 && self.filler_vocab == 0 {
            return Err(Error::Config(
                "filler tokens requested but filler_vocab is 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::Config(format!(
                "noise_rate {} outside [0, 1]",
                self.noise_rate
            )));
        }
        Ok(())
    }
}

pub fn signal_word(lang: usize, class: usize, j: usize) -> String {
    format!("l{lang}c{class}w{j}")
}

pub fn filler_word(lang: usize, j: usize) -> String {
    format!("l{lang}f{j}")
}

pub fn language_name(lang: usize) -> String {
    format!("l{lang}")
}

/// Example `i` belongs to language `i % n_languages`; its class, words and order come from a
/// stream keyed by `(seed, i)`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<Example>> {
    spec.validate()?;
    Ok((0..spec.n_examples)
        .map(|i| {
            let mut rng = rng::stream(spec.seed, &[rng::tag("synthetic"), i as u64]);
            let lang = i % spec.n_languages;
            let class = rng.gen_range(0..NUM_CLASSES);
            let mut words = Vec::with_capacity(spec.signal_tokens + spec.filler_tokens);
            for _ in 0..spec.signal_tokens {
                let c = if rng.gen::<f64>() < spec.noise_rate {
                    1 - class
                } else {
                    class
                };
                words.push(signal_word(lang, c, rng.gen_range(0..spec.signal_vocab)));
            }
            for _ in 0..spec.filler_tokens {
                words.push(filler_word(lang, rng.gen_range(0..spec.filler_vocab)));
            }
            words.shuffle(&mut rng);
            Example::new(format!("syn-{i:05}"), words.join(" "), Some(class))
                .with_lang(language_name(lang))
        })
        .collect())
}

/// Per-language resources that list each language's filler words as stopwords, the way a
/// real pipeline strips function words.
pub fn synthetic_resources(spec: &SyntheticSpec) -> ResourceSet {
    let languages = (0..spec.n_languages)
        .map(|lang| {
            let stopwords = (0..spec.filler_vocab).map(|j| filler_word(lang, j));
            (
                language_name(lang),
                LanguageResources::default().with_stopwords(stopwords),
            )
        })
        .collect();
    ResourceSet {
        fallback: LanguageResources::default(),
        languages,
    }
}

/// Write the stopword lists of [`synthetic_resources`] as `dir/<lang>/stopwords.txt`.
pub fn write_synthetic_resources(dir: &Path, spec: &SyntheticSpec) -> Result<()> {
    for lang in 0..spec.n_languages {
        let sub = dir.join(language_name(lang));
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let words: Vec<String> = (0..spec.filler_vocab)
            .map(|j| filler_word(lang, j))
            .collect();
        let path = sub.join("stopwords.txt");
        fs::write(&path, words.join("\n") + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// The separability rule: the class whose signal words occur more often (class 0 on ties).
pub fn count_rule(text: &str) -> usize {
    let mut counts = [0usize; NUM_CLASSES];
    for word in text.split_whitespace() {
        if let Some(rest) = word.strip_prefix('l') {
            let digits = rest.trim_start_matches(|c: char| c.is_ascii_digit());
            if let Some(c) = digits.strip_prefix('c').and_then(|r| r.split('w').next()) {
                if let Ok(c) = c.parse::<usize>() {
                    if c < NUM_CLASSES {
                        counts[c] += 1;
                    }
                }
            }
        }
    }
    usize::from(counts[1] > counts[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let spec = SyntheticSpec::default();
        assert_eq!(
            generate_synthetic(&spec).unwrap(),
            generate_synthetic(&spec).unwrap()
        );
        let other = SyntheticSpec { seed: 8, ..spec };
        assert_ne!(
            generate_synthetic(&spec).unwrap(),
            generate_synthetic(&other).unwrap()
        );
    }

    #[test]
    fn noiseless_examples_hold_only_own_words() {
        let spec = SyntheticSpec {
            noise_rate: 0.0,
            n_examples: 300,
            ..SyntheticSpec::default()
        };
        for ex in generate_synthetic(&spec).unwrap() {
            let lang = ex.lang.trim_start_matches('l');
            let own = format!("l{lang}c{}w", ex.label.unwrap());
            let filler = format!("l{lang}f");
            assert!(ex
                .text
                .split_whitespace()
                .all(|w| w.starts_with(&own) || w.starts_with(&filler)));
        }
    }

    #[test]
    fn round_robin_languages() {
        let spec = SyntheticSpec::default();
        let corpus = generate_synthetic(&spec).unwrap();
        for lang in 0..4 {
            let n = corpus
                .iter()
                .filter(|e| e.lang == language_name(lang))
                .count();
            assert!(n.abs_diff(500) <= 1);
        }
    }

    #[test]
    fn count_rule_separates() {
        let corpus = generate_synthetic(&SyntheticSpec::default()).unwrap();
        let correct = corpus
            .iter()
            .filter(|e| count_rule(&e.text) == e.label.unwrap())
            .count();
        assert!(correct as f64 / corpus.len() as f64 >= 0.95);
        assert_eq!(count_rule("l3c1w4 l3c0w2 l3c1w9 l3f1"), 1);
        assert_eq!(count_rule("l3c0w4 l3f1"), 0);
    }

    #[test]
    fn resources_strip_filler() {
        let spec = SyntheticSpec::default();
        let res = synthetic_resources(&spec);
        let ex = &generate_synthetic(&spec).unwrap()[5];
        let clean = crate::data::preprocess(&ex.text, res.for_lang(&ex.lang));
        assert_eq!(clean.split_whitespace().count(), spec.signal_tokens);

        let dir = tempfile::tempdir().unwrap();
        write_synthetic_resources(dir.path(), &spec).unwrap();
        let loaded = ResourceSet::load_dir(dir.path()).unwrap();
        assert_eq!(
            crate::data::preprocess(&ex.text, loaded.for_lang(&ex.lang)),
            clean
        );
    }

    #[test]
    fn invalid_specs() {
        let bad = SyntheticSpec {
            signal_tokens: 0,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&bad).is_err());
        let bad = SyntheticSpec {
            noise_rate: 2.0,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&bad).is_err());
    }
}
