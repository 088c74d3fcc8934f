//! Corpus ingestion, text normalization, tokenization and stratified pool splits.

mod corpus;
mod preprocess;
pub(crate) use preprocess::read_tsv;
mod split;
mod vocab;

pub use corpus::{read_corpus, read_corpus_str, write_corpus, Example, NUM_CLASSES};
pub use preprocess::{preprocess, LanguageResources, ResourceSet};
pub use split::{stratified_split, SplitFractions, SplitManifest, SplitPools};
pub use vocab::{build_vocab, tokenize, TokenSequence, Vocabulary, PAD, UNK};
