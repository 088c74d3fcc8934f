//! Semi-supervised text classification with an uncertainty-aware ensemble of teachers.
//!
//! Three seed-diversified teacher models soft-vote pseudo-labels for unlabeled text. A student
//! is trained on human labels, admitted pseudo-labels, and a consistency term that pulls its
//! logits on weakly augmented inputs towards the ensemble mean, each example scaled by how much
//! the teachers agree. Teachers track the student through an exponential moving average.
//!
//! Module map:
//!
//! - [`data`]: corpus ingestion, normalization, vocabulary, stratified splits
//! - [`model`]: embedding / mean-pool / dropout / dense classifier with analytic gradients
//! - [`objective`]: cross-entropy, consistency MSE, teacher-variance uncertainty, total loss
//! - [`ensemble`]: teacher bank, soft voting, confidence filtering, EMA tracking
//! - [`ipl`]: incremental pseudo-labeling pools, dynamic threshold, cap, re-check
//! - [`augment`]: token-level weak augmentation and back-translation hooks
//! - [`harness`]: configuration, training loop, metrics, synthetic corpora, ablations, CLI

pub mod augment;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod ipl;
pub mod model;
pub mod objective;
pub mod rng;

pub use error::{Error, Result};
