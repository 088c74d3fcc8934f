//! Orchestration: configuration, the training loop, metrics, synthetic corpora, ablations and
//! the command-line interface.

pub mod ablate;
pub mod cli;
pub mod config;
pub mod metrics;
pub mod synthetic;
pub mod train;

pub use ablate::{ablate, ablation_csv, AblationRow, Trial, Variant};
pub use config::{Ablation, TrainConfig};
pub use metrics::{compute_metrics, metrics_csv, EpochMetrics, Scores, METRICS_HEADER};
pub use synthetic::{
    generate_synthetic, synthetic_resources, write_synthetic_resources, SyntheticSpec,
};
pub use train::{
    encode, load_resources, train, train_supervised, write_run, Prepared, TrainOutcome,
};
