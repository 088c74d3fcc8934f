//! The full model against its four single-switch ablations over paired seeds.

use std::fmt::Write as _;

use super::config::{Ablation, TrainConfig};
use super::metrics::Scores;
use super::train::{train, Prepared};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoAugment,
    NoIpl,
    NoUncertainty,
    NoEnsemble,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoAugment,
        Variant::NoIpl,
        Variant::NoUncertainty,
        Variant::NoEnsemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoAugment => "no_augment",
            Variant::NoIpl => "no_ipl",
            Variant::NoUncertainty => "no_uncertainty",
            Variant::NoEnsemble => "no_ensemble",
        }
    }

    /// `base` with this variant's switch turned on and the others off.
    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.ablation = Ablation {
            no_augment: self == Variant::NoAugment,
            no_ipl: self == Variant::NoIpl,
            no_uncertainty: self == Variant::NoUncertainty,
            no_ensemble: self == Variant::NoEnsemble,
        };
        cfg
    }
}

/// One paired trial: a run seed and the prepared data every variant trains on.
pub struct Trial {
    pub seed: u64,
    pub data: Prepared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    /// `None` marks the mean over seeds.
    pub seed: Option<u64>,
    pub scores: Scores,
}

/// Final-epoch test scores of every variant on every trial, followed by one mean row per
/// variant.
pub fn ablate(base: &TrainConfig, trials: &[Trial]) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(Variant::ALL.len() * (trials.len() + 1));
    for variant in Variant::ALL {
        for trial in trials {
            let mut cfg = variant.configure(base);
            cfg.seed = trial.seed;
            let outcome = train(&cfg, &trial.data)?;
            let scores = outcome.final_test().expect("at least one epoch");
            log::info!(
                "{} seed {}: f1 {:.4}",
                variant.name(),
                trial.seed,
                scores.f1
            );
            rows.push(AblationRow {
                variant,
                seed: Some(trial.seed),
                scores,
            });
        }
    }
    for variant in Variant::ALL {
        let per_seed: Vec<Scores> = rows
            .iter()
            .filter(|r| r.variant == variant)
            .map(|r| r.scores)
            .collect();
        if per_seed.is_empty() {
            continue;
        }
        let n = per_seed.len() as f64;
        let mean = |f: fn(&Scores) -> f64| per_seed.iter().map(f).sum::<f64>() / n;
        rows.push(AblationRow {
            variant,
            seed: None,
            scores: Scores {
                accuracy: mean(|s| s.accuracy),
                precision: mean(|s| s.precision),
                recall: mean(|s| s.recall),
                f1: mean(|s| s.f1),
            },
        });
    }
    Ok(rows)
}

pub const ABLATION_HEADER: &str = "variant,seed,acc,precision,recall,f1";

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(ABLATION_HEADER);
    out.push('\n');
    for r in rows {
        let seed = r.seed.map_or_else(|| "mean".to_string(), |s| s.to_string());
        let s = &r.scores;
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.4},{:.4},{:.4}",
            r.variant.name(),
            seed,
            s.accuracy,
            s.precision,
            s.recall,
            s.f1
        );
    }
    out
}

/// Mean F1 per variant, in [`Variant::ALL`] order.
pub fn mean_f1(rows: &[AblationRow]) -> Vec<(Variant, f64)> {
    rows.iter()
        .filter(|r| r.seed.is_none())
        .map(|r| (r.variant, r.scores.f1))
        .collect()
}
