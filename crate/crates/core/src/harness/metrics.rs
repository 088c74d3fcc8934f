//! Accuracy and macro precision / recall / F1, and the per-epoch metrics log.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::NUM_CLASSES;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Macro-averaged scores over `max(NUM_CLASSES, largest label + 1)` classes. A class that is
/// never predicted has precision 0, one that never occurs has recall 0. F1 is the harmonic
/// mean of the macro precision and macro recall.
pub fn compute_metrics(predictions: &[usize], truths: &[usize]) -> Result<Scores> {
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            actual: predictions.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::Config("metrics need at least one example".into()));
    }
    let classes = predictions
        .iter()
        .chain(truths)
        .max()
        .map_or(NUM_CLASSES, |&m| (m + 1).max(NUM_CLASSES));
    let mut tp = vec![0usize; classes];
    let mut predicted = vec![0usize; classes];
    let mut actual = vec![0usize; classes];
    for (&p, &t) in predictions.iter().zip(truths) {
        predicted[p] += 1;
        actual[t] += 1;
        if p == t {
            tp[p] += 1;
        }
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = (0..classes)
        .map(|c| ratio(tp[c], predicted[c]))
        .sum::<f64>()
        / classes as f64;
    let recall = (0..classes).map(|c| ratio(tp[c], actual[c])).sum::<f64>() / classes as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Scores {
        accuracy: ratio(tp.iter().sum(), truths.len()),
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: String,
    pub scores: Scores,
    /// Threshold in force this epoch; `None` without pseudo-labeling.
    pub tau: Option<f64>,
    pub human: usize,
    pub pseudo: usize,
    pub unlabeled: usize,
    /// Mean uncertainty weight over the examples that carried one this epoch.
    pub mean_weight: Option<f64>,
}

pub const METRICS_HEADER: &str =
    "epoch,split,acc,precision,recall,f1,tau,human,pseudo,unlabeled,mean_weight";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Floats are written in shortest round-trip form so equal logs mean equal values.
pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let s = &r.scores;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.split,
            s.accuracy,
            s.precision,
            s.recall,
            s.f1,
            opt(r.tau),
            r.human,
            r.pseudo,
            r.unlabeled,
            opt(r.mean_weight)
        );
    }
    out
}
