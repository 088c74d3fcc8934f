//! The teacher ensemble: seed/dropout-diversified teachers, soft voting, confidence filtering,
//! and EMA tracking of the student.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::TokenSequence;
use crate::error::{Error, Result};
use crate::model::fit::{fit_epochs, Sample, SgdSettings};
use crate::model::{Logits, Model, ParameterVector, ProbDist};
use crate::objective::{order_free_mean, uncertainty_from_logits, UncertaintyReport};
use crate::rng;

pub const DEFAULT_TEACHER_SEEDS: [u64; 3] = [42, 43, 44];
pub const DEFAULT_TEACHER_DROPOUTS: [f64; 3] = [0.1, 0.2, 0.3];
pub const DEFAULT_EMA_DECAY: f64 = 0.99;
pub const DEFAULT_MAX_UNCERTAINTY: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherBank {
    teachers: Vec<Model>,
    ema_decay: f64,
}

impl TeacherBank {
    pub fn new(teachers: Vec<Model>, ema_decay: f64) -> Result<Self> {
        if teachers.is_empty() {
            return Err(Error::Config(
                "a teacher bank needs at least one teacher".into(),
            ));
        }
        if !(0.0..=1.0).contains(&ema_decay) {
            return Err(Error::Config(format!(
                "ema_decay {ema_decay} outside [0, 1]"
            )));
        }
        let layout = teachers[0].params().layout();
        if teachers.iter().any(|t| t.params().layout() != layout) {
            return Err(Error::LayoutMismatch);
        }
        Ok(TeacherBank {
            teachers,
            ema_decay,
        })
    }

    pub fn teachers(&self) -> &[Model] {
        &self.teachers
    }

    pub fn len(&self) -> usize {
        self.teachers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.teachers.is_empty()
    }

    pub fn ema_decay(&self) -> f64 {
        self.ema_decay
    }

    /// θ_t ← d·θ_t + (1 − d)·θ_s for every teacher; each keeps its own dropout rate.
    pub fn ema_update(&mut self, student: &ParameterVector) -> Result<()> {
        for teacher in &self.teachers {
            teacher.params().ensure_same_layout(student)?;
        }
        let d = self.ema_decay;
        for teacher in &mut self.teachers {
            let params = teacher.params_mut();
            for (t, s) in params.values_mut().iter_mut().zip(student.values()) {
                *t = d * *t + (1.0 - d) * s;
            }
        }
        Ok(())
    }
}

/// Build one teacher per (seed, dropout) pair and warm each on the labeled pool.
///
/// Every teacher starts from `start`, normally the untrained student, so EMA later averages
/// parameters that live in the same basin. Teachers differ through their dropout rate and
/// through warmup shuffle and dropout streams keyed by `(run_seed, teacher seed)`.
#[allow(clippy::too_many_arguments)]
pub fn init_teachers(
    start: &Model,
    seeds: &[u64],
    dropouts: &[f64],
    ema_decay: f64,
    labeled: &[Sample<'_>],
    warmup_epochs: usize,
    sgd: SgdSettings,
    run_seed: u64,
) -> Result<TeacherBank> {
    if seeds.len() != dropouts.len() {
        return Err(Error::Config(format!(
            "{} teacher seeds but {} dropout rates",
            seeds.len(),
            dropouts.len()
        )));
    }
    if labeled.is_empty() {
        return Err(Error::Config(
            "teacher warmup needs a non-empty labeled pool".into(),
        ));
    }
    let teachers = seeds
        .iter()
        .zip(dropouts)
        .map(|(&seed, &dropout)| {
            let config = start.config().clone().with_seed(seed).with_dropout(dropout);
            let mut model = Model::from_parameters(config, start.params().clone())?;
            fit_epochs(
                &mut model,
                labeled,
                sgd,
                warmup_epochs,
                rng::stream_seed(run_seed, &[seed]),
                rng::tag("teacher-warmup"),
            )?;
            Ok(model)
        })
        .collect::<Result<Vec<_>>>()?;
    TeacherBank::new(teachers, ema_decay)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleVerdict {
    /// Corpus index.
    pub index: usize,
    pub example_id: String,
    pub mean_logits: Logits,
    pub mean_probs: ProbDist,
    pub predicted_label: usize,
    pub confidence: f64,
    pub report: UncertaintyReport,
}

/// Soft vote of all teachers in eval mode. Means are order-free, so teacher order does not
/// affect the verdict.
pub fn ensemble_predict(
    bank: &TeacherBank,
    index: usize,
    example_id: &str,
    input: &TokenSequence,
) -> Result<EnsembleVerdict> {
    let mut logits = Vec::with_capacity(bank.len());
    let mut probs = Vec::with_capacity(bank.len());
    for teacher in bank.teachers() {
        let (z, p) = teacher.predict(input)?;
        logits.push(z);
        probs.push(p);
    }
    let classes = logits[0].len();
    let mut column = vec![0.0; bank.len()];
    let mut mean_of = |rows: &[Vec<f64>], c: usize| {
        for (slot, row) in column.iter_mut().zip(rows) {
            *slot = row[c];
        }
        order_free_mean(&mut column)
    };
    let logit_rows: Vec<Vec<f64>> = logits.iter().map(|z| z.0.clone()).collect();
    let prob_rows: Vec<Vec<f64>> = probs.into_iter().map(|p| p.0).collect();
    let mean_logits = Logits((0..classes).map(|c| mean_of(&logit_rows, c)).collect());
    let mean_probs = ProbDist((0..classes).map(|c| mean_of(&prob_rows, c)).collect());
    let report = uncertainty_from_logits(&logits, bank.len())?;
    let predicted_label = mean_probs.argmax();
    let confidence = mean_probs.max();
    Ok(EnsembleVerdict {
        index,
        example_id: example_id.to_string(),
        mean_logits,
        mean_probs,
        predicted_label,
        confidence,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    #[serde(skip)]
    pub index: usize,
    #[serde(rename = "id")]
    pub example_id: String,
    pub label: usize,
    pub confidence: f64,
    pub uncertainty: f64,
    pub weight: f64,
    #[serde(rename = "epoch")]
    pub epoch_assigned: usize,
}

/// Keep verdicts with `confidence >= tau` and `uncertainty <= max_uncertainty`, in input order.
pub fn filter_pseudo_labels(
    verdicts: &[EnsembleVerdict],
    tau: f64,
    max_uncertainty: f64,
    epoch: usize,
) -> Vec<PseudoLabel> {
    verdicts
        .iter()
        .filter(|v| v.confidence >= tau && v.report.uncertainty <= max_uncertainty)
        .map(|v| PseudoLabel {
            index: v.index,
            example_id: v.example_id.clone(),
            label: v.predicted_label,
            confidence: v.confidence,
            uncertainty: v.report.uncertainty,
            weight: v.report.weight,
            epoch_assigned: epoch,
        })
        .collect()
}

/// JSONL: `{"id", "label", "confidence", "uncertainty", "weight", "epoch"}` per line.
pub fn write_pseudo_labels(path: &Path, labels: &[PseudoLabel]) -> Result<()> {
    let mut buf = Vec::new();
    for label in labels {
        serde_json::to_writer(&mut buf, label)?;
        buf.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}
