//! Minibatch SGD over labeled samples, shared by teacher warmup, student warmup and the
//! supervised part of the semi-supervised loop.

use rand::seq::SliceRandom;

use super::{Mode, Model, ParameterVector};
use crate::data::TokenSequence;
use crate::error::{Error, Result};
use crate::objective::cross_entropy;
use crate::rng;

/// A labeled input with a per-example loss scale. `key` identifies the example (its corpus
/// index) and keys its dropout stream.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub key: u64,
    pub input: &'a TokenSequence,
    pub label: usize,
    pub weight: f64,
}

/// Add `alpha / |batch| * Σ weight·∇CE` to `grad`; returns the batch's weighted mean CE.
pub fn accumulate_supervised(
    model: &Model,
    batch: &[Sample<'_>],
    alpha: f64,
    dropout_seed: u64,
    grad: &mut ParameterVector,
) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for sample in batch {
        let mut rng = rng::stream(dropout_seed, &[sample.key]);
        let out = model.forward(sample.input, Mode::Train, &mut rng)?;
        let (ce, g) = cross_entropy(&out.probs, sample.label)?;
        loss += sample.weight * ce;
        model.accumulate_gradient(&out.cache, &g, alpha * sample.weight / n, grad)?;
    }
    Ok(loss / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdSettings {
    pub lr: f64,
    pub batch_size: usize,
    pub alpha: f64,
}

/// Plain supervised epochs: per-epoch shuffle, fixed-size batches (last partial batch kept),
/// one SGD step per batch. `phase` separates the random streams of different callers.
pub fn fit_epochs(
    model: &mut Model,
    samples: &[Sample<'_>],
    settings: SgdSettings,
    epochs: usize,
    seed: u64,
    phase: u64,
) -> Result<()> {
    let batch_size = settings.batch_size.max(1);
    let mut grad = model.zero_gradient();
    for epoch in 0..epochs {
        let mut order: Vec<Sample<'_>> = samples.to_vec();
        order.shuffle(&mut rng::stream(
            seed,
            &[phase, rng::tag("shuffle"), epoch as u64],
        ));
        let dropout_seed = rng::stream_seed(seed, &[phase, rng::tag("dropout"), epoch as u64]);
        for (b, batch) in order.chunks(batch_size).enumerate() {
            grad.fill(0.0);
            let loss =
                accumulate_supervised(model, batch, settings.alpha, dropout_seed, &mut grad)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    diagnostics: format!("parameter norm {:.6e}", model.params().l2_norm()),
                });
            }
            model.sgd_step(&grad, settings.lr)?;
        }
    }
    Ok(())
}

/// Fraction of `samples` whose eval-mode argmax equals the label.
pub fn accuracy(model: &Model, samples: &[Sample<'_>]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for s in samples {
        let (_, probs) = model.predict(s.input)?;
        correct += usize::from(probs.argmax() == s.label);
    }
    Ok(correct as f64 / samples.len() as f64)
}
