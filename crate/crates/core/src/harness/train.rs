//! The semi-supervised training loop and the plain supervised baseline.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use super::config::TrainConfig;
use super::metrics::{compute_metrics, metrics_csv, EpochMetrics, Scores};
use crate::augment::{
    weak_augment, AugmentContext, DictionaryTranslator, IdentityTranslator, SynonymLexicon,
    Translator,
};
use crate::data::{
    build_vocab, preprocess, tokenize, Example, ResourceSet, SplitPools, TokenSequence, Vocabulary,
    NUM_CLASSES,
};
use crate::ensemble::{
    ensemble_predict, filter_pseudo_labels, init_teachers, write_pseudo_labels, EnsembleVerdict,
    PseudoLabel, TeacherBank,
};
use crate::error::{Error, Result};
use crate::ipl::{pool_log_csv, training_view, PoolLogRow, PoolState};
use crate::model::fit::{accumulate_supervised, fit_epochs, Sample, SgdSettings};
use crate::model::{save_checkpoint, Mode, Model, ModelConfig};
use crate::objective::{consistency_mse, order_free_mean};
use crate::rng::{self, tag};

/// Normalization resources named by `config`, or the empty set.
pub fn load_resources(config: &TrainConfig) -> Result<ResourceSet> {
    match &config.resources {
        Some(dir) => ResourceSet::load_dir(dir),
        None => Ok(ResourceSet::default()),
    }
}

/// Normalize and tokenize `corpus` against an existing vocabulary, as training does.
pub fn encode(
    corpus: &[Example],
    resources: &ResourceSet,
    vocab: &Vocabulary,
    max_len: usize,
) -> Vec<TokenSequence> {
    corpus
        .iter()
        .map(|ex| {
            tokenize(
                &preprocess(&ex.text, resources.for_lang(&ex.lang)),
                vocab,
                max_len,
            )
        })
        .collect()
}

/// A corpus after normalization and tokenization, with its split.
pub struct Prepared {
    pub corpus: Vec<Example>,
    pub vocab: Vocabulary,
    pub inputs: Vec<TokenSequence>,
    pub pools: SplitPools,
    pub lexicon: SynonymLexicon,
    pub translator: Box<dyn Translator>,
}

impl Prepared {
    /// Normalize every text, build the vocabulary from the labeled and unlabeled pools only,
    /// and tokenize. Resources, lexicon and translator come from the paths in `config`.
    pub fn new(config: &TrainConfig, corpus: Vec<Example>, pools: SplitPools) -> Result<Self> {
        Self::with_resources(config, corpus, pools, &load_resources(config)?)
    }

    /// As [`Prepared::new`], with normalization resources supplied directly.
    pub fn with_resources(
        config: &TrainConfig,
        corpus: Vec<Example>,
        pools: SplitPools,
        resources: &ResourceSet,
    ) -> Result<Self> {
        pools.check_partition(corpus.len())?;
        let normalized: Vec<String> = corpus
            .iter()
            .map(|ex| preprocess(&ex.text, resources.for_lang(&ex.lang)))
            .collect();
        let train_side: Vec<Example> = pools
            .labeled
            .iter()
            .chain(&pools.unlabeled)
            .map(|&i| Example::new(corpus[i].id.clone(), normalized[i].clone(), None))
            .collect();
        let vocab = build_vocab(&train_side, config.min_freq);
        let inputs = normalized
            .iter()
            .map(|t| tokenize(t, &vocab, config.max_len))
            .collect();
        let lexicon = match &config.lexicon {
            Some(path) => SynonymLexicon::load(path, &vocab)?,
            None => SynonymLexicon::new(),
        };
        let translator: Box<dyn Translator> = match &config.translator_dict {
            Some(path) => Box::new(DictionaryTranslator::load(path, &config.pivot_lang)?),
            None => Box::new(IdentityTranslator),
        };
        Ok(Prepared {
            corpus,
            vocab,
            inputs,
            pools,
            lexicon,
            translator,
        })
    }

    /// Labels visible to training: human labels of the labeled pool, `None` elsewhere.
    fn training_labels(&self) -> Vec<Option<usize>> {
        let mut labels = vec![None; self.corpus.len()];
        for &i in &self.pools.labeled {
            labels[i] = self.corpus[i].label;
        }
        labels
    }

    fn labeled_samples(&self) -> Result<Vec<Sample<'_>>> {
        self.pools
            .labeled
            .iter()
            .map(|&i| {
                let label = self.corpus[i]
                    .label
                    .ok_or_else(|| Error::MissingLabel(self.corpus[i].id.clone()))?;
                Ok(Sample {
                    key: i as u64,
                    input: &self.inputs[i],
                    label,
                    weight: 1.0,
                })
            })
            .collect()
    }

    /// Scores of `model` on the corpus examples at `indices`.
    pub fn evaluate(&self, model: &Model, indices: &[usize]) -> Result<Scores> {
        let mut predictions = Vec::with_capacity(indices.len());
        let mut truths = Vec::with_capacity(indices.len());
        for &i in indices {
            let truth = self.corpus[i]
                .label
                .ok_or_else(|| Error::MissingLabel(self.corpus[i].id.clone()))?;
            let (_, probs) = model.predict(&self.inputs[i])?;
            predictions.push(probs.argmax());
            truths.push(truth);
        }
        compute_metrics(&predictions, &truths)
    }

    fn model_config(&self, config: &TrainConfig) -> ModelConfig {
        ModelConfig {
            vocab_size: self.vocab.len(),
            embed_dim: config.embed_dim,
            hidden_dim: config.hidden_dim,
            num_classes: NUM_CLASSES,
            dropout_rate: config.student_dropout,
            seed: config.seed,
            hidden_layer: config.hidden_layer,
        }
    }
}

pub struct TrainOutcome {
    pub student: Model,
    /// `None` for the supervised baseline.
    pub teachers: Option<TeacherBank>,
    pub metrics: Vec<EpochMetrics>,
    pub pool_log: Vec<PoolLogRow>,
    pub pseudo_labels: Vec<PseudoLabel>,
    /// Back-translations skipped because the translator failed.
    pub augment_skips: usize,
}

impl TrainOutcome {
    /// Test-split scores of the last epoch.
    pub fn final_test(&self) -> Option<Scores> {
        self.metrics
            .iter()
            .rev()
            .find(|m| m.split == "test")
            .map(|m| m.scores)
    }
}

fn sgd_settings(config: &TrainConfig) -> SgdSettings {
    SgdSettings {
        lr: config.lr,
        batch_size: config.batch_size,
        alpha: config.loss.alpha_sup,
    }
}

fn non_finite(epoch: usize, batch: usize, student: &Model, bank: Option<&TeacherBank>) -> Error {
    let mut diagnostics = format!("student parameter norm {:.6e}", student.params().l2_norm());
    for (k, t) in bank
        .map(TeacherBank::teachers)
        .unwrap_or(&[])
        .iter()
        .enumerate()
    {
        diagnostics.push_str(&format!(", teacher {k} norm {:.6e}", t.params().l2_norm()));
    }
    Error::NonFiniteLoss {
        epoch,
        batch,
        diagnostics,
    }
}

struct EpochCounts<'a> {
    epoch: usize,
    tau: Option<f64>,
    human: usize,
    pseudo: usize,
    unlabeled: usize,
    mean_weight: Option<f64>,
    data: &'a Prepared,
}

impl EpochCounts<'_> {
    fn rows(&self, student: &Model) -> Result<[EpochMetrics; 2]> {
        let row = |split: &str, scores| EpochMetrics {
            epoch: self.epoch,
            split: split.to_string(),
            scores,
            tau: self.tau,
            human: self.human,
            pseudo: self.pseudo,
            unlabeled: self.unlabeled,
            mean_weight: self.mean_weight,
        };
        Ok([
            row(
                "train",
                self.data.evaluate(student, &self.data.pools.labeled)?,
            ),
            row("test", self.data.evaluate(student, &self.data.pools.test)?),
        ])
    }
}

/// Student trained on the labeled pool alone: the same warmup, per-epoch shuffle, batching and
/// dropout streams as [`train`], with no teachers, pseudo-labels or consistency term.
pub fn train_supervised(config: &TrainConfig, data: &Prepared) -> Result<TrainOutcome> {
    config.validate()?;
    let sgd = sgd_settings(config);
    let labeled = data.labeled_samples()?;
    let by_index: BTreeMap<usize, Sample<'_>> =
        labeled.iter().map(|s| (s.key as usize, *s)).collect();
    let mut student = Model::new(data.model_config(config))?;
    fit_epochs(
        &mut student,
        &labeled,
        sgd,
        config.warmup_epochs,
        config.seed,
        tag("student-warmup"),
    )?;

    let mut grad = student.zero_gradient();
    let mut metrics = Vec::new();
    let mut pool_log = Vec::new();
    for epoch in 0..config.epochs {
        let mut order: Vec<Sample<'_>> = by_index.values().copied().collect();
        order.shuffle(&mut rng::stream(config.seed, &[tag("view"), epoch as u64]));
        let dropout_seed =
            rng::stream_seed(config.seed, &[tag("student"), tag("dropout"), epoch as u64]);
        for (b, batch) in order.chunks(sgd.batch_size).enumerate() {
            grad.fill(0.0);
            let loss = accumulate_supervised(&student, batch, sgd.alpha, dropout_seed, &mut grad)?;
            if !loss.is_finite() {
                return Err(non_finite(epoch, b, &student, None));
            }
            student.sgd_step(&grad, sgd.lr)?;
        }
        let counts = EpochCounts {
            epoch,
            tau: None,
            human: data.pools.labeled.len(),
            pseudo: 0,
            unlabeled: data.pools.unlabeled.len(),
            mean_weight: None,
            data,
        };
        metrics.extend(counts.rows(&student)?);
        pool_log.push(PoolLogRow {
            epoch,
            tau: None,
            human: counts.human,
            pseudo: 0,
            unlabeled: counts.unlabeled,
            promoted: 0,
            deferred: 0,
            demoted: 0,
        });
    }
    Ok(TrainOutcome {
        student,
        teachers: None,
        metrics,
        pool_log,
        pseudo_labels: Vec::new(),
        augment_skips: 0,
    })
}

/// One consistency example: the ensemble's clean-input mean logits and uncertainty weight.
struct Target<'a> {
    index: usize,
    verdict: &'a EnsembleVerdict,
}

/// The semi-supervised loop. Per epoch: ensemble verdicts on every not-yet-human-labeled
/// example, filtering at the current threshold, promotion under the cap, the periodic
/// re-check, then minibatch SGD on the weighted supervised loss plus the weighted consistency
/// loss, with an EMA update of every teacher after each step.
pub fn train(config: &TrainConfig, data: &Prepared) -> Result<TrainOutcome> {
    config.validate()?;
    let ab = config.ablation;
    let sgd = sgd_settings(config);
    let labeled = data.labeled_samples()?;
    let labels = data.training_labels();
    let base = data.model_config(config);

    let mut student = Model::new(base)?;
    let n_teachers = if ab.no_ensemble {
        1
    } else {
        config.teacher_seeds.len()
    };
    let mut bank = init_teachers(
        &student,
        &config.teacher_seeds[..n_teachers],
        &config.teacher_dropouts[..n_teachers],
        config.ema_decay,
        &labeled,
        config.warmup_epochs,
        sgd,
        config.seed,
    )?;
    fit_epochs(
        &mut student,
        &labeled,
        sgd,
        config.warmup_epochs,
        config.seed,
        tag("student-warmup"),
    )?;

    let mut state = PoolState::new(
        data.pools.labeled.iter().copied(),
        data.pools.unlabeled.iter().copied(),
        config.cap_fraction,
    )?;
    let mut policy = config.augment.clone();
    policy.seed = config.seed;
    let ctx = AugmentContext::new(&data.vocab, &data.lexicon)
        .with_translator(data.translator.as_ref(), &config.pivot_lang);
    let beta = config.loss.beta_cons;
    let use_ipl = !ab.no_ipl;

    let mut train_accuracy = crate::model::fit::accuracy(&student, &labeled)?;
    let mut grad = student.zero_gradient();
    let mut metrics = Vec::new();
    let mut pool_log = Vec::new();

    for epoch in 0..config.epochs {
        state.epoch = epoch;
        let tau = use_ipl.then(|| config.schedule.current_tau(epoch, train_accuracy));

        // Verdicts of the epoch-start teachers on everything not human-labeled. Promotion and
        // demotion only move examples inside this set.
        let mut verdicts: BTreeMap<usize, EnsembleVerdict> = BTreeMap::new();
        if use_ipl || beta > 0.0 {
            let candidates = state
                .unlabeled_remaining()
                .iter()
                .chain(state.pseudo_labeled().keys())
                .copied()
                .filter(|&i| !data.inputs[i].degenerate);
            for i in candidates {
                let mut v = ensemble_predict(&bank, i, &data.corpus[i].id, &data.inputs[i])?;
                if ab.no_uncertainty {
                    v.report.weight = 1.0;
                }
                verdicts.insert(i, v);
            }
        }

        let (mut promoted, mut deferred, mut demoted) = (0, 0, 0);
        if let Some(tau) = tau {
            let open: Vec<EnsembleVerdict> = state
                .unlabeled_remaining()
                .iter()
                .filter_map(|i| verdicts.get(i).cloned())
                .collect();
            let accepted = filter_pseudo_labels(&open, tau, config.max_uncertainty, epoch);
            let report = state.promote(accepted)?;
            promoted = report.admitted.len();
            deferred = report.deferred.len();
            if config.recheck.is_due(epoch) {
                let report = state.recheck_with(tau, config.recheck.demote_margin, |pl| {
                    verdicts.get(&pl.index).cloned().ok_or_else(|| {
                        Error::Pool(format!("no verdict for pseudo-labeled `{}`", pl.example_id))
                    })
                })?;
                demoted = report.demoted.len();
            }
            state.check_invariants()?;
        }

        let view = training_view(&state, &labels, config.seed, epoch)?;
        let samples: Vec<Sample<'_>> = view
            .iter()
            .map(|item| Sample {
                key: item.index as u64,
                input: &data.inputs[item.index],
                label: item.label,
                weight: item.weight,
            })
            .collect();
        let mut targets: Vec<Target<'_>> = if beta > 0.0 {
            verdicts
                .iter()
                .map(|(&index, verdict)| Target { index, verdict })
                .collect()
        } else {
            Vec::new()
        };
        targets.shuffle(&mut rng::stream(
            config.seed,
            &[tag("consistency"), epoch as u64],
        ));

        let mut carried: Vec<f64> = targets.iter().map(|t| t.verdict.report.weight).collect();
        carried.extend(view.iter().filter(|it| it.pseudo).map(|it| it.weight));
        let mean_weight = (!carried.is_empty()).then(|| order_free_mean(&mut carried));

        let n_batches = samples.len().div_ceil(sgd.batch_size).max(1);
        let sup_dropout =
            rng::stream_seed(config.seed, &[tag("student"), tag("dropout"), epoch as u64]);
        let cons_dropout =
            rng::stream_seed(config.seed, &[tag("consistency-dropout"), epoch as u64]);
        for b in 0..n_batches {
            grad.fill(0.0);
            let lo = (b * sgd.batch_size).min(samples.len());
            let hi = ((b + 1) * sgd.batch_size).min(samples.len());
            let sup = accumulate_supervised(
                &student,
                &samples[lo..hi],
                sgd.alpha,
                sup_dropout,
                &mut grad,
            )?;

            let chunk =
                &targets[b * targets.len() / n_batches..(b + 1) * targets.len() / n_batches];
            let mut cons = 0.0;
            for t in chunk {
                let original = &data.inputs[t.index];
                let augmented;
                let input = if ab.no_augment {
                    original
                } else {
                    let mut arng =
                        rng::stream(policy.seed, &[tag("augment"), epoch as u64, t.index as u64]);
                    let lang = &data.corpus[t.index].lang;
                    augmented = TokenSequence::from_ids(weak_augment(
                        &original.tokens,
                        lang,
                        &policy,
                        &ctx,
                        &mut arng,
                    ));
                    &augmented
                };
                let out = student.forward(
                    input,
                    Mode::Train,
                    &mut rng::stream(cons_dropout, &[t.index as u64]),
                )?;
                let (mse, g) = consistency_mse(&out.logits, &t.verdict.mean_logits)?;
                let w = t.verdict.report.weight;
                cons += w * mse;
                student.accumulate_gradient(
                    &out.cache,
                    &g,
                    beta * w / chunk.len() as f64,
                    &mut grad,
                )?;
            }
            if !chunk.is_empty() {
                cons /= chunk.len() as f64;
            }
            let total = sgd.alpha * sup + beta * cons;
            if !total.is_finite() {
                return Err(non_finite(epoch, b, &student, Some(&bank)));
            }
            student.sgd_step(&grad, sgd.lr)?;
            bank.ema_update(student.params())?;
        }

        let counts = EpochCounts {
            epoch,
            tau,
            human: state.human_labeled().len(),
            pseudo: state.pseudo_labeled().len(),
            unlabeled: state.unlabeled_remaining().len(),
            mean_weight,
            data,
        };
        let rows = counts.rows(&student)?;
        train_accuracy = rows[0].scores.accuracy;
        log::debug!(
            "epoch {epoch}: train acc {:.4}, test f1 {:.4}, pseudo {}",
            rows[0].scores.accuracy,
            rows[1].scores.f1,
            counts.pseudo
        );
        metrics.extend(rows);
        pool_log.push(PoolLogRow {
            epoch,
            tau,
            human: counts.human,
            pseudo: counts.pseudo,
            unlabeled: counts.unlabeled,
            promoted,
            deferred,
            demoted,
        });
    }

    Ok(TrainOutcome {
        student,
        pseudo_labels: state.pseudo_labeled().values().cloned().collect(),
        teachers: Some(bank),
        metrics,
        pool_log,
        augment_skips: ctx.skipped.get(),
    })
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const POOL_LOG_FILE: &str = "pool_log.csv";
pub const STUDENT_FILE: &str = "student.ckpt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const PSEUDO_FILE: &str = "pseudo_labels.jsonl";
pub const CONFIG_FILE: &str = "config.txt";

pub fn teacher_file(k: usize) -> String {
    format!("teacher{k}.ckpt")
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Write every run artifact into `dir`, creating it if needed.
pub fn write_run(
    dir: &Path,
    config: &TrainConfig,
    data: &Prepared,
    outcome: &TrainOutcome,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join(METRICS_FILE), metrics_csv(&outcome.metrics))?;
    write(&dir.join(POOL_LOG_FILE), pool_log_csv(&outcome.pool_log))?;
    write(&dir.join(STUDENT_FILE), save_checkpoint(&outcome.student))?;
    if let Some(bank) = &outcome.teachers {
        for (k, t) in bank.teachers().iter().enumerate() {
            write(&dir.join(teacher_file(k)), save_checkpoint(t))?;
        }
    }
    data.vocab.save(&dir.join(VOCAB_FILE))?;
    write_pseudo_labels(&dir.join(PSEUDO_FILE), &outcome.pseudo_labels)?;
    write(&dir.join(CONFIG_FILE), config.to_text())
}
