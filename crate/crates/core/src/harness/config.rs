//! Training configuration and its `key = value` text format.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::augment::{AugmentOp, AugmentPolicy};
use crate::ensemble::{
    DEFAULT_EMA_DECAY, DEFAULT_MAX_UNCERTAINTY, DEFAULT_TEACHER_DROPOUTS, DEFAULT_TEACHER_SEEDS,
};
use crate::error::{Error, Result};
use crate::ipl::{RecheckPolicy, ThresholdSchedule};
use crate::objective::LossWeights;

/// Switches that each remove one mechanism of the semi-supervised loop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablation {
    /// Consistency inputs are not augmented.
    pub no_augment: bool,
    /// No promotions or demotions; the pseudo-labeled pool stays empty.
    pub no_ipl: bool,
    /// Every uncertainty weight is 1.
    pub no_uncertainty: bool,
    /// A single teacher built from the first seed/dropout pair.
    pub no_ensemble: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossWeights,
    pub ema_decay: f64,
    pub schedule: ThresholdSchedule,
    pub recheck: RecheckPolicy,
    pub cap_fraction: f64,
    pub max_uncertainty: f64,
    pub augment: AugmentPolicy,
    pub teacher_seeds: Vec<u64>,
    pub teacher_dropouts: Vec<f64>,
    pub student_dropout: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Supervised epochs for teachers and student before the first semi-supervised epoch.
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub hidden_layer: bool,
    pub max_len: usize,
    pub min_freq: usize,
    pub ablation: Ablation,
    pub pivot_lang: String,
    pub translator_dict: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub resources: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossWeights::default(),
            ema_decay: DEFAULT_EMA_DECAY,
            schedule: ThresholdSchedule::default(),
            recheck: RecheckPolicy::default(),
            cap_fraction: 0.5,
            max_uncertainty: DEFAULT_MAX_UNCERTAINTY,
            augment: AugmentPolicy::default(),
            teacher_seeds: DEFAULT_TEACHER_SEEDS.to_vec(),
            teacher_dropouts: DEFAULT_TEACHER_DROPOUTS.to_vec(),
            student_dropout: 0.1,
            lr: 0.05,
            epochs: 30,
            warmup_epochs: 5,
            batch_size: 32,
            seed: 42,
            embed_dim: 32,
            hidden_dim: 32,
            hidden_layer: false,
            max_len: 64,
            min_freq: 1,
            ablation: Ablation::default(),
            pivot_lang: "en".into(),
            translator_dict: None,
            lexicon: None,
            resources: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "cannot parse `{value}` for `{key}` as a boolean"
        ))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl TrainConfig {
    /// Every key accepted by [`TrainConfig::set`].
    pub const KEYS: &'static [&'static str] = &[
        "alpha_sup",
        "beta_cons",
        "ema_decay",
        "tau0",
        "tau_min",
        "tau_decay",
        "accuracy_gate",
        "recheck_period",
        "demote_margin",
        "cap_fraction",
        "max_uncertainty",
        "augment_ops",
        "n_swaps",
        "n_inserts",
        "delete_rate",
        "substitute_rate",
        "teacher_seeds",
        "teacher_dropouts",
        "student_dropout",
        "lr",
        "epochs",
        "warmup_epochs",
        "batch_size",
        "seed",
        "embed_dim",
        "hidden_dim",
        "hidden_layer",
        "max_len",
        "min_freq",
        "no_augment",
        "no_ipl",
        "no_uncertainty",
        "no_ensemble",
        "pivot_lang",
        "translator_dict",
        "lexicon",
        "resources",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "alpha_sup" => self.loss.alpha_sup = parse(key, value)?,
            "beta_cons" => self.loss.beta_cons = parse(key, value)?,
            "ema_decay" => self.ema_decay = parse(key, value)?,
            "tau0" => self.schedule.tau0 = parse(key, value)?,
            "tau_min" => self.schedule.tau_min = parse(key, value)?,
            "tau_decay" => self.schedule.decay_per_epoch = parse(key, value)?,
            "accuracy_gate" => self.schedule.accuracy_gate = parse(key, value)?,
            "recheck_period" => self.recheck.period = parse(key, value)?,
            "demote_margin" => self.recheck.demote_margin = parse(key, value)?,
            "cap_fraction" => self.cap_fraction = parse(key, value)?,
            "max_uncertainty" => self.max_uncertainty = parse(key, value)?,
            "augment_ops" => {
                self.augment.ops_enabled = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        AugmentOp::parse(s)
                            .ok_or_else(|| Error::Config(format!("unknown augmentation `{s}`")))
                    })
                    .collect::<Result<_>>()?
            }
            "n_swaps" => self.augment.n_swaps = parse(key, value)?,
            "n_inserts" => self.augment.n_inserts = parse(key, value)?,
            "delete_rate" => self.augment.delete_rate = parse(key, value)?,
            "substitute_rate" => self.augment.substitute_rate = parse(key, value)?,
            "teacher_seeds" => self.teacher_seeds = parse_list(key, value)?,
            "teacher_dropouts" => self.teacher_dropouts = parse_list(key, value)?,
            "student_dropout" => self.student_dropout = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "warmup_epochs" => self.warmup_epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "hidden_layer" => self.hidden_layer = parse_bool(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "min_freq" => self.min_freq = parse(key, value)?,
            "no_augment" => self.ablation.no_augment = parse_bool(key, value)?,
            "no_ipl" => self.ablation.no_ipl = parse_bool(key, value)?,
            "no_uncertainty" => self.ablation.no_uncertainty = parse_bool(key, value)?,
            "no_ensemble" => self.ablation.no_ensemble = parse_bool(key, value)?,
            "pivot_lang" => self.pivot_lang = value.to_string(),
            "translator_dict" => self.translator_dict = opt_path(value),
            "lexicon" => self.lexicon = opt_path(value),
            "resources" => self.resources = opt_path(value),
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Apply `key = value` lines on top of `self`. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text, Path::new("<config>"))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = TrainConfig::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// Apply a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(key.trim(), value)
    }

    /// Render every key; [`TrainConfig::from_text`] reads it back to an equal config.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let ops: Vec<&str> = self
            .augment
            .ops_enabled
            .iter()
            .map(|op| op.name())
            .collect();
        let pairs: Vec<(&str, String)> = vec![
            ("alpha_sup", self.loss.alpha_sup.to_string()),
            ("beta_cons", self.loss.beta_cons.to_string()),
            ("ema_decay", self.ema_decay.to_string()),
            ("tau0", self.schedule.tau0.to_string()),
            ("tau_min", self.schedule.tau_min.to_string()),
            ("tau_decay", self.schedule.decay_per_epoch.to_string()),
            ("accuracy_gate", self.schedule.accuracy_gate.to_string()),
            ("recheck_period", self.recheck.period.to_string()),
            ("demote_margin", self.recheck.demote_margin.to_string()),
            ("cap_fraction", self.cap_fraction.to_string()),
            ("max_uncertainty", self.max_uncertainty.to_string()),
            ("augment_ops", ops.join(",")),
            ("n_swaps", self.augment.n_swaps.to_string()),
            ("n_inserts", self.augment.n_inserts.to_string()),
            ("delete_rate", self.augment.delete_rate.to_string()),
            ("substitute_rate", self.augment.substitute_rate.to_string()),
            ("teacher_seeds", join(&self.teacher_seeds)),
            ("teacher_dropouts", join(&self.teacher_dropouts)),
            ("student_dropout", self.student_dropout.to_string()),
            ("lr", self.lr.to_string()),
            ("epochs", self.epochs.to_string()),
            ("warmup_epochs", self.warmup_epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("hidden_layer", self.hidden_layer.to_string()),
            ("max_len", self.max_len.to_string()),
            ("min_freq", self.min_freq.to_string()),
            ("no_augment", self.ablation.no_augment.to_string()),
            ("no_ipl", self.ablation.no_ipl.to_string()),
            ("no_uncertainty", self.ablation.no_uncertainty.to_string()),
            ("no_ensemble", self.ablation.no_ensemble.to_string()),
            ("pivot_lang", self.pivot_lang.clone()),
            ("translator_dict", path(&self.translator_dict)),
            ("lexicon", path(&self.lexicon)),
            ("resources", path(&self.resources)),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.schedule.validate()?;
        self.augment.validate()?;
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!(
                "ema_decay {} outside [0, 1]",
                self.ema_decay
            )));
        }
        if !(self.cap_fraction >= 0.0 && self.cap_fraction.is_finite()) {
            return Err(Error::Config("cap_fraction must be >= 0".into()));
        }
        if self.max_uncertainty.is_nan() || self.max_uncertainty < 0.0 {
            return Err(Error::Config("max_uncertainty must be >= 0".into()));
        }
        if self.teacher_seeds.is_empty() || self.teacher_seeds.len() != self.teacher_dropouts.len()
        {
            return Err(Error::Config(format!(
                "need matching non-empty teacher_seeds ({}) and teacher_dropouts ({})",
                self.teacher_seeds.len(),
                self.teacher_dropouts.len()
            )));
        }
        for &p in self.teacher_dropouts.iter().chain([&self.student_dropout]) {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("dropout rate {p} outside [0, 1)")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr {} must be > 0", self.lr)));
        }
        if self.batch_size == 0 || self.max_len == 0 || self.embed_dim == 0 {
            return Err(Error::Config(
                "batch_size, max_len and embed_dim must be > 0".into(),
            ));
        }
        if self.hidden_layer && self.hidden_dim == 0 {
            return Err(Error::Config(
                "hidden_dim must be > 0 with hidden_layer".into(),
            ));
        }
        Ok(())
    }
}
