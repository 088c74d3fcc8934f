//! Small trainable text classifier: embedding → masked mean pool → (optional ReLU layer) →
//! inverted dropout → dense layer → softmax. Gradients are computed analytically.

mod checkpoint;
pub mod fit;
mod params;

use rand::Rng;

pub use checkpoint::{load_checkpoint, save_checkpoint, save_checkpoint_f32, FORMAT_VERSION};
pub use params::{LayoutEntry, ParameterLayout, ParameterVector};

use crate::data::{TokenSequence, PAD};
use crate::error::{Error, Result};
use crate::rng;

pub const EMBEDDING: &str = "embedding";
pub const HIDDEN_WEIGHT: &str = "hidden.weight";
pub const HIDDEN_BIAS: &str = "hidden.bias";
pub const DENSE_WEIGHT: &str = "dense.weight";
pub const DENSE_BIAS: &str = "dense.bias";

const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    /// Insert a `hidden_dim` ReLU layer between pooling and dropout.
    pub hidden_layer: bool,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            embed_dim: 32,
            hidden_dim: 32,
            num_classes: 2,
            dropout_rate: 0.1,
            seed: 42,
            hidden_layer: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 1 || self.embed_dim < 1 || self.hidden_dim < 1 {
            return Err(Error::Config("model dimensions must be at least 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Width of the vector fed to the dense head.
    pub fn feature_dim(&self) -> usize {
        if self.hidden_layer {
            self.hidden_dim
        } else {
            self.embed_dim
        }
    }

    pub fn layout(&self) -> ParameterLayout {
        let mut blocks = vec![(EMBEDDING, self.vocab_size, self.embed_dim)];
        if self.hidden_layer {
            blocks.push((HIDDEN_WEIGHT, self.hidden_dim, self.embed_dim));
            blocks.push((HIDDEN_BIAS, 1, self.hidden_dim));
        }
        blocks.push((DENSE_WEIGHT, self.num_classes, self.feature_dim()));
        blocks.push((DENSE_BIAS, 1, self.num_classes));
        ParameterLayout::new(&blocks)
    }
}

/// Per-class scores before softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(pub Vec<f64>);

impl Logits {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbDist(pub Vec<f64>);

impl ProbDist {
    /// Max-subtracted softmax.
    pub fn softmax(logits: &Logits) -> Self {
        let max = logits.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.0.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        ProbDist(exps.into_iter().map(|e| e / sum).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest probability; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Intermediate values kept by [`Model::forward`] for [`Model::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layout_len: usize,
    feature_dim: usize,
    /// Non-PAD token ids that entered the pool.
    pooled_tokens: Vec<u32>,
    pooled: Vec<f64>,
    hidden_pre: Option<Vec<f64>>,
    /// Inverted-dropout multipliers, all 1.0 in eval mode.
    mask: Vec<f64>,
    features: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Logits,
    pub probs: ProbDist,
    pub cache: ForwardCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParameterVector,
}

impl Model {
    /// Uniform(-0.1, 0.1) initialization drawn from the config seed; the PAD row is zero.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParameterVector::zeros(config.layout());
        let mut rng = rng::stream(config.seed, &[rng::tag("init")]);
        for v in params.values_mut() {
            *v = rng.gen_range(-INIT_RANGE..INIT_RANGE);
        }
        params.block_mut(EMBEDDING)[..config.embed_dim].fill(0.0);
        Ok(Model { config, params })
    }

    pub fn from_parameters(config: ModelConfig, params: ParameterVector) -> Result<Self> {
        config.validate()?;
        if *params.layout() != config.layout() {
            return Err(Error::LayoutMismatch);
        }
        Ok(Model { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterVector {
        &self.params
    }

    pub fn set_parameters(&mut self, params: ParameterVector) -> Result<()> {
        self.params.ensure_same_layout(&params)?;
        self.params = params;
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParameterVector {
        &mut self.params
    }

    pub fn zero_gradient(&self) -> ParameterVector {
        ParameterVector::zeros(self.params.layout().clone())
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &TokenSequence,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        let dropout = match mode {
            Mode::Train if self.config.dropout_rate > 0.0 => Some(self.config.dropout_rate),
            _ => None,
        };
        let keep_scale = dropout.map(|p| 1.0 / (1.0 - p));
        self.forward_with(input, |_| match (dropout, keep_scale) {
            (Some(p), Some(scale)) => {
                if rng.gen::<f64>() < p {
                    0.0
                } else {
                    scale
                }
            }
            _ => 1.0,
        })
    }

    /// Eval-mode forward pass; needs no random stream.
    pub fn predict(&self, input: &TokenSequence) -> Result<(Logits, ProbDist)> {
        let out = self.forward_with(input, |_| 1.0)?;
        Ok((out.logits, out.probs))
    }

    fn forward_with(
        &self,
        input: &TokenSequence,
        mut mask_for: impl FnMut(usize) -> f64,
    ) -> Result<ForwardOutput> {
        let cfg = &self.config;
        let e_dim = cfg.embed_dim;
        let embedding = self.params.block(EMBEDDING);

        let mut pooled = vec![0.0; e_dim];
        let mut pooled_tokens = Vec::with_capacity(input.tokens.len());
        for &tok in &input.tokens {
            if tok as usize >= cfg.vocab_size {
                return Err(Error::TokenOutOfRange {
                    token: tok,
                    vocab_size: cfg.vocab_size,
                });
            }
            if tok == PAD {
                continue;
            }
            pooled_tokens.push(tok);
            let row = &embedding[tok as usize * e_dim..(tok as usize + 1) * e_dim];
            for (p, e) in pooled.iter_mut().zip(row) {
                *p += e;
            }
        }
        if !pooled_tokens.is_empty() {
            let n = pooled_tokens.len() as f64;
            pooled.iter_mut().for_each(|p| *p /= n);
        }

        let (hidden_pre, activations) = if cfg.hidden_layer {
            let w = self.params.block(HIDDEN_WEIGHT);
            let b = self.params.block(HIDDEN_BIAS);
            let pre: Vec<f64> = (0..cfg.hidden_dim)
                .map(|h| {
                    let row = &w[h * e_dim..(h + 1) * e_dim];
                    b[h] + row.iter().zip(&pooled).map(|(a, x)| a * x).sum::<f64>()
                })
                .collect();
            let act = pre.iter().map(|&v| v.max(0.0)).collect();
            (Some(pre), act)
        } else {
            (None, pooled.clone())
        };

        let f_dim = cfg.feature_dim();
        let mask: Vec<f64> = (0..f_dim).map(&mut mask_for).collect();
        let features: Vec<f64> = activations.iter().zip(&mask).map(|(a, m)| a * m).collect();

        let w = self.params.block(DENSE_WEIGHT);
        let b = self.params.block(DENSE_BIAS);
        let logits = Logits(
            (0..cfg.num_classes)
                .map(|c| {
                    let row = &w[c * f_dim..(c + 1) * f_dim];
                    b[c] + row.iter().zip(&features).map(|(a, x)| a * x).sum::<f64>()
                })
                .collect(),
        );
        let probs = ProbDist::softmax(&logits);
        Ok(ForwardOutput {
            logits,
            probs,
            cache: ForwardCache {
                layout_len: self.params.len(),
                feature_dim: f_dim,
                pooled_tokens,
                pooled,
                hidden_pre,
                mask,
                features,
            },
        })
    }

    /// Gradient of a loss with respect to every parameter, given its gradient with respect to
    /// the logits of the forward pass that produced `cache`.
    pub fn backward(&self, cache: &ForwardCache, grad_logits: &[f64]) -> Result<ParameterVector> {
        let mut grad = self.zero_gradient();
        self.accumulate_gradient(cache, grad_logits, 1.0, &mut grad)?;
        Ok(grad)
    }

    /// `into += scale * backward(cache, grad_logits)`, touching only rows the input used.
    pub fn accumulate_gradient(
        &self,
        cache: &ForwardCache,
        grad_logits: &[f64],
        scale: f64,
        into: &mut ParameterVector,
    ) -> Result<()> {
        let cfg = &self.config;
        if cache.layout_len != self.params.len()
            || cache.feature_dim != cfg.feature_dim()
            || cache.hidden_pre.is_some() != cfg.hidden_layer
            || cache.pooled.len() != cfg.embed_dim
            || cache
                .pooled_tokens
                .iter()
                .any(|&t| t as usize >= cfg.vocab_size)
        {
            return Err(Error::CacheMismatch);
        }
        if grad_logits.len() != cfg.num_classes {
            return Err(Error::DimensionMismatch {
                expected: cfg.num_classes,
                actual: grad_logits.len(),
            });
        }
        self.params.ensure_same_layout(into)?;

        let f_dim = cfg.feature_dim();
        let e_dim = cfg.embed_dim;
        let g: Vec<f64> = grad_logits.iter().map(|v| v * scale).collect();

        let w = self.params.block(DENSE_WEIGHT);
        let mut grad_features = vec![0.0; f_dim];
        for (c, &gc) in g.iter().enumerate() {
            let row = &w[c * f_dim..(c + 1) * f_dim];
            for (gf, wv) in grad_features.iter_mut().zip(row) {
                *gf += gc * wv;
            }
        }
        {
            let gw = into.block_mut(DENSE_WEIGHT);
            for (c, &gc) in g.iter().enumerate() {
                for (gv, x) in gw[c * f_dim..(c + 1) * f_dim]
                    .iter_mut()
                    .zip(&cache.features)
                {
                    *gv += gc * x;
                }
            }
        }
        for (gb, gc) in into.block_mut(DENSE_BIAS).iter_mut().zip(&g) {
            *gb += gc;
        }

        // through dropout
        let grad_act: Vec<f64> = grad_features
            .iter()
            .zip(&cache.mask)
            .map(|(gf, m)| gf * m)
            .collect();

        let grad_pooled = match &cache.hidden_pre {
            Some(pre) => {
                let grad_pre: Vec<f64> = grad_act
                    .iter()
                    .zip(pre)
                    .map(|(ga, &p)| if p > 0.0 { *ga } else { 0.0 })
                    .collect();
                {
                    let gw = into.block_mut(HIDDEN_WEIGHT);
                    for (h, &gp) in grad_pre.iter().enumerate() {
                        for (gv, x) in gw[h * e_dim..(h + 1) * e_dim].iter_mut().zip(&cache.pooled)
                        {
                            *gv += gp * x;
                        }
                    }
                }
                for (gb, gp) in into.block_mut(HIDDEN_BIAS).iter_mut().zip(&grad_pre) {
                    *gb += gp;
                }
                let w1 = self.params.block(HIDDEN_WEIGHT);
                let mut gp_out = vec![0.0; e_dim];
                for (h, &gp) in grad_pre.iter().enumerate() {
                    for (o, wv) in gp_out.iter_mut().zip(&w1[h * e_dim..(h + 1) * e_dim]) {
                        *o += gp * wv;
                    }
                }
                gp_out
            }
            None => grad_act,
        };

        if !cache.pooled_tokens.is_empty() {
            let inv_n = 1.0 / cache.pooled_tokens.len() as f64;
            let ge = into.block_mut(EMBEDDING);
            for &tok in &cache.pooled_tokens {
                let row = &mut ge[tok as usize * e_dim..(tok as usize + 1) * e_dim];
                for (gv, gp) in row.iter_mut().zip(&grad_pooled) {
                    *gv += gp * inv_n;
                }
            }
        }
        Ok(())
    }

    /// θ ← θ − lr·g
    pub fn sgd_step(&mut self, grad: &ParameterVector, lr: f64) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {lr} must be >= 0")));
        }
        self.params.axpy(-lr, grad)
    }
}
