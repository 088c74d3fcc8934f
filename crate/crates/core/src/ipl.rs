//! Incremental pseudo-labeling: the dynamic confidence threshold, promotion of confident
//! unlabeled examples under a cap, and periodic re-checks that demote stale pseudo-labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::data::TokenSequence;
use crate::ensemble::{ensemble_predict, EnsembleVerdict, PseudoLabel, TeacherBank};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSchedule {
    pub tau0: f64,
    pub tau_min: f64,
    pub decay_per_epoch: f64,
    pub accuracy_gate: f64,
}

impl Default for ThresholdSchedule {
    fn default() -> Self {
        ThresholdSchedule {
            tau0: 0.92,
            tau_min: 0.80,
            decay_per_epoch: 0.01,
            accuracy_gate: 0.70,
        }
    }
}

impl ThresholdSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.tau_min && self.tau_min <= self.tau0 && self.tau0 <= 1.0) {
            return Err(Error::Config(format!(
                "threshold schedule needs 0 < tau_min ({}) <= tau0 ({}) <= 1",
                self.tau_min, self.tau0
            )));
        }
        if self.decay_per_epoch.is_nan() || self.decay_per_epoch < 0.0 {
            return Err(Error::Config("decay_per_epoch must be >= 0".into()));
        }
        Ok(())
    }

    /// Linear decay from `tau0` towards `tau_min`, held at `tau0` while the student's
    /// training accuracy is below the gate.
    pub fn current_tau(&self, epoch: usize, train_accuracy: f64) -> f64 {
        if train_accuracy < self.accuracy_gate {
            return self.tau0;
        }
        (self.tau0 - self.decay_per_epoch * epoch as f64).max(self.tau_min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecheckPolicy {
    pub period: usize,
    pub demote_margin: f64,
}

impl Default for RecheckPolicy {
    fn default() -> Self {
        RecheckPolicy {
            period: 5,
            demote_margin: 0.05,
        }
    }
}

impl RecheckPolicy {
    /// Re-checks run on positive multiples of the period; period 0 disables them.
    pub fn is_due(&self, epoch: usize) -> bool {
        self.period > 0 && epoch > 0 && epoch.is_multiple_of(self.period)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolState {
    human_labeled: BTreeSet<usize>,
    pseudo_labeled: BTreeMap<usize, PseudoLabel>,
    unlabeled_remaining: BTreeSet<usize>,
    cap_fraction: f64,
    pub epoch: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromotionReport {
    pub admitted: Vec<usize>,
    pub deferred: Vec<usize>,
    pub human: usize,
    pub pseudo: usize,
    pub unlabeled: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DemotionReport {
    pub rechecked: usize,
    pub demoted: Vec<usize>,
}

impl PoolState {
    pub fn new(
        human_labeled: impl IntoIterator<Item = usize>,
        unlabeled: impl IntoIterator<Item = usize>,
        cap_fraction: f64,
    ) -> Result<Self> {
        if !(cap_fraction >= 0.0 && cap_fraction.is_finite()) {
            return Err(Error::Config(format!(
                "cap_fraction {cap_fraction} must be >= 0"
            )));
        }
        let state = PoolState {
            human_labeled: human_labeled.into_iter().collect(),
            pseudo_labeled: BTreeMap::new(),
            unlabeled_remaining: unlabeled.into_iter().collect(),
            cap_fraction,
            epoch: 0,
        };
        state.check_invariants()?;
        Ok(state)
    }

    pub fn human_labeled(&self) -> &BTreeSet<usize> {
        &self.human_labeled
    }

    pub fn pseudo_labeled(&self) -> &BTreeMap<usize, PseudoLabel> {
        &self.pseudo_labeled
    }

    pub fn unlabeled_remaining(&self) -> &BTreeSet<usize> {
        &self.unlabeled_remaining
    }

    pub fn cap_fraction(&self) -> f64 {
        self.cap_fraction
    }

    /// Largest pseudo-labeled count allowed: ⌊cap_fraction · |human_labeled|⌋.
    pub fn cap(&self) -> usize {
        (self.cap_fraction * self.human_labeled.len() as f64 + 1e-9).floor() as usize
    }

    pub fn total(&self) -> usize {
        self.human_labeled.len() + self.pseudo_labeled.len() + self.unlabeled_remaining.len()
    }

    pub fn check_invariants(&self) -> Result<()> {
        if let Some(i) = self
            .human_labeled
            .iter()
            .find(|i| self.unlabeled_remaining.contains(i) || self.pseudo_labeled.contains_key(i))
        {
            return Err(Error::Pool(format!(
                "human-labeled index {i} in another pool"
            )));
        }
        if let Some(i) = self
            .pseudo_labeled
            .keys()
            .find(|i| self.unlabeled_remaining.contains(i))
        {
            return Err(Error::Pool(format!(
                "pseudo-labeled index {i} still unlabeled"
            )));
        }
        if self.pseudo_labeled.len() > self.cap() {
            return Err(Error::Pool(format!(
                "{} pseudo-labels exceed the cap of {}",
                self.pseudo_labeled.len(),
                self.cap()
            )));
        }
        Ok(())
    }

    fn report(&self, admitted: Vec<usize>, deferred: Vec<usize>) -> PromotionReport {
        PromotionReport {
            admitted,
            deferred,
            human: self.human_labeled.len(),
            pseudo: self.pseudo_labeled.len(),
            unlabeled: self.unlabeled_remaining.len(),
        }
    }

    /// Move accepted examples from the unlabeled pool into the pseudo-labeled ledger, highest
    /// confidence first (ties by id), until the cap is reached. The rest are deferred and stay
    /// unlabeled. Fails without changing state if an id is duplicated or not unlabeled.
    pub fn promote(&mut self, accepted: Vec<PseudoLabel>) -> Result<PromotionReport> {
        let mut seen = BTreeSet::new();
        for label in &accepted {
            if !seen.insert(label.index) {
                return Err(Error::Pool(format!(
                    "example `{}` accepted twice",
                    label.example_id
                )));
            }
            if !self.unlabeled_remaining.contains(&label.index) {
                return Err(Error::Pool(format!(
                    "example `{}` is not in the unlabeled pool",
                    label.example_id
                )));
            }
        }
        let mut ranked = accepted;
        ranked.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then_with(|| a.example_id.cmp(&b.example_id))
                .then(a.index.cmp(&b.index))
        });
        let headroom = self.cap().saturating_sub(self.pseudo_labeled.len());
        let mut admitted = Vec::new();
        let mut deferred = Vec::new();
        for (rank, label) in ranked.into_iter().enumerate() {
            if rank < headroom {
                self.unlabeled_remaining.remove(&label.index);
                admitted.push(label.index);
                self.pseudo_labeled.insert(label.index, label);
            } else {
                deferred.push(label.index);
            }
        }
        Ok(self.report(admitted, deferred))
    }

    /// Re-score every pseudo-labeled example. An entry is demoted back to the unlabeled pool
    /// when the ensemble now predicts another class, or its probability for the stored label
    /// falls below `tau - demote_margin`. Survivors keep their label and take the new scores.
    pub fn recheck_with(
        &mut self,
        tau: f64,
        demote_margin: f64,
        mut score: impl FnMut(&PseudoLabel) -> Result<EnsembleVerdict>,
    ) -> Result<DemotionReport> {
        let bound = tau - demote_margin;
        let mut report = DemotionReport::default();
        let mut refreshed = BTreeMap::new();
        for (&index, label) in &self.pseudo_labeled {
            let verdict = score(label)?;
            report.rechecked += 1;
            let stored_prob = verdict
                .mean_probs
                .as_slice()
                .get(label.label)
                .copied()
                .unwrap_or(0.0);
            if verdict.predicted_label != label.label || stored_prob < bound {
                report.demoted.push(index);
            } else {
                let mut kept = label.clone();
                kept.confidence = stored_prob;
                kept.uncertainty = verdict.report.uncertainty;
                kept.weight = verdict.report.weight;
                refreshed.insert(index, kept);
            }
        }
        for &index in &report.demoted {
            self.unlabeled_remaining.insert(index);
        }
        self.pseudo_labeled = refreshed;
        Ok(report)
    }

    pub fn recheck(
        &mut self,
        bank: &TeacherBank,
        inputs: &[TokenSequence],
        tau: f64,
        demote_margin: f64,
    ) -> Result<DemotionReport> {
        self.recheck_with(tau, demote_margin, |label| {
            let input = inputs
                .get(label.index)
                .ok_or_else(|| Error::Pool(format!("index {} outside corpus", label.index)))?;
            ensemble_predict(bank, label.index, &label.example_id, input)
        })
    }
}

/// One supervised training item: human-labeled (weight 1) or pseudo-labeled (its weight).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainItem {
    pub index: usize,
    pub label: usize,
    pub weight: f64,
    pub pseudo: bool,
}

/// Human-labeled examples with their true labels plus the pseudo-labeled ledger, shuffled
/// deterministically from `(seed, epoch)`. `labels` is the training-facing label view.
pub fn training_view(
    state: &PoolState,
    labels: &[Option<usize>],
    seed: u64,
    epoch: usize,
) -> Result<Vec<TrainItem>> {
    let mut items = Vec::with_capacity(state.human_labeled.len() + state.pseudo_labeled.len());
    for &index in &state.human_labeled {
        let label = labels
            .get(index)
            .copied()
            .flatten()
            .ok_or_else(|| Error::Pool(format!("human-labeled index {index} has no label")))?;
        items.push(TrainItem {
            index,
            label,
            weight: 1.0,
            pseudo: false,
        });
    }
    for (&index, pl) in &state.pseudo_labeled {
        items.push(TrainItem {
            index,
            label: pl.label,
            weight: pl.weight,
            pseudo: true,
        });
    }
    items.shuffle(&mut rng::stream(seed, &[rng::tag("view"), epoch as u64]));
    Ok(items)
}

/// One row of the per-epoch pool log.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolLogRow {
    pub epoch: usize,
    /// `None` when pseudo-labeling is disabled.
    pub tau: Option<f64>,
    pub human: usize,
    pub pseudo: usize,
    pub unlabeled: usize,
    pub promoted: usize,
    pub deferred: usize,
    pub demoted: usize,
}

pub const POOL_LOG_HEADER: &str = "epoch,tau,human,pseudo,unlabeled,promoted,deferred,demoted";

pub fn pool_log_csv(rows: &[PoolLogRow]) -> String {
    let mut out = String::from(POOL_LOG_HEADER);
    out.push('\n');
    for r in rows {
        let tau = r.tau.map(|t| format!("{t:.6}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch, tau, r.human, r.pseudo, r.unlabeled, r.promoted, r.deferred, r.demoted
        );
    }
    out
}
