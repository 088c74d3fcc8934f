use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Example, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub labeled: f64,
    pub unlabeled: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            labeled: 0.2,
            unlabeled: 0.6,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn new(labeled: f64, unlabeled: f64, test: f64) -> Result<Self> {
        let f = SplitFractions {
            labeled,
            unlabeled,
            test,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.labeled, self.unlabeled, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config(format!(
                "split fractions must be nonnegative: {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// Corpus indices per pool, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPools {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitPools {
    /// Check pairwise disjointness and that the pools cover `0..corpus_len`.
    pub fn check_partition(&self, corpus_len: usize) -> Result<()> {
        let mut seen = vec![false; corpus_len];
        for &i in self.labeled.iter().chain(&self.unlabeled).chain(&self.test) {
            if i >= corpus_len {
                return Err(Error::Pool(format!("index {i} outside corpus")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Pool(format!("index {i} appears in two pools")));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Pool(format!("index {missing} is in no pool")));
        }
        Ok(())
    }
}

/// JSON split manifest: `{"seed": int, "labeled": [ids], "unlabeled": [ids], "test": [ids]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub labeled: Vec<String>,
    pub unlabeled: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn from_pools(pools: &SplitPools, corpus: &[Example], seed: u64) -> Self {
        let ids = |idx: &[usize]| idx.iter().map(|&i| corpus[i].id.clone()).collect();
        SplitManifest {
            seed,
            labeled: ids(&pools.labeled),
            unlabeled: ids(&pools.unlabeled),
            test: ids(&pools.test),
        }
    }

    pub fn to_pools(&self, corpus: &[Example]) -> Result<SplitPools> {
        let index: HashMap<&str, usize> = corpus
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.as_str(), i))
            .collect();
        let resolve = |ids: &[String]| -> Result<Vec<usize>> {
            let mut out =
                ids.iter()
                    .map(|id| {
                        index.get(id.as_str()).copied().ok_or_else(|| {
                            Error::Pool(format!("split references unknown id `{id}`"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
            out.sort_unstable();
            Ok(out)
        };
        let pools = SplitPools {
            labeled: resolve(&self.labeled)?,
            unlabeled: resolve(&self.unlabeled)?,
            test: resolve(&self.test)?,
        };
        pools.check_partition(corpus.len())?;
        Ok(pools)
    }
}

/// Distribute `total` units over classes proportionally to `quotas` (largest remainder),
/// never exceeding `caps`.
fn apportion(total: usize, quotas: &[f64], caps: &[usize]) -> Vec<usize> {
    let mut alloc: Vec<usize> = quotas
        .iter()
        .zip(caps)
        .map(|(&q, &cap)| (q.floor() as usize).min(cap))
        .collect();
    let mut remaining = total.saturating_sub(alloc.iter().sum());
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    while remaining > 0 {
        let mut progressed = false;
        for &c in &order {
            if remaining == 0 {
                break;
            }
            if alloc[c] < caps[c] {
                alloc[c] += 1;
                remaining -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    alloc
}

/// Class-stratified labeled/unlabeled/test partition, deterministic in `seed`.
///
/// Labeled and test pools receive `round(N * fraction)` examples, apportioned across classes
/// by largest remainder so each class share is within one example of the corpus share; the
/// unlabeled pool takes the rest.
pub fn stratified_split(
    corpus: &[Example],
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitPools> {
    fractions.validate()?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, example) in corpus.iter().enumerate() {
        let label = example
            .label
            .ok_or_else(|| Error::MissingLabel(example.id.clone()))?;
        if label >= NUM_CLASSES {
            return Err(Error::InvalidClass {
                class: label,
                num_classes: NUM_CLASSES,
            });
        }
        by_class[label].push(i);
    }

    let required = [fractions.labeled, fractions.unlabeled, fractions.test]
        .iter()
        .filter(|&&f| f > 0.0)
        .count();
    for (class, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < required {
            return Err(Error::ClassTooSmall {
                class,
                available: members.len(),
                required,
            });
        }
    }

    let n = corpus.len();
    let n_labeled = ((n as f64) * fractions.labeled).round() as usize;
    let n_test = (((n as f64) * fractions.test).round() as usize).min(n - n_labeled.min(n));
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let share = |total: usize| -> Vec<f64> {
        counts
            .iter()
            .map(|&c| {
                if n == 0 {
                    0.0
                } else {
                    c as f64 * total as f64 / n as f64
                }
            })
            .collect()
    };
    let labeled_per_class = apportion(n_labeled, &share(n_labeled), &counts);
    let room: Vec<usize> = counts
        .iter()
        .zip(&labeled_per_class)
        .map(|(c, l)| c - l)
        .collect();
    let test_per_class = apportion(n_test, &share(n_test), &room);

    let mut pools = SplitPools {
        labeled: Vec::new(),
        unlabeled: Vec::new(),
        test: Vec::new(),
    };
    for (class, members) in by_class.iter().enumerate() {
        let mut members = members.clone();
        members.shuffle(&mut rng::stream(seed, &[rng::tag("split"), class as u64]));
        let (labeled, rest) = members.split_at(labeled_per_class[class]);
        let (test, unlabeled) = rest.split_at(test_per_class[class]);
        pools.labeled.extend_from_slice(labeled);
        pools.test.extend_from_slice(test);
        pools.unlabeled.extend_from_slice(unlabeled);
    }
    pools.labeled.sort_unstable();
    pools.unlabeled.sort_unstable();
    pools.test.sort_unstable();
    debug_assert!(pools.check_partition(n).is_ok());
    Ok(pools)
}
