//! Losses and teacher-disagreement uncertainty.
//!
//! The student objective per example is `alpha * CE + beta * w * ||s - m||²`, where `m` is the
//! teachers' mean logit vector and `w = 1 / (1 + mean_c Var_c)` shrinks the consistency pull on
//! inputs the teachers disagree about. Teachers are constants: no gradient reaches them.

use crate::error::{Error, Result};
use crate::model::{Logits, ProbDist};

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha_sup: f64,
    pub beta_cons: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha_sup: 1.0,
            beta_cons: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha_sup", self.alpha_sup), ("beta_cons", self.beta_cons)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Scale applied to the supervised gradient.
    pub fn supervised_scale(&self) -> f64 {
        self.alpha_sup
    }

    /// Scale applied to one example's consistency gradient.
    pub fn consistency_scale(&self, weight: f64) -> f64 {
        self.beta_cons * weight
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport {
    pub variance_per_class: Vec<f64>,
    pub uncertainty: f64,
    pub weight: f64,
}

impl UncertaintyReport {
    /// Perfect agreement: zero variance, weight 1.
    pub fn certain(num_classes: usize) -> Self {
        UncertaintyReport {
            variance_per_class: vec![0.0; num_classes],
            uncertainty: 0.0,
            weight: 1.0,
        }
    }
}

/// `-ln(max(p[true], 1e-12))` and its gradient with respect to the logits, `p - onehot`.
pub fn cross_entropy(probs: &ProbDist, true_class: usize) -> Result<(f64, Vec<f64>)> {
    let p = probs.as_slice();
    if true_class >= p.len() {
        return Err(Error::InvalidClass {
            class: true_class,
            num_classes: p.len(),
        });
    }
    let loss = -p[true_class].max(PROB_FLOOR).ln();
    let mut grad = p.to_vec();
    grad[true_class] -= 1.0;
    Ok((loss, grad))
}

/// Squared L2 distance `Σ_c (s_c - m_c)²` and its gradient `2(s - m)` with respect to `s`.
pub fn consistency_mse(student: &Logits, ensemble_mean: &Logits) -> Result<(f64, Vec<f64>)> {
    if student.len() != ensemble_mean.len() {
        return Err(Error::DimensionMismatch {
            expected: ensemble_mean.len(),
            actual: student.len(),
        });
    }
    let diff: Vec<f64> = student
        .as_slice()
        .iter()
        .zip(ensemble_mean.as_slice())
        .map(|(s, m)| s - m)
        .collect();
    let loss = diff.iter().map(|d| d * d).sum();
    let grad = diff.into_iter().map(|d| 2.0 * d).collect();
    Ok((loss, grad))
}

/// Mean of `values` summed in sorted order, so the result does not depend on input order.
pub(crate) fn order_free_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance of each class logit across teachers, their mean over classes, and the
/// weight `1 / (1 + uncertainty)`.
pub fn uncertainty_from_logits(
    teacher_logits: &[Logits],
    expected_teachers: usize,
) -> Result<UncertaintyReport> {
    if teacher_logits.len() != expected_teachers || expected_teachers == 0 {
        return Err(Error::TeacherCount {
            expected: expected_teachers,
            actual: teacher_logits.len(),
        });
    }
    let classes = teacher_logits[0].len();
    if let Some(bad) = teacher_logits.iter().find(|z| z.len() != classes) {
        return Err(Error::DimensionMismatch {
            expected: classes,
            actual: bad.len(),
        });
    }
    let mut column = vec![0.0; teacher_logits.len()];
    let variance_per_class: Vec<f64> = (0..classes)
        .map(|c| {
            for (slot, z) in column.iter_mut().zip(teacher_logits) {
                *slot = z.as_slice()[c];
            }
            // pairwise form: exactly zero when all teachers agree
            let k = column.len();
            let mut sq = Vec::with_capacity(k * (k - 1) / 2);
            for i in 0..k {
                for j in i + 1..k {
                    sq.push((column[i] - column[j]).powi(2));
                }
            }
            sq.sort_by(f64::total_cmp);
            sq.iter().sum::<f64>() / (k * k) as f64
        })
        .collect();
    let uncertainty = order_free_mean(&mut variance_per_class.clone());
    Ok(UncertaintyReport {
        weight: 1.0 / (1.0 + uncertainty),
        variance_per_class,
        uncertainty,
    })
}

/// `alpha * sup + beta * weight * cons`
pub fn total_loss(sup: f64, cons: f64, weight: f64, lw: LossWeights) -> f64 {
    lw.alpha_sup * sup + lw.beta_cons * weight * cons
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn logits(v: &[f64]) -> Logits {
        Logits(v.to_vec())
    }

    #[test]
    fn cross_entropy_examples() {
        let (loss, _) = cross_entropy(&ProbDist(vec![1.0, 0.0]), 0).unwrap();
        assert!(loss.abs() < 1e-9);
        let (loss, _) = cross_entropy(&ProbDist(vec![0.5, 0.5]), 0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-9);
        let (loss, grad) = cross_entropy(&ProbDist(vec![0.9, 0.1]), 1).unwrap();
        assert!((loss - std::f64::consts::LN_10).abs() < 1e-12);
        assert!((grad[0] - 0.9).abs() < 1e-12 && (grad[1] + 0.9).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_floor_and_bad_class() {
        let (loss, _) = cross_entropy(&ProbDist(vec![1.0, 0.0]), 1).unwrap();
        assert!((loss - (-PROB_FLOOR.ln())).abs() < 1e-9);
        assert!(cross_entropy(&ProbDist(vec![0.5, 0.5]), 2).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(
            consistency_mse(&logits(&[0.3, 1.0]), &logits(&[0.3, 1.0]))
                .unwrap()
                .0,
            0.0
        );
        let (loss, grad) = consistency_mse(&logits(&[1.0, 0.0]), &logits(&[0.0, 0.0])).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(grad, vec![2.0, 0.0]);
        assert_eq!(
            consistency_mse(&logits(&[1.0, 2.0]), &logits(&[0.0, 0.0]))
                .unwrap()
                .0,
            5.0
        );
        assert!(consistency_mse(&logits(&[1.0]), &logits(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn uncertainty_examples() {
        let same = vec![logits(&[0.4, -0.2]); 3];
        let r = uncertainty_from_logits(&same, 3).unwrap();
        assert_eq!(r.variance_per_class, vec![0.0, 0.0]);
        assert_eq!(r.uncertainty, 0.0);
        assert_eq!(r.weight, 1.0);

        let z = [
            logits(&[1.0, 0.0]),
            logits(&[2.0, 0.0]),
            logits(&[3.0, 0.0]),
        ];
        let r = uncertainty_from_logits(&z, 3).unwrap();
        assert!((r.variance_per_class[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.variance_per_class[1], 0.0);
        assert!((r.uncertainty - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.weight - 0.75).abs() < 1e-12);

        let doubled: Vec<Logits> = z.iter().map(|l| logits(&[l.0[0] * 2.0, 0.0])).collect();
        let r2 = uncertainty_from_logits(&doubled, 3).unwrap();
        assert!((r2.variance_per_class[0] - 4.0 * r.variance_per_class[0]).abs() < 1e-12);
        assert!(r2.weight < r.weight);
    }

    #[test]
    fn uncertainty_errors() {
        let z = [logits(&[1.0, 0.0]), logits(&[2.0, 0.0])];
        assert!(matches!(
            uncertainty_from_logits(&z, 3),
            Err(Error::TeacherCount {
                expected: 3,
                actual: 2
            })
        ));
        let z = [logits(&[1.0, 0.0]), logits(&[2.0]), logits(&[3.0, 0.0])];
        assert!(uncertainty_from_logits(&z, 3).is_err());
    }

    #[test]
    fn total_loss_examples() {
        let lw = LossWeights::default();
        let ln2 = std::f64::consts::LN_2;
        assert!((total_loss(ln2, 1.0, 0.75, lw) - (ln2 + 0.75)).abs() < 1e-12);
        let sup_only = LossWeights {
            alpha_sup: 1.0,
            beta_cons: 0.0,
        };
        assert_eq!(total_loss(0.4, 9.0, 0.5, sup_only), 0.4);
        let none = LossWeights {
            alpha_sup: 0.0,
            beta_cons: 1.0,
        };
        assert_eq!(total_loss(0.4, 0.0, 1.0, none), 0.0);
    }

    #[test]
    fn loss_weights_validation() {
        assert!(LossWeights {
            alpha_sup: -1.0,
            beta_cons: 1.0
        }
        .validate()
        .is_err());
        assert!(LossWeights {
            alpha_sup: 1.0,
            beta_cons: f64::NAN
        }
        .validate()
        .is_err());
        assert!(LossWeights::default().validate().is_ok());
    }

    fn teacher_sets() -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(-20.0f64..20.0, 2), 3)
    }

    proptest! {
        #[test]
        fn weight_in_unit_interval(z in teacher_sets()) {
            let ls: Vec<Logits> = z.into_iter().map(Logits).collect();
            let r = uncertainty_from_logits(&ls, 3).unwrap();
            prop_assert!(r.weight > 0.0 && r.weight <= 1.0);
            prop_assert!(r.variance_per_class.iter().all(|v| *v >= 0.0));
            prop_assert_eq!(r.weight == 1.0, r.uncertainty == 0.0);
        }

        #[test]
        fn weight_monotone_in_spread(z in teacher_sets(), k in 1.01f64..4.0) {
            let ls: Vec<Logits> = z.iter().cloned().map(Logits).collect();
            let wider: Vec<Logits> = z.iter().map(|v| Logits(v.iter().map(|x| x * k).collect())).collect();
            let a = uncertainty_from_logits(&ls, 3).unwrap();
            let b = uncertainty_from_logits(&wider, 3).unwrap();
            prop_assert!(b.weight <= a.weight);
        }

        #[test]
        fn permutation_invariant(z in teacher_sets()) {
            let ls: Vec<Logits> = z.iter().cloned().map(Logits).collect();
            let reference = uncertainty_from_logits(&ls, 3).unwrap();
            for perm in [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
                let p: Vec<Logits> = perm.iter().map(|&i| ls[i].clone()).collect();
                prop_assert_eq!(&uncertainty_from_logits(&p, 3).unwrap(), &reference);
            }
        }

        #[test]
        fn mse_symmetric(a in proptest::collection::vec(-9.0f64..9.0, 3), b in proptest::collection::vec(-9.0f64..9.0, 3)) {
            let ab = consistency_mse(&Logits(a.clone()), &Logits(b.clone())).unwrap().0;
            let ba = consistency_mse(&Logits(b), &Logits(a)).unwrap().0;
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn ce_nonnegative(p0 in 0.0f64..=1.0, class in 0usize..2) {
            let (loss, _) = cross_entropy(&ProbDist(vec![p0, 1.0 - p0]), class).unwrap();
            prop_assert!(loss >= 0.0);
        }
    }
}
