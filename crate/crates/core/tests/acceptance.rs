//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line on stdout (written directly,
//! so it shows even when libtest captures output) and then asserts.
//!
//! The SSL-benefit and ablation criteria share one paired-seed experiment, run once.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ensemble_ssl::augment::{
    random_delete, random_insert, random_swap, weak_augment, AugmentContext, AugmentPolicy,
    SynonymLexicon,
};
use ensemble_ssl::data::{stratified_split, SplitFractions, TokenSequence, Vocabulary};
use ensemble_ssl::ensemble::{filter_pseudo_labels, EnsembleVerdict, PseudoLabel, TeacherBank};
use ensemble_ssl::harness::ablate::{mean_f1, Variant};
use ensemble_ssl::harness::train::{teacher_file, METRICS_FILE, POOL_LOG_FILE, STUDENT_FILE};
use ensemble_ssl::harness::{
    ablate, generate_synthetic, metrics_csv, synthetic_resources, train, train_supervised,
    write_run, Prepared, SyntheticSpec, TrainConfig, Trial,
};
use ensemble_ssl::ipl::PoolState;
use ensemble_ssl::model::{Logits, Mode, Model, ModelConfig, ProbDist};
use ensemble_ssl::objective::{
    consistency_mse, cross_entropy, total_loss, uncertainty_from_logits, LossWeights,
    UncertaintyReport,
};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{status} [{id}] {name}: {detail}");
}

fn synthetic_config() -> TrainConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.conf");
    TrainConfig::load(&path).expect("configs/synthetic.conf")
}

/// Corpus, split and run seed all follow `seed`.
fn prepared(config: &TrainConfig, seed: u64) -> Prepared {
    let spec = SyntheticSpec {
        seed,
        ..SyntheticSpec::default()
    };
    let corpus = generate_synthetic(&spec).unwrap();
    let pools = stratified_split(&corpus, SplitFractions::default(), seed).unwrap();
    Prepared::with_resources(config, corpus, pools, &synthetic_resources(&spec)).unwrap()
}

// 1. Gradient oracle

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

#[test]
fn criterion_1_gradient_oracle() {
    let start = Instant::now();
    let eps = 1e-4;
    let mut worst_ce: f64 = 0.0;
    let mut worst_total: f64 = 0.0;
    let n_configs = 12;
    for case in 0..n_configs {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
        let config = ModelConfig {
            vocab_size: rng.gen_range(4..16),
            embed_dim: rng.gen_range(2..7),
            hidden_dim: rng.gen_range(2..6),
            num_classes: rng.gen_range(2..5),
            dropout_rate: 0.0,
            seed: rng.gen(),
            hidden_layer: case % 2 == 1,
        };
        // spread the parameters beyond the small init so logits are not all near zero
        let mut model = Model::new(config.clone()).unwrap();
        let mut params = model.params().clone();
        for v in params.values_mut() {
            *v *= rng.gen_range(1.0..8.0);
        }
        model.set_parameters(params).unwrap();

        let len = rng.gen_range(1..7);
        let input = TokenSequence::from_ids(
            (0..len)
                .map(|_| rng.gen_range(1..config.vocab_size as u32))
                .collect(),
        );
        let label = rng.gen_range(0..config.num_classes);
        let target = Logits(
            (0..config.num_classes)
                .map(|_| rng.gen_range(-2.0..2.0))
                .collect(),
        );
        let weight = rng.gen_range(0.2..1.0);
        let lw = LossWeights {
            alpha_sup: rng.gen_range(0.5..2.0),
            beta_cons: rng.gen_range(0.1..2.0),
        };

        let ce_of = |m: &Model| {
            let (_, probs) = m.predict(&input).unwrap();
            cross_entropy(&probs, label).unwrap().0
        };
        let total_of = |m: &Model| {
            let (logits, probs) = m.predict(&input).unwrap();
            let sup = cross_entropy(&probs, label).unwrap().0;
            let cons = consistency_mse(&logits, &target).unwrap().0;
            total_loss(sup, cons, weight, lw)
        };

        let out = model.forward(&input, Mode::Eval, &mut rng).unwrap();
        let (_, g_ce) = cross_entropy(&out.probs, label).unwrap();
        let (_, g_mse) = consistency_mse(&out.logits, &target).unwrap();
        let g_total: Vec<f64> = g_ce
            .iter()
            .zip(&g_mse)
            .map(|(c, m)| lw.supervised_scale() * c + lw.consistency_scale(weight) * m)
            .collect();
        let analytic_ce = model.backward(&out.cache, &g_ce).unwrap();
        let analytic_total = model.backward(&out.cache, &g_total).unwrap();

        let base = model.params().clone();
        let mut probe = model.clone();
        for i in 0..base.len() {
            let mut at = |delta: f64, f: &dyn Fn(&Model) -> f64| {
                let mut p = base.clone();
                p.values_mut()[i] += delta;
                probe.set_parameters(p).unwrap();
                f(&probe)
            };
            let n_ce = (at(eps, &ce_of) - at(-eps, &ce_of)) / (2.0 * eps);
            let n_total = (at(eps, &total_of) - at(-eps, &total_of)) / (2.0 * eps);
            worst_ce = worst_ce.max(relative_error(analytic_ce.values()[i], n_ce));
            worst_total = worst_total.max(relative_error(analytic_total.values()[i], n_total));
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_ce < 1e-4 && worst_total < 1e-4 && elapsed < Duration::from_secs(10);
    report(
        1,
        "gradient oracle",
        pass,
        &format!(
            "{n_configs} configs, max rel err CE {worst_ce:.2e}, total {worst_total:.2e} \
             (< 1e-4), {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

// 2. Closed forms

#[test]
fn criterion_2_closed_forms() {
    let ce = cross_entropy(&ProbDist(vec![0.5, 0.5]), 0).unwrap().0;
    let ce_err = (ce - std::f64::consts::LN_2).abs();

    let teachers = [
        Logits(vec![1.0, 0.0]),
        Logits(vec![2.0, 0.0]),
        Logits(vec![3.0, 0.0]),
    ];
    let w = uncertainty_from_logits(&teachers, 3).unwrap().weight;
    let w_err = (w - 0.75).abs();

    let config = ModelConfig {
        vocab_size: 6,
        embed_dim: 3,
        hidden_dim: 2,
        num_classes: 2,
        dropout_rate: 0.0,
        seed: 5,
        hidden_layer: false,
    };
    let teacher = Model::new(config.clone()).unwrap();
    let student = Model::new(config.with_seed(6)).unwrap();
    let decay = 0.99;
    let mut bank = TeacherBank::new(vec![teacher.clone()], decay).unwrap();
    let mut ema_err: f64 = 0.0;
    for k in 1..=200 {
        bank.ema_update(student.params()).unwrap();
        let now = bank.teachers()[0].params().values();
        for ((t, t0), s) in now
            .iter()
            .zip(teacher.params().values())
            .zip(student.params().values())
        {
            let expected = decay.powi(k) * (t0 - s);
            ema_err = ema_err.max(((t - s) - expected).abs());
        }
    }

    let pass = ce_err < 1e-9 && w_err < 1e-9 && ema_err < 1e-9;
    report(
        2,
        "closed forms",
        pass,
        &format!("|CE-ln2| {ce_err:.1e}, |w-0.75| {w_err:.1e}, max EMA gap error {ema_err:.1e} over 200 steps"),
    );
    assert!(pass);
}

// 3. Pool invariants under fuzz

fn label(index: usize, confidence: f64, epoch: usize) -> PseudoLabel {
    PseudoLabel {
        index,
        example_id: format!("ex{index:04}"),
        label: index % 2,
        confidence,
        uncertainty: 0.0,
        weight: 1.0,
        epoch_assigned: epoch,
    }
}

fn verdict(index: usize, p1: f64) -> EnsembleVerdict {
    let probs = ProbDist(vec![1.0 - p1, p1]);
    EnsembleVerdict {
        index,
        example_id: format!("ex{index:04}"),
        mean_logits: Logits(vec![0.0, 0.0]),
        predicted_label: probs.argmax(),
        confidence: probs.max(),
        mean_probs: probs,
        report: UncertaintyReport::certain(2),
    }
}

/// Disjointness, conservation and cap, checked from the public views.
fn pool_violations(state: &PoolState, n: usize, cap: usize) -> usize {
    let human = state.human_labeled();
    let pseudo: BTreeSet<usize> = state.pseudo_labeled().keys().copied().collect();
    let unlabeled = state.unlabeled_remaining();
    let mut bad = 0;
    bad += human.intersection(&pseudo).count();
    bad += human.intersection(unlabeled).count();
    bad += pseudo.intersection(unlabeled).count();
    let union: BTreeSet<usize> = human
        .iter()
        .chain(&pseudo)
        .chain(unlabeled)
        .copied()
        .collect();
    if union != (0..n).collect() || human.len() + pseudo.len() + unlabeled.len() != n {
        bad += 1;
    }
    if pseudo.len() > cap {
        bad += 1;
    }
    bad
}

#[test]
fn criterion_3_pool_fuzz() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 120;
    let n_human = 30;
    let cap = 15; // floor(0.5 * 30)
    let mut state = PoolState::new(0..n_human, n_human..n, 0.5).unwrap();
    let mut violations = pool_violations(&state, n, cap);
    let (mut promotes, mut rechecks, mut rejected) = (0, 0, 0);
    for step in 0..1000 {
        match rng.gen_range(0..10) {
            0..=5 => {
                let pool: Vec<usize> = state.unlabeled_remaining().iter().copied().collect();
                let mut accepted = Vec::new();
                for i in pool {
                    if rng.gen_bool(0.2) {
                        accepted.push(label(i, rng.gen_range(0.5..1.0), step));
                    }
                }
                state.promote(accepted).unwrap();
                promotes += 1;
            }
            6..=8 => {
                let tau = rng.gen_range(0.5..1.0);
                let margin = rng.gen_range(0.0..0.1);
                let draws: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                state
                    .recheck_with(tau, margin, |l| Ok(verdict(l.index, draws[l.index])))
                    .unwrap();
                rechecks += 1;
            }
            _ => {
                // an invalid promotion must fail and leave the state untouched
                let before = state.clone();
                let bogus = match state.pseudo_labeled().keys().next() {
                    Some(&i) if rng.gen_bool(0.5) => vec![label(i, 0.9, step)],
                    _ => vec![label(0, 0.9, step)],
                };
                if state.promote(bogus).is_ok() || state != before {
                    violations += 1;
                }
                rejected += 1;
            }
        }
        violations += pool_violations(&state, n, cap);
    }
    let pass = violations == 0;
    report(
        3,
        "pool invariants",
        pass,
        &format!(
            "1000 steps ({promotes} promote, {rechecks} recheck, {rejected} invalid), \
             {violations} violations"
        ),
    );
    assert!(pass);
}

// 4. Filter monotonicity

#[test]
fn criterion_4_filter_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    let mut comparisons = 0;
    for _ in 0..100 {
        let verdicts: Vec<EnsembleVerdict> = (0..rng.gen_range(1..80))
            .map(|i| {
                let mut v = verdict(i, rng.gen::<f64>());
                v.report.uncertainty = rng.gen_range(0.0..2.0);
                v
            })
            .collect();
        let max_u = rng.gen_range(0.0..2.0);
        let mut taus: Vec<f64> = (0..12).map(|_| rng.gen::<f64>()).collect();
        taus.extend([0.0, 0.5, 1.0]);
        for &lo in &taus {
            let low: BTreeSet<usize> = filter_pseudo_labels(&verdicts, lo, max_u, 0)
                .iter()
                .map(|l| l.index)
                .collect();
            for &hi in taus.iter().filter(|&&t| t >= lo) {
                let high = filter_pseudo_labels(&verdicts, hi, max_u, 0);
                comparisons += 1;
                if high.iter().any(|l| !low.contains(&l.index)) {
                    violations += 1;
                }
            }
        }
    }
    let pass = violations == 0;
    report(
        4,
        "filter monotonicity",
        pass,
        &format!("100 verdict sets, {comparisons} threshold pairs, {violations} violations"),
    );
    assert!(pass);
}

// 5. Collapse equivalence

#[test]
fn criterion_5_collapse_equivalence() {
    let mut cfg = synthetic_config();
    cfg.loss.beta_cons = 0.0;
    cfg.ablation.no_ipl = true;
    cfg.ablation.no_augment = true;
    let mut equal_seeds = 0;
    for seed in [1, 2] {
        cfg.seed = seed;
        let data = prepared(&cfg, seed);
        let ssl = train(&cfg, &data).unwrap();
        let sup = train_supervised(&cfg, &data).unwrap();
        if metrics_csv(&ssl.metrics) == metrics_csv(&sup.metrics) && ssl.student == sup.student {
            equal_seeds += 1;
        }
    }
    let pass = equal_seeds == 2;
    report(
        5,
        "collapse equivalence",
        pass,
        &format!("beta=0, no_ipl, no_augment: metrics.csv and student identical on {equal_seeds}/2 seeds"),
    );
    assert!(pass);
}

// 6 and 7. Paired-seed experiment

struct Experiment {
    baseline: Vec<f64>,
    variants: Vec<(Variant, f64)>,
    elapsed: Duration,
}

fn experiment() -> &'static Experiment {
    static CELL: OnceLock<Experiment> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let base = synthetic_config();
        let mut baseline = Vec::new();
        let mut trials = Vec::new();
        for seed in SEEDS {
            let mut cfg = base.clone();
            cfg.seed = seed;
            let data = prepared(&cfg, seed);
            let scores = train_supervised(&cfg, &data).unwrap().final_test().unwrap();
            baseline.push(scores.f1);
            trials.push(Trial { seed, data });
        }
        let rows = ablate(&base, &trials).unwrap();
        Experiment {
            baseline,
            variants: mean_f1(&rows),
            elapsed: start.elapsed(),
        }
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[test]
fn criterion_6_ssl_benefit() {
    let exp = experiment();
    let baseline = mean(&exp.baseline);
    let full = exp
        .variants
        .iter()
        .find(|(v, _)| *v == Variant::Full)
        .unwrap()
        .1;
    let gain = full - baseline;
    let pass = gain >= 0.02 && exp.elapsed < Duration::from_secs(300);
    report(
        6,
        "SSL benefit",
        pass,
        &format!(
            "5 seeds, mean macro-F1 full {full:.4} vs supervised {baseline:.4}, gain {gain:+.4} \
             (>= 0.02), experiment {:.1}s",
            exp.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_ablation_direction() {
    let exp = experiment();
    let full = exp
        .variants
        .iter()
        .find(|(v, _)| *v == Variant::Full)
        .unwrap()
        .1;
    let ablated: Vec<(Variant, f64)> = exp
        .variants
        .iter()
        .copied()
        .filter(|(v, _)| *v != Variant::Full)
        .collect();
    let pass = ablated.iter().all(|(_, f1)| *f1 <= full + 0.005);
    let largest = ablated
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(v, _)| v.name())
        .unwrap();
    let table: Vec<String> = ablated
        .iter()
        .map(|(v, f1)| format!("{} {f1:.4} ({:+.4})", v.name(), f1 - full))
        .collect();
    report(
        7,
        "ablation direction",
        pass,
        &format!(
            "full {full:.4}; {}; largest drop: {largest} (no_ensemble largest: {})",
            table.join(", "),
            largest == Variant::NoEnsemble.name()
        ),
    );
    assert!(pass);
}

// 8. Determinism

#[test]
fn criterion_8_determinism() {
    let mut cfg = synthetic_config();
    cfg.seed = 11;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let data = prepared(&cfg, 11);
        let outcome = train(&cfg, &data).unwrap();
        write_run(dir.path(), &cfg, &data, &outcome).unwrap();
    }
    let mut files = vec![
        METRICS_FILE.to_string(),
        POOL_LOG_FILE.to_string(),
        STUDENT_FILE.to_string(),
    ];
    files.extend((0..cfg.teacher_seeds.len()).map(teacher_file));
    let differing: Vec<&String> = files
        .iter()
        .filter(|f| {
            let a = std::fs::read(dirs[0].path().join(f)).unwrap();
            let b = std::fs::read(dirs[1].path().join(f)).unwrap();
            a != b
        })
        .collect();
    let pass = differing.is_empty();
    report(
        8,
        "determinism",
        pass,
        &format!(
            "{} artifacts compared byte for byte, differing: {differing:?}",
            files.len()
        ),
    );
    assert!(pass);
}

// 9. Augmentation laws

fn sorted(mut v: Vec<u32>) -> Vec<u32> {
    v.sort_unstable();
    v
}

fn is_subsequence(sub: &[u32], full: &[u32]) -> bool {
    let mut it = full.iter();
    sub.iter().all(|t| it.any(|f| f == t))
}

#[test]
fn criterion_9_augmentation_laws() {
    let cases = 1000;
    let tokens = proptest::collection::vec(0u32..50, 0..30);
    let runner = || {
        TestRunner::new(PropConfig {
            cases,
            failure_persistence: None,
            ..PropConfig::default()
        })
    };
    let mut outcomes = Vec::new();

    let swap = runner().run(&(tokens.clone(), 0usize..6, any::<u64>()), |(t, n, s)| {
        let out = random_swap(&t, n, &mut ChaCha8Rng::seed_from_u64(s));
        prop_assert_eq!(sorted(out), sorted(t));
        Ok(())
    });
    outcomes.push(("swap multiset", swap.map_err(|e| e.to_string())));

    let delete = runner().run(
        &(tokens.clone(), 0.0f64..=1.0, any::<u64>()),
        |(t, rate, s)| {
            let out = random_delete(&t, rate, &mut ChaCha8Rng::seed_from_u64(s));
            prop_assert!(is_subsequence(&out, &t));
            prop_assert_eq!(out.is_empty(), t.is_empty());
            Ok(())
        },
    );
    outcomes.push(("delete subsequence", delete.map_err(|e| e.to_string())));

    let insert = runner().run(
        &(tokens.clone(), 0usize..5, 3usize..60, any::<u64>()),
        |(t, n, vocab, s)| {
            let mut lexicon = SynonymLexicon::new();
            lexicon.insert(2, [3, 4]);
            let out = random_insert(&t, n, &lexicon, vocab, &mut ChaCha8Rng::seed_from_u64(s));
            prop_assert_eq!(out.len(), t.len() + n);
            prop_assert!(is_subsequence(&t, &out));
            Ok(())
        },
    );
    outcomes.push(("insert length", insert.map_err(|e| e.to_string())));

    let mut vocab = Vocabulary::new();
    for i in 0..50 {
        vocab.insert(&format!("w{i}")).unwrap();
    }
    let lexicon = SynonymLexicon::new();
    let ctx = AugmentContext::new(&vocab, &lexicon);
    let identity = runner().run(&(tokens, any::<u64>()), |(t, s)| {
        let policy = AugmentPolicy::disabled();
        let out = weak_augment(&t, "en", &policy, &ctx, &mut ChaCha8Rng::seed_from_u64(s));
        prop_assert_eq!(out, t);
        Ok(())
    });
    outcomes.push(("empty-policy identity", identity.map_err(|e| e.to_string())));

    let failures: Vec<String> = outcomes
        .iter()
        .filter_map(|(name, r): &(&str, Result<(), String>)| {
            r.as_ref().err().map(|e| format!("{name}: {e}"))
        })
        .collect();
    let pass = failures.is_empty();
    let detail = if pass {
        format!("4 laws x {cases} cases, 0 violations")
    } else {
        failures.join("; ")
    };
    report(9, "augmentation laws", pass, &detail);
    assert!(pass);
}
