mod common;

use approx::{assert_abs_diff_eq, assert_relative_eq};
use bon::data::{make_constructed, Blob, ConstructedSpec, Dataset, Sample};
use bon::engine::{
    argmax, classifier_loss, evaluate, gate, generate, generator_step, init_classifier, mas_multiplier,
    train_epoch, BatchReduction, BonConfig, GeneratorPopulation, Mode, OmegaStore, ParamSnapshot, SyntheticPoint,
    TrainObserver, TrainState, MAS_MULTIPLIER_CAP,
};
use bon::exec::Exec;
use bon::nn::{cross_entropy, mse, MlpNetwork, OutputMode};
use bon::seed;
use common::MemoryLog;
use proptest::prelude::*;

fn classifier(dims: &[usize], s: u64) -> MlpNetwork {
    MlpNetwork::new(dims, OutputMode::Softmax, 0.0, &mut seed::rng(s)).unwrap()
}

fn generator(s: u64) -> MlpNetwork {
    MlpNetwork::new(&[2, 8, 2], OutputMode::Linear, 0.0, &mut seed::rng(s)).unwrap()
}

fn gated(g: &MlpNetwork, x: &[f64]) -> SyntheticPoint {
    SyntheticPoint {
        misclassified: Some(true),
        ..generate(g, x, 0, 0).unwrap()
    }
}

/// Two tight, far-apart blobs without outliers.
fn separable() -> Dataset {
    make_constructed(&ConstructedSpec {
        blobs: [
            Blob {
                center: [-1.0, -1.0],
                spread: 0.1,
                count: 12,
            },
            Blob {
                center: [1.0, 1.0],
                spread: 0.1,
                count: 12,
            },
        ],
        outliers: Vec::new(),
        seed: 3,
    })
    .unwrap()
}

/// Linear classifier that separates [`separable`] by a wide margin.
fn oracle_classifier() -> MlpNetwork {
    MlpNetwork::from_params(&[2, 2], OutputMode::Softmax, 0.0, vec![-10.0, -10.0, 10.0, 10.0, 0.0, 0.0])
        .unwrap()
}

#[test]
fn classifier_loss_is_the_sum_of_member_cross_entropies() {
    let d = classifier(&[2, 16, 8, 3], 1);
    let sample = Sample {
        features: vec![0.3, -0.7],
        label: 2,
    };
    let synths: Vec<SyntheticPoint> = (0..5)
        .map(|k| generate(&generator(10 + k), &sample.features, 0, k as usize).unwrap())
        .collect();
    let (loss, grad) = classifier_loss(&d, &sample, &synths, None).unwrap();

    let mut points: Vec<&[f64]> = synths.iter().map(|s| s.values.as_slice()).collect();
    points.push(&sample.features);
    let mut want_loss = 0.0;
    let mut want_grad = vec![0.0; d.params().len()];
    for p in points {
        let t = d.forward_eval(p).unwrap();
        let (l, g) = cross_entropy(t.output(), sample.label).unwrap();
        want_loss += l;
        for (w, v) in want_grad.iter_mut().zip(d.backward(&t, &g).unwrap().iter()) {
            *w += v;
        }
    }
    assert_relative_eq!(loss, want_loss, max_relative = 1e-12);
    for (a, b) in grad.iter().zip(&want_grad) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
}

#[test]
fn classifier_loss_without_synthetics_is_plain_cross_entropy() {
    let d = classifier(&[2, 5, 2], 4);
    let sample = Sample {
        features: vec![1.0, 2.0],
        label: 0,
    };
    let (loss, _) = classifier_loss(&d, &sample, &[], None).unwrap();
    let want = cross_entropy(&d.predict(&sample.features).unwrap(), 0).unwrap().0;
    assert_eq!(loss, want);
}

proptest! {
    #[test]
    fn gate_agrees_with_brute_force_argmax(
        net_seed in any::<u64>(),
        x in prop::collection::vec(-4.0f64..4.0, 2),
        y in 0usize..3,
    ) {
        let d = classifier(&[2, 6, 3], net_seed);
        let synth = SyntheticPoint { values: x.clone(), source_index: 0, generator_index: 0, misclassified: None };
        let probs = d.predict(&x).unwrap();
        let mut best = 0;
        for c in 1..probs.len() {
            if probs[c] > probs[best] {
                best = c;
            }
        }
        prop_assert_eq!(gate(&d, &synth, y).unwrap().misclassified, Some(best != y));
    }

    #[test]
    fn anchor_multiplier_is_monotone_and_capped(beta in 1.0001f64..2.0, n in 0usize..100_000) {
        let m = mas_multiplier(beta, n);
        prop_assert!((1.0..=MAS_MULTIPLIER_CAP).contains(&m));
        prop_assert!(mas_multiplier(beta, n + 1) >= m);
    }
}

#[test]
fn bon_step_is_one_sgd_step_on_the_mse() {
    let mut g = generator(5);
    let x = [0.4, -0.9];
    let cfg = BonConfig {
        mode: Mode::Bon,
        alpha: 1.0,
        lr_g: 0.05,
        ..BonConfig::default()
    };
    let t = g.forward_eval(&x).unwrap();
    let (want_mse, d_out) = mse(t.output(), &x).unwrap();
    let grad = g.backward(&t, &d_out).unwrap();
    let want: Vec<f64> = g.params().iter().zip(grad.iter()).map(|(p, d)| p - 0.05 * d).collect();

    let synth = gated(&g, &x);
    let report = generator_step(&mut g, &synth, &x, &cfg, 0, None).unwrap();
    assert_eq!(report.mse, want_mse);
    assert_eq!(report.penalty, 0.0);
    for (a, b) in g.params().iter().zip(&want) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
    }
}

#[test]
fn bonpp_step_composes_weighted_mse_and_anchor() {
    let mut g = generator(6);
    let x = [-0.2, 1.1];
    let cfg = BonConfig {
        mode: Mode::Bonpp,
        alpha: 2.0,
        beta: 1.025,
        lr_g: 0.01,
        ..BonConfig::default()
    };
    let n = g.params().len();
    let mut rng = seed::rng(8);
    let star: Vec<f64> = g.params().iter().map(|p| p + rand::Rng::random_range(&mut rng, -0.1..0.1)).collect();
    let snap = ParamSnapshot::from_vec(star.clone());
    let mut store = OmegaStore::new(n);
    store
        .absorb(&(0..n).map(|i| (i % 7) as f64 * 0.1).collect::<Vec<_>>().into())
        .unwrap();
    let epoch = 9;

    let t = g.forward_eval(&x).unwrap();
    let (_, d_out) = mse(t.output(), &x).unwrap();
    let mse_grad = g.backward(&t, &d_out).unwrap();
    let mult = 1.025f64.powi(epoch as i32);
    let want_penalty: f64 = g
        .params()
        .iter()
        .zip(&star)
        .zip(store.omega())
        .map(|((p, s), o)| mult * o * (p - s) * (p - s))
        .sum();
    let want: Vec<f64> = g
        .params()
        .iter()
        .zip(mse_grad.iter())
        .zip(&star)
        .zip(store.omega())
        .map(|(((p, d), s), o)| {
            let moved = p - 0.01 * 2.0 * d;
            let c = 2.0 * 0.01 * mult * o;
            (moved + c * s) / (1.0 + c)
        })
        .collect();

    let synth = gated(&g, &x);
    let report = generator_step(&mut g, &synth, &x, &cfg, epoch, Some((&snap, &store))).unwrap();
    assert_relative_eq!(report.penalty, want_penalty, max_relative = 1e-9);
    for (a, b) in g.params().iter().zip(&want) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
}

#[test]
fn huge_anchor_multiplier_shrinks_displacement() {
    let x = [0.9, 0.3];
    let cfg = BonConfig {
        mode: Mode::Bonpp,
        lr_g: 0.05,
        ..BonConfig::default()
    };
    let base = generator(11);
    let n = base.params().len();
    let snap = ParamSnapshot::of(&base);
    let mut store = OmegaStore::new(n);
    store.absorb(&vec![0.5; n].into()).unwrap();
    let displacement = |epoch: usize| {
        let mut g = base.clone();
        generator_step(&mut g, &gated(&base, &x), &x, &cfg, epoch, Some((&snap, &store))).unwrap();
        g.params().iter().zip(base.params()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let free = displacement(0);
    let pinned = displacement(5000);
    assert!(free > 0.0);
    assert!(pinned < free * 1e-6, "free {free:e}, pinned {pinned:e}");
    assert_eq!(mas_multiplier(1.025, 50_000), MAS_MULTIPLIER_CAP);
}

#[test]
fn identity_generators_copy_their_input_and_never_move() {
    let g = MlpNetwork::identity(&[2, 6, 4, 2]).unwrap();
    let x = [-1.75, 0.5];
    let synth = generate(&g, &x, 3, 1).unwrap();
    assert_eq!(synth.values, x.to_vec());
    assert_eq!((synth.source_index, synth.generator_index), (3, 1));

    let mut moved = g.clone();
    let cfg = BonConfig {
        mode: Mode::Bon,
        alpha: 1.0,
        ..BonConfig::default()
    };
    let r = generator_step(&mut moved, &gated(&g, &x), &x, &cfg, 0, None).unwrap();
    assert_eq!(r.mse, 0.0);
    assert_eq!(moved.params(), g.params());
}

fn identity_population(k: usize) -> GeneratorPopulation {
    GeneratorPopulation::from_networks((0..k).map(|_| MlpNetwork::identity(&[2, 4, 2]).unwrap()).collect())
        .unwrap()
}

#[test]
fn closed_gate_freezes_generators_while_importance_accumulates() {
    let ds = separable();
    let mut d = oracle_classifier();
    let cfg = BonConfig {
        mode: Mode::Bonpp,
        generators: 3,
        lr_d: 1e-4,
        batch_size: 5,
        epochs: 4,
        exec: Exec::Sequential,
        ..BonConfig::default()
    };
    let mut pop = identity_population(3);
    let before = pop.clone();
    let mut state = TrainState::new(&cfg);
    for _ in 0..cfg.epochs {
        train_epoch(&mut d, Some(&mut pop), &ds, &cfg, &mut state, None).unwrap();
    }
    for (a, b) in pop.members().iter().zip(before.members()) {
        assert_eq!(a.net.params(), b.net.params());
        assert_eq!(a.omega.count(), (cfg.epochs * ds.len()) as u64);
        assert!(a.omega.omega().iter().any(|&o| o > 0.0));
    }
    assert!(state.history.iter().all(|m| m.gated_fraction == 0.0));
}

/// Checks after every batch that generators with no misclassified point
/// kept their parameters.
#[derive(Default)]
struct GateAudit {
    last: Vec<Vec<f64>>,
    silent_batches: usize,
    fired_batches: usize,
    violations: usize,
}

impl TrainObserver for GateAudit {
    fn on_batch_end(&mut self, _e: usize, _b: usize, pop: Option<&GeneratorPopulation>, fired: &[usize]) {
        let pop = pop.expect("generator run");
        for (k, m) in pop.members().iter().enumerate() {
            if fired[k] == 0 {
                self.silent_batches += 1;
                if self.last[k] != m.net.params() {
                    self.violations += 1;
                }
            } else {
                self.fired_batches += 1;
            }
            self.last[k] = m.net.params().to_vec();
        }
    }
}

#[test]
fn generators_only_move_in_batches_where_their_gate_fired() {
    let spec = ConstructedSpec::default();
    let ds = make_constructed(&spec).unwrap();
    let cfg = BonConfig {
        mode: Mode::Bon,
        generators: 4,
        alpha: 1.0,
        lr_d: 1e-3,
        lr_g: 1e-3,
        batch_size: 10,
        epochs: 3,
        ..BonConfig::default()
    };
    let mut d = init_classifier(&[2, 16, 2], 0.0, 2).unwrap();
    let mut pop = GeneratorPopulation::new(4, &[2, 8, 2], 2).unwrap();
    let mut audit = GateAudit {
        last: pop.members().iter().map(|m| m.net.params().to_vec()).collect(),
        ..GateAudit::default()
    };
    let mut state = TrainState::new(&cfg);
    for _ in 0..cfg.epochs {
        train_epoch(&mut d, Some(&mut pop), &ds, &cfg, &mut state, Some(&mut audit)).unwrap();
    }
    assert_eq!(audit.violations, 0);
    assert!(audit.fired_batches > 0 && audit.silent_batches > 0);
}

#[test]
fn identity_generators_amplify_the_classifier_step() {
    // K identity generators add K copies of each real point's loss, so the
    // classifier follows a baseline run with a (K+1)-fold learning rate
    let ds = make_constructed(&ConstructedSpec::default()).unwrap();
    let k = 4;
    let bon = BonConfig {
        mode: Mode::Bon,
        generators: k,
        alpha: 1.0,
        lr_d: 1e-3,
        batch_size: 10,
        epochs: 3,
        ..BonConfig::default()
    };
    let base = BonConfig {
        mode: Mode::Baseline,
        lr_d: bon.lr_d * (k + 1) as f64,
        ..bon.clone()
    };
    let mut d_bon = init_classifier(&[2, 12, 2], 0.0, 5).unwrap();
    let mut d_base = d_bon.clone();
    let mut pop = identity_population(k);
    let (mut s_bon, mut s_base) = (TrainState::new(&bon), TrainState::new(&base));
    for _ in 0..bon.epochs {
        train_epoch(&mut d_bon, Some(&mut pop), &ds, &bon, &mut s_bon, None).unwrap();
        train_epoch(&mut d_base, None, &ds, &base, &mut s_base, None).unwrap();
    }
    for (a, b) in d_bon.params().iter().zip(d_base.params()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
    }
    for m in pop.members() {
        assert_eq!(m.net.params(), MlpNetwork::identity(&[2, 4, 2]).unwrap().params());
    }
    assert!(s_bon.history.iter().all(|m| m.mean_synth_mse == 0.0));
}

#[test]
fn mean_reduction_divides_the_batch_step() {
    // 24 points in batches of 8, so every batch has the same size
    let ds = separable();
    let mean = BonConfig {
        mode: Mode::Baseline,
        lr_d: 1e-2,
        batch_size: 8,
        batch_reduction: BatchReduction::Mean,
        ..BonConfig::default()
    };
    let sum = BonConfig {
        lr_d: mean.lr_d / 8.0,
        batch_reduction: BatchReduction::Sum,
        ..mean.clone()
    };
    let mut d_mean = init_classifier(&[2, 12, 2], 0.0, 8).unwrap();
    let mut d_sum = d_mean.clone();
    let (mut s_mean, mut s_sum) = (TrainState::new(&mean), TrainState::new(&sum));
    for _ in 0..3 {
        train_epoch(&mut d_mean, None, &ds, &mean, &mut s_mean, None).unwrap();
        train_epoch(&mut d_sum, None, &ds, &sum, &mut s_sum, None).unwrap();
    }
    assert_ne!(d_mean.params(), init_classifier(&[2, 12, 2], 0.0, 8).unwrap().params());
    for (a, b) in d_mean.params().iter().zip(d_sum.params()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
}

#[test]
fn evaluate_matches_a_direct_recount() {
    let ds = make_constructed(&ConstructedSpec::default()).unwrap();
    let d = classifier(&[2, 10, 2], 21);
    let eval = evaluate(&d, &ds).unwrap();
    let mut correct = [0usize; 2];
    let mut total = [0usize; 2];
    for s in ds.samples() {
        total[s.label] += 1;
        if argmax(&d.predict(&s.features).unwrap()) == s.label {
            correct[s.label] += 1;
        }
    }
    assert_eq!(eval.correct_per_class, correct.to_vec());
    assert_eq!(eval.total_per_class, total.to_vec());
    assert_eq!(eval.accuracy, (correct[0] + correct[1]) as f64 / ds.len() as f64);
}

#[test]
fn inverted_dropout_preserves_the_expected_output() {
    let net = MlpNetwork::new(&[2, 64, 1], OutputMode::Linear, 0.5, &mut seed::rng(4)).unwrap();
    let x = [0.7, -0.4];
    let eval = net.predict(&x).unwrap()[0];
    let mut rng = seed::rng(123);
    let trials = 10_000;
    let mean = (0..trials)
        .map(|_| net.forward(&x, Some(&mut rng)).unwrap().output()[0])
        .sum::<f64>()
        / trials as f64;
    assert!(((mean - eval) / eval).abs() < 0.02, "mean {mean}, eval {eval}");
}

#[test]
fn omega_is_the_mean_of_every_logged_importance_sample() {
    let ds = make_constructed(&ConstructedSpec::default()).unwrap();
    let cfg = BonConfig {
        mode: Mode::Bonpp,
        generators: 3,
        lr_d: 1e-4,
        lr_g: 1e-3,
        epochs: 4,
        ..BonConfig::default()
    };
    let mut d = init_classifier(&[2, 16, 2], 0.0, 9).unwrap();
    let mut pop = GeneratorPopulation::new(3, &[2, 10, 2], 9).unwrap();
    let mut log = MemoryLog::default();
    let mut state = TrainState::new(&cfg);
    for _ in 0..cfg.epochs {
        train_epoch(&mut d, Some(&mut pop), &ds, &cfg, &mut state, Some(&mut log)).unwrap();
    }
    let gap = log.omega_gap(&pop).expect("sample counts agree");
    assert!(gap <= 1e-12, "gap {gap:e}");
    assert_eq!(log.absorbed.len(), cfg.epochs * cfg.generators * ds.len());
    assert_eq!(log.first_penalties.len(), cfg.epochs * cfg.generators);
    assert!(log.first_penalties.iter().all(|&(_, _, p)| p == 0.0));
}
