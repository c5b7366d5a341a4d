//! Oracles shared by the integration and acceptance targets.
#![allow(dead_code)]

use bon::engine::{importance_sample, GeneratorPopulation, TrainObserver};
use bon::nn::{cross_entropy, finite_diff_grad, max_relative_error, mse, MlpNetwork, OutputMode};
use bon::seed;
use rand::Rng as _;

/// Relative error budget for analytic vs central-difference gradients.
pub const GRAD_TOL: f64 = 1e-5;
/// Central-difference step.
pub const FD_EPS: f64 = 1e-5;
/// Magnitude below which an entry is compared absolutely. Central
/// differences of an O(1) loss carry roughly `1e-16 / FD_EPS` of rounding
/// noise, so smaller entries have no meaningful relative error.
pub const GRAD_FLOOR: f64 = 1e-4;

/// Layer shapes drawn by the gradient oracles. The first three are the
/// experiment architectures; the rest cover shallow and odd widths.
pub const SHAPES: &[(&[usize], OutputMode)] = &[
    (&[2, 100, 100, 50, 3], OutputMode::Softmax),
    (&[2, 100, 100, 50, 2], OutputMode::Softmax),
    (&[2, 50, 50, 50, 2], OutputMode::Linear),
    (&[2, 3], OutputMode::Softmax),
    (&[2, 2], OutputMode::Linear),
    (&[3, 7, 4], OutputMode::Softmax),
    (&[2, 5, 2], OutputMode::Linear),
    (&[4, 9, 1, 6, 3], OutputMode::Softmax),
];

pub struct Draw {
    pub net: MlpNetwork,
    pub x: Vec<f64>,
    /// Class label for softmax nets, regression target otherwise.
    pub label: usize,
    pub target: Vec<f64>,
}

/// Smallest distance from a rectifier kink tolerated in an oracle draw.
/// Closer than this, central differences mix two linear pieces.
pub const KINK_MARGIN: f64 = 1e-3;

/// Random params (biases included, so no unit sits at zero by
/// construction) and an input that keeps every hidden unit off its kink.
fn oracle_net(dims: &[usize], mode: OutputMode, rng: &mut bon::seed::Rng) -> (MlpNetwork, Vec<f64>) {
    let mut net = MlpNetwork::new(dims, mode, 0.0, rng).unwrap();
    net.params_mut().iter_mut().for_each(|p| *p += rng.random_range(-0.2..0.2));
    loop {
        let x: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let t = net.forward_eval(&x).unwrap();
        let hidden = &t.pre_activations()[..dims.len() - 2];
        if hidden.iter().flatten().all(|z| z.abs() > KINK_MARGIN) {
            return (net, x);
        }
    }
}

/// Network, input and loss target for oracle draw `i`, cycling through
/// [`SHAPES`].
pub fn draw(i: usize) -> Draw {
    let (dims, mode) = SHAPES[i % SHAPES.len()];
    let mut rng = seed::derived_rng(0xD1FF, &[i as u64]);
    let (net, x) = oracle_net(dims, mode, &mut rng);
    let out = *dims.last().unwrap();
    Draw {
        net,
        x,
        label: rng.random_range(0..out),
        target: (0..out).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

/// Cross-entropy without the log floor, whose slope the analytic logit
/// gradient describes even for saturated predictions.
pub fn exact_ce(probs: &[f64], label: usize) -> f64 {
    -probs[label].ln()
}

/// Analytic and finite-difference gradients of the draw's loss: cross
/// entropy for classifiers, MSE for linear nets.
pub fn loss_gradients(d: &Draw) -> (Vec<f64>, Vec<f64>) {
    let trace = d.net.forward_eval(&d.x).unwrap();
    let (analytic, fd) = match d.net.output_mode() {
        OutputMode::Softmax => {
            let (_, g) = cross_entropy(trace.output(), d.label).unwrap();
            let fd = finite_diff_grad(&d.net, |p| exact_ce(p, d.label), &d.x, FD_EPS);
            (d.net.backward(&trace, &g).unwrap(), fd.unwrap())
        }
        OutputMode::Linear => {
            let (_, g) = mse(trace.output(), &d.target).unwrap();
            let fd = finite_diff_grad(&d.net, |p| mse(p, &d.target).unwrap().0, &d.x, FD_EPS);
            (d.net.backward(&trace, &g).unwrap(), fd.unwrap())
        }
    };
    (analytic.into_inner(), fd.into_inner())
}

pub fn loss_gradient_error(d: &Draw) -> f64 {
    let (a, f) = loss_gradients(d);
    max_relative_error(&a, &f, GRAD_FLOOR)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Importance vector of a linear-output draw against finite differences
/// of the output norm.
pub fn importance_error(d: &Draw) -> f64 {
    let imp = importance_sample(&d.net, &d.x).unwrap();
    let fd = finite_diff_grad(&d.net, norm, &d.x, FD_EPS).unwrap();
    max_relative_error(&imp, &fd, GRAD_FLOOR)
}

/// Generator draw `i`, cycling through the linear-output shapes.
pub fn generator_draw(i: usize) -> Draw {
    let linear: Vec<&[usize]> = SHAPES
        .iter()
        .filter(|(_, m)| *m == OutputMode::Linear)
        .map(|(d, _)| *d)
        .collect();
    let dims = linear[i % linear.len()];
    let mut rng = seed::derived_rng(0x1A9, &[i as u64]);
    let (net, x) = oracle_net(dims, OutputMode::Linear, &mut rng);
    Draw {
        net,
        x,
        label: 0,
        target: Vec::new(),
    }
}

/// Records the importance samples a run absorbs and the anchor penalty at
/// each generator's first gate of every epoch.
#[derive(Default)]
pub struct MemoryLog {
    /// Per generator: sum of absolute importance samples and their count.
    pub abs_sums: Vec<Vec<f64>>,
    pub counts: Vec<u64>,
    /// (epoch, generator, sample) in delivery order.
    pub absorbed: Vec<(usize, usize, usize)>,
    /// (epoch, generator, penalty).
    pub first_penalties: Vec<(usize, usize, f64)>,
}

impl TrainObserver for MemoryLog {
    fn wants_importance(&self) -> bool {
        true
    }

    fn on_absorb(&mut self, epoch: usize, generator: usize, sample: usize, g: &bon::nn::GradVector) {
        if self.abs_sums.len() <= generator {
            self.abs_sums.resize(generator + 1, Vec::new());
            self.counts.resize(generator + 1, 0);
        }
        let sums = &mut self.abs_sums[generator];
        if sums.is_empty() {
            sums.resize(g.len(), 0.0);
        }
        for (s, v) in sums.iter_mut().zip(g.iter()) {
            *s += v.abs();
        }
        self.counts[generator] += 1;
        self.absorbed.push((epoch, generator, sample));
    }

    fn on_first_gate_penalty(&mut self, epoch: usize, generator: usize, penalty: f64) {
        self.first_penalties.push((epoch, generator, penalty));
    }
}

impl MemoryLog {
    /// Largest gap between each store and the mean of its logged samples,
    /// or `None` if a sample count disagrees.
    pub fn omega_gap(&self, pop: &GeneratorPopulation) -> Option<f64> {
        let mut worst: f64 = 0.0;
        for (k, m) in pop.members().iter().enumerate() {
            if self.counts.get(k).copied() != Some(m.omega.count()) {
                return None;
            }
            let n = self.counts[k] as f64;
            for (o, s) in m.omega.omega().iter().zip(&self.abs_sums[k]) {
                worst = worst.max((o - s / n).abs());
            }
        }
        Some(worst)
    }
}
