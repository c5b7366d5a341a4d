//! The per-sample building blocks of BON and BON++.

use crate::data::{Dataset, Sample};
use crate::engine::config::{BonConfig, MasUpdate, Mode};
use crate::engine::population::{OmegaStore, ParamSnapshot};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, mse, ForwardTrace, GradVector, MlpNetwork, Momentum};
use crate::seed::Rng;

/// Multipliers beyond this are clamped.
pub const MAS_MULTIPLIER_CAP: f64 = 1e300;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub predicted_class: usize,
}

impl Prediction {
    pub fn from_probs(probs: Vec<f64>) -> Self {
        let predicted_class = argmax(&probs);
        Prediction {
            probs,
            predicted_class,
        }
    }

    pub fn of(d: &MlpNetwork, x: &[f64]) -> Result<Self> {
        Ok(Self::from_probs(d.predict(x)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPoint {
    pub values: Vec<f64>,
    pub source_index: usize,
    pub generator_index: usize,
    /// `None` until the point has been through [`gate`].
    pub misclassified: Option<bool>,
}

pub fn generate(
    g: &MlpNetwork,
    x: &[f64],
    source_index: usize,
    generator_index: usize,
) -> Result<SyntheticPoint> {
    if g.output_dim() != g.input_dim() {
        return Err(Error::shape("generator output", g.input_dim(), g.output_dim()));
    }
    Ok(SyntheticPoint {
        values: g.predict(x)?,
        source_index,
        generator_index,
        misclassified: None,
    })
}

/// Adds the gradient of `weight * CE(d(x), label)` into `grad` and returns
/// the weighted loss together with the predicted class.
pub(crate) fn accumulate_ce(
    d: &MlpNetwork,
    x: &[f64],
    label: usize,
    weight: f64,
    rng: Option<&mut Rng>,
    grad: &mut GradVector,
) -> Result<(f64, usize)> {
    let (loss, preds) = accumulate_ce_rows(d, x, &[weight], label, rng, grad)?;
    Ok((loss, preds[0]))
}

/// Batched [`accumulate_ce`]: one row of `xs` per entry of `weights`, all
/// against `label`. Gives the same bits as calling it row by row.
pub(crate) fn accumulate_ce_rows(
    d: &MlpNetwork,
    xs: &[f64],
    weights: &[f64],
    label: usize,
    rng: Option<&mut Rng>,
    grad: &mut GradVector,
) -> Result<(f64, Vec<usize>)> {
    let trace = d.forward_batch(xs, weights.len(), rng)?;
    let mut d_logits = Vec::with_capacity(trace.output().len());
    let mut total = 0.0;
    let mut preds = Vec::with_capacity(weights.len());
    for (s, &w) in weights.iter().enumerate() {
        let probs = trace.row_output(s);
        let (loss, mut g) = cross_entropy(probs, label)?;
        if w != 1.0 {
            g.iter_mut().for_each(|v| *v *= w);
        }
        total += w * loss;
        d_logits.extend_from_slice(&g);
        preds.push(argmax(probs));
    }
    d.backward_into(&trace, &d_logits, grad)?;
    Ok((total, preds))
}

/// Rows evaluated together by [`predict_rows`]; keeps the per-layer
/// buffers cache resident.
const ROW_BLOCK: usize = 32;

/// Eval-mode outputs for `xs.len() / net.input_dim()` row-major inputs.
pub(crate) fn predict_rows(net: &MlpNetwork, xs: &[f64]) -> Result<Vec<f64>> {
    let d_in = net.input_dim();
    if !xs.len().is_multiple_of(d_in) {
        return Err(Error::shape("input batch length modulo input dim", 0, xs.len() % d_in));
    }
    let mut out = Vec::with_capacity(xs.len() / d_in * net.output_dim());
    for block in xs.chunks(ROW_BLOCK * d_in) {
        out.extend(net.forward_batch(block, block.len() / d_in, None)?.into_output());
    }
    Ok(out)
}

/// Summed cross-entropy of the real sample and every synthetic point
/// derived from it, all against the real label, with the gradient for the
/// classifier parameters.
pub fn classifier_loss(
    d: &MlpNetwork,
    sample: &Sample,
    synths: &[SyntheticPoint],
    mut rng: Option<&mut Rng>,
) -> Result<(f64, GradVector)> {
    let mut grad = GradVector::zeros(d.params().len());
    let mut total = 0.0;
    for s in synths {
        total += accumulate_ce(d, &s.values, sample.label, 1.0, rng.as_deref_mut(), &mut grad)?.0;
    }
    total += accumulate_ce(d, &sample.features, sample.label, 1.0, rng, &mut grad)?.0;
    Ok((total, grad))
}

/// Marks a synthetic point as misclassified when the classifier's argmax
/// on it differs from `y`.
pub fn gate(d: &MlpNetwork, synth: &SyntheticPoint, y: usize) -> Result<SyntheticPoint> {
    let pred = Prediction::of(d, &synth.values)?;
    Ok(SyntheticPoint {
        misclassified: Some(pred.predicted_class != y),
        ..synth.clone()
    })
}

pub(crate) fn importance_from_trace(g: &MlpNetwork, trace: &ForwardTrace) -> Result<GradVector> {
    let out = trace.output();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite generator output".into()));
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(GradVector::zeros(g.params().len()));
    }
    let d_out: Vec<f64> = out.iter().map(|v| v / norm).collect();
    g.backward(trace, &d_out)
}

/// Gradient of the Euclidean norm of the generator output with respect to
/// every generator parameter. Zero at an exactly zero output.
pub fn importance_sample(g: &MlpNetwork, x: &[f64]) -> Result<GradVector> {
    let trace = g.forward_eval(x)?;
    importance_from_trace(g, &trace)
}

pub fn omega_update(store: &mut OmegaStore, g: &GradVector) -> Result<()> {
    store.absorb(g)
}

/// `beta^n`, evaluated in log space and capped at [`MAS_MULTIPLIER_CAP`].
pub fn mas_multiplier(beta: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let log = n as f64 * beta.ln();
    if log >= MAS_MULTIPLIER_CAP.ln() {
        MAS_MULTIPLIER_CAP
    } else {
        log.exp()
    }
}

fn check_memory(g: &MlpNetwork, snap: &ParamSnapshot, store: &OmegaStore) -> Result<()> {
    let n = g.params().len();
    if snap.theta_star().len() != n {
        return Err(Error::shape("parameter snapshot", n, snap.theta_star().len()));
    }
    if store.omega().len() != n {
        return Err(Error::shape("importance store", n, store.omega().len()));
    }
    Ok(())
}

pub(crate) fn mas_penalty_value(params: &[f64], snap: &ParamSnapshot, store: &OmegaStore, multiplier: f64) -> f64 {
    let raw: f64 = params
        .iter()
        .zip(snap.theta_star())
        .zip(store.omega())
        .map(|((t, s), o)| o * (t - s) * (t - s))
        .sum();
    multiplier * raw
}

/// Importance-weighted squared distance from the snapshot, scaled by
/// `beta^n`, and its gradient.
pub fn mas_penalty(
    g: &MlpNetwork,
    snap: &ParamSnapshot,
    store: &OmegaStore,
    beta: f64,
    n: usize,
) -> Result<(f64, GradVector)> {
    check_memory(g, snap, store)?;
    let mult = mas_multiplier(beta, n);
    let value = mas_penalty_value(g.params(), snap, store, mult);
    let grad = g
        .params()
        .iter()
        .zip(snap.theta_star())
        .zip(store.omega())
        .map(|((t, s), o)| mult * 2.0 * o * (t - s))
        .collect::<Vec<_>>();
    Ok((value, GradVector::from(grad)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Unweighted MSE between synthetic and real point before the step.
    pub mse: f64,
    /// Anchor penalty (multiplier included) before the step; 0 in BON mode.
    pub penalty: f64,
}

/// One update of a generator on a misclassified synthetic point.
///
/// In BON mode the loss is the MSE between the generator output and the
/// real point. In BON++ mode it is `alpha * MSE` plus the anchor penalty
/// from [`mas_penalty`], passed through `memory`.
pub fn generator_step(
    g: &mut MlpNetwork,
    synth: &SyntheticPoint,
    x: &[f64],
    cfg: &BonConfig,
    epoch: usize,
    memory: Option<(&ParamSnapshot, &OmegaStore)>,
) -> Result<StepReport> {
    match synth.misclassified {
        Some(true) => {}
        Some(false) => {
            return Err(Error::Contract(
                "generator step requested for a correctly classified synthetic point".into(),
            ))
        }
        None => return Err(Error::Contract("generator step requested before gating".into())),
    }
    let trace = g.forward_eval(x)?;
    step_from_trace(g, &trace, x, cfg, epoch, memory, &mut Momentum::new(cfg.momentum))
}

pub(crate) fn step_from_trace(
    g: &mut MlpNetwork,
    trace: &ForwardTrace,
    x: &[f64],
    cfg: &BonConfig,
    epoch: usize,
    memory: Option<(&ParamSnapshot, &OmegaStore)>,
    optimizer: &mut Momentum,
) -> Result<StepReport> {
    let (mse_loss, mut d_out) = mse(trace.output(), x)?;
    let weight = cfg.mse_weight();
    if weight != 1.0 {
        d_out.iter_mut().for_each(|v| *v *= weight);
    }
    let mut grad = g.backward(trace, &d_out)?;

    let memory = match (cfg.mode, memory) {
        (Mode::Bonpp, Some(m)) => {
            check_memory(g, m.0, m.1)?;
            Some(m)
        }
        (Mode::Bonpp, None) => {
            return Err(Error::Contract("BON++ generator step needs a snapshot and importance store".into()))
        }
        _ => None,
    };
    let mult = mas_multiplier(cfg.beta, epoch);
    let penalty = memory.map_or(0.0, |(s, o)| mas_penalty_value(g.params(), s, o, mult));

    if let (Some((snap, store)), MasUpdate::Explicit) = (memory, cfg.mas_update) {
        for (((gi, t), s), o) in grad
            .iter_mut()
            .zip(g.params())
            .zip(snap.theta_star())
            .zip(store.omega())
        {
            *gi += mult * 2.0 * o * (t - s);
        }
    }
    if !grad.is_finite() {
        return Err(Error::Numeric("non-finite generator gradient".into()));
    }

    let lr = cfg.lr_g;
    optimizer.step(g.params_mut(), &grad, lr)?;
    let params = g.params_mut();

    if let (Some((snap, store)), MasUpdate::Proximal) = (memory, cfg.mas_update) {
        // argmin_t  |t - p|^2 / (2 lr) + mult * omega * (t - t*)^2
        for ((p, s), o) in params.iter_mut().zip(snap.theta_star()).zip(store.omega()) {
            let c = 2.0 * lr * mult * o;
            if c == 0.0 {
                continue;
            }
            *p = if c.is_finite() { (*p + c * s) / (1.0 + c) } else { *s };
        }
    }
    Ok(StepReport {
        mse: mse_loss,
        penalty,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct_per_class: Vec<usize>,
    pub total_per_class: Vec<usize>,
}

pub fn evaluate(d: &MlpNetwork, ds: &Dataset) -> Result<Evaluation> {
    if d.input_dim() != ds.feature_dim() {
        return Err(Error::shape("classifier input", ds.feature_dim(), d.input_dim()));
    }
    let k = ds.class_count();
    let xs: Vec<f64> = ds.samples().iter().flat_map(|s| s.features.iter().copied()).collect();
    let probs = predict_rows(d, &xs)?;
    let mut correct_per_class = vec![0; k];
    let mut total_per_class = vec![0; k];
    for (s, p) in ds.samples().iter().zip(probs.chunks_exact(d.output_dim())) {
        total_per_class[s.label] += 1;
        if argmax(p) == s.label {
            correct_per_class[s.label] += 1;
        }
    }
    let correct: usize = correct_per_class.iter().sum();
    Ok(Evaluation {
        accuracy: correct as f64 / ds.len() as f64,
        correct_per_class,
        total_per_class,
    })
}
