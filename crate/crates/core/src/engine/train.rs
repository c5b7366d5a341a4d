//! Epoch drivers.
//!
//! Each batch runs in three phases:
//!
//! 1. every generator perturbs every sample of the batch and the classifier
//!    gradient of the summed cross-entropy (real point plus all synthetic
//!    points, real label throughout) is accumulated per sample;
//! 2. the per-sample gradients are added in batch order and the classifier
//!    takes one step;
//! 3. each generator walks the batch in order: it absorbs an importance
//!    sample (BON++), reads the gate from the updated classifier and, if
//!    its synthetic point is misclassified, takes a step.
//!
//! Phases 1 and 3 fan out across samples and generators respectively.
//! Phase 2 is the only synchronization point and always reduces in the
//! same order, so results do not depend on the execution policy.

use crate::data::{batch_iter, Dataset};
use crate::engine::config::{BatchReduction, BonConfig, GateTiming, Mode};
use crate::engine::ops::{
    accumulate_ce_rows, argmax, evaluate, importance_from_trace, mas_multiplier, mas_penalty_value,
    predict_rows, step_from_trace,
};
use crate::engine::population::GeneratorPopulation;
use crate::error::{Error, Result};
use crate::nn::{mse_value, ForwardTrace, GradVector, MlpNetwork, Momentum, OutputMode};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// Number of completed epochs, starting at 1.
    pub epoch: usize,
    pub acc_real: f64,
    pub acc_synth: f64,
    pub mean_synth_mse: f64,
    pub mean_mas_penalty: f64,
    pub gated_fraction: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str =
        "epoch,acc_real,acc_synth,mean_synth_mse,mean_mas_penalty,gated_fraction";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?}",
            self.epoch,
            self.acc_real,
            self.acc_synth,
            self.mean_synth_mse,
            self.mean_mas_penalty,
            self.gated_fraction
        )
    }

    fn is_finite(&self) -> bool {
        [
            self.acc_real,
            self.acc_synth,
            self.mean_synth_mse,
            self.mean_mas_penalty,
            self.gated_fraction,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainState {
    /// Zero-based index of the next epoch; also the exponent of the
    /// anchor multiplier during that epoch.
    pub epoch: usize,
    pub history: Vec<EpochMetrics>,
    classifier_opt: Momentum,
}

impl TrainState {
    pub fn new(cfg: &BonConfig) -> Self {
        TrainState {
            epoch: 0,
            history: Vec::new(),
            classifier_opt: Momentum::new(cfg.momentum),
        }
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.history.last()
    }
}

/// Hooks into the training loop. Events for one batch are delivered after
/// the batch completes, in generator order and then sample order.
pub trait TrainObserver {
    /// Whether importance samples should be delivered through
    /// [`on_absorb`](Self::on_absorb). Buffering them costs memory.
    fn wants_importance(&self) -> bool {
        false
    }

    fn on_absorb(&mut self, _epoch: usize, _generator: usize, _sample: usize, _g: &GradVector) {}

    /// Anchor penalty of a generator at its first gate of the epoch,
    /// before any step of that epoch.
    fn on_first_gate_penalty(&mut self, _epoch: usize, _generator: usize, _penalty: f64) {}

    /// Called after every batch with the number of misclassified synthetic
    /// points per generator.
    fn on_batch_end(
        &mut self,
        _epoch: usize,
        _batch: usize,
        _pop: Option<&GeneratorPopulation>,
        _fired: &[usize],
    ) {
    }
}

/// Creates a classifier with seeded initial weights.
pub fn init_classifier(dims: &[usize], dropout_p: f64, run_seed: u64) -> Result<MlpNetwork> {
    let mut rng = seed::derived_rng(run_seed, &[seed::TAG_CLASSIFIER_INIT]);
    MlpNetwork::new(dims, OutputMode::Softmax, dropout_p, &mut rng)
}

/// One epoch of the misclassification-gated algorithm.
pub fn bon_epoch(
    d: &mut MlpNetwork,
    pop: &mut GeneratorPopulation,
    ds: &Dataset,
    cfg: &BonConfig,
    state: &mut TrainState,
) -> Result<()> {
    expect_mode(cfg, Mode::Bon)?;
    train_epoch(d, Some(pop), ds, cfg, state, None)
}

/// One epoch of the anchored variant: snapshot, streaming importance and
/// the composite generator loss.
pub fn bonpp_epoch(
    d: &mut MlpNetwork,
    pop: &mut GeneratorPopulation,
    ds: &Dataset,
    cfg: &BonConfig,
    state: &mut TrainState,
) -> Result<()> {
    expect_mode(cfg, Mode::Bonpp)?;
    train_epoch(d, Some(pop), ds, cfg, state, None)
}

/// One epoch of the classifier alone.
pub fn baseline_epoch(
    d: &mut MlpNetwork,
    ds: &Dataset,
    cfg: &BonConfig,
    state: &mut TrainState,
) -> Result<()> {
    expect_mode(cfg, Mode::Baseline)?;
    train_epoch(d, None, ds, cfg, state, None)
}

fn expect_mode(cfg: &BonConfig, mode: Mode) -> Result<()> {
    if cfg.mode != mode {
        return Err(Error::Config(format!("expected mode {mode:?}, config says {:?}", cfg.mode)));
    }
    Ok(())
}

/// Synthetic points gated per classifier pass in phase 3.
const GATE_BLOCK: usize = 32;

fn generator_error(e: Error, k: usize, diverged: &impl Fn(String) -> Error) -> Error {
    match e {
        Error::Numeric(m) => diverged(format!("generator {k}: {m}")),
        other => other,
    }
}

#[derive(Default)]
struct GeneratorBatchReport {
    evaluations: usize,
    fired: usize,
    penalty_sum: f64,
    first_penalty: Option<f64>,
    absorbed: Vec<(usize, GradVector)>,
}

/// Runs one epoch in whatever mode `cfg` selects. `pop` is required
/// unless the mode is [`Mode::Baseline`].
pub fn train_epoch(
    d: &mut MlpNetwork,
    mut pop: Option<&mut GeneratorPopulation>,
    ds: &Dataset,
    cfg: &BonConfig,
    state: &mut TrainState,
    mut observer: Option<&mut dyn TrainObserver>,
) -> Result<()> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    if d.input_dim() != ds.feature_dim() {
        return Err(Error::shape("classifier input", ds.feature_dim(), d.input_dim()));
    }
    if d.output_dim() != ds.class_count() {
        return Err(Error::shape("classifier output", ds.class_count(), d.output_dim()));
    }
    if d.output_mode() != OutputMode::Softmax {
        return Err(Error::Config("classifier needs a softmax output".into()));
    }
    let uses_generators = cfg.mode.uses_generators();
    if uses_generators {
        let p = pop
            .as_deref()
            .ok_or_else(|| Error::Config(format!("{:?} mode needs a generator population", cfg.mode)))?;
        if p.len() != cfg.generators {
            return Err(Error::Config(format!(
                "config asks for {} generators, population has {}",
                cfg.generators,
                p.len()
            )));
        }
        if p.input_dim() != ds.feature_dim() {
            return Err(Error::shape("generator input", ds.feature_dim(), p.input_dim()));
        }
    } else {
        pop = None;
    }

    let n = state.epoch;
    let bonpp = cfg.mode == Mode::Bonpp;
    let multiplier = mas_multiplier(cfg.beta, n);
    let want_importance = observer.as_ref().is_some_and(|o| o.wants_importance());
    let diverged = |message: String| Error::Diverged { epoch: n + 1, message };

    if bonpp {
        for m in pop.as_deref_mut().expect("checked above").members_mut() {
            m.snapshot.refresh(&m.net);
        }
    }

    let k_count = if uses_generators { cfg.generators } else { 0 };
    let synth_weight = if cfg.normalize_synthetic && k_count > 0 {
        1.0 / k_count as f64
    } else {
        1.0
    };

    let batches = batch_iter(ds, cfg.batch_size, seed::derive(cfg.seed, &[seed::TAG_SHUFFLE, n as u64]))?;
    let mut evaluations = 0usize;
    let mut fired_total = 0usize;
    let mut penalty_sum = 0.0;

    let d_in = ds.feature_dim();
    for (b, batch) in batches.iter().enumerate() {
        let features: Vec<f64> = batch.iter().flat_map(|&i| ds.samples()[i].features.iter().copied()).collect();

        // phase 1: synthetic points and per-sample classifier gradients
        let synth: Vec<Vec<f64>> = match pop.as_deref() {
            Some(p) => cfg
                .exec
                .map(p.len(), |k| p.generator(k).forward_batch(&features, batch.len(), None).map(|t| t.into_output()))
                .into_iter()
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        let d_ref = &*d;
        let mut weights = vec![synth_weight; k_count];
        weights.push(1.0);
        let per_sample = cfg.exec.map(batch.len(), |p| -> Result<(GradVector, Vec<usize>)> {
            let sample = &ds.samples()[batch[p]];
            let mut rng = (d_ref.dropout_p() > 0.0).then(|| {
                seed::derived_rng(cfg.seed, &[seed::TAG_DROPOUT, n as u64, b as u64, p as u64])
            });
            let mut rows = Vec::with_capacity((k_count + 1) * d_in);
            for s in &synth {
                rows.extend_from_slice(&s[p * d_in..(p + 1) * d_in]);
            }
            rows.extend_from_slice(&sample.features);
            let mut grad = GradVector::zeros(d_ref.params().len());
            let (_, mut preds) = accumulate_ce_rows(d_ref, &rows, &weights, sample.label, rng.as_mut(), &mut grad)?;
            preds.pop();
            Ok((grad, preds))
        });

        // phase 2: ordered reduction and classifier step
        let mut total = GradVector::zeros(d.params().len());
        let mut pre_preds = Vec::with_capacity(batch.len());
        for r in per_sample {
            let (g, preds) = r?;
            total.add_assign(&g);
            pre_preds.push(preds);
        }
        if cfg.batch_reduction == BatchReduction::Mean {
            total.scale(1.0 / batch.len() as f64);
        }
        state
            .classifier_opt
            .step(d.params_mut(), &total, cfg.lr_d)
            .map_err(|e| diverged(format!("classifier step: {e}")))?;

        let Some(pop) = pop.as_deref_mut() else {
            if let Some(o) = observer.as_deref_mut() {
                o.on_batch_end(n, b, None, &[]);
            }
            continue;
        };

        // phase 3: importance, gates and generator steps. Generators are
        // independent of each other here, so they advance through the batch
        // in lockstep, which lets one classifier pass gate all of them.
        let d_ref = &*d;
        let mut reports: Vec<GeneratorBatchReport> = (0..k_count).map(|_| GeneratorBatchReport::default()).collect();
        for (p, &i) in batch.iter().enumerate() {
            let sample = &ds.samples()[i];
            let traces = cfg.exec.map_mut(pop.members_mut(), |_, member| -> Result<(ForwardTrace, Option<(GradVector, f64)>)> {
                let trace = member.net.forward_eval(&sample.features)?;
                let mut extra = None;
                if bonpp {
                    let imp = importance_from_trace(&member.net, &trace)?;
                    member.omega.absorb(&imp)?;
                    let first = if b == 0 && p == 0 {
                        mas_penalty_value(member.net.params(), &member.snapshot, &member.omega, multiplier)
                    } else {
                        f64::NAN
                    };
                    extra = Some((imp, first));
                }
                Ok((trace, extra))
            });
            let mut outputs = Vec::with_capacity(k_count * d_in);
            let mut traces_ok = Vec::with_capacity(k_count);
            for (k, r) in traces.into_iter().enumerate() {
                let (trace, extra) = r.map_err(|e| generator_error(e, k, &diverged))?;
                let rep = &mut reports[k];
                if let Some((imp, first)) = extra {
                    if b == 0 && p == 0 {
                        rep.first_penalty = Some(first);
                    }
                    if want_importance {
                        rep.absorbed.push((i, imp));
                    }
                }
                outputs.extend_from_slice(trace.output());
                traces_ok.push(trace);
            }
            let predicted: Vec<usize> = match cfg.gate_timing {
                GateTiming::PostUpdate => {
                    let blocks: Vec<&[f64]> = outputs.chunks(GATE_BLOCK * d_in).collect();
                    let probs = cfg.exec.map(blocks.len(), |c| predict_rows(d_ref, blocks[c]));
                    let mut predicted = Vec::with_capacity(k_count);
                    for block in probs {
                        predicted.extend(block?.chunks_exact(d_ref.output_dim()).map(argmax));
                    }
                    predicted
                }
                GateTiming::PreUpdate => pre_preds[p].clone(),
            };
            let steps = cfg.exec.map_mut(pop.members_mut(), |k, member| -> Result<Option<f64>> {
                if predicted[k] == sample.label {
                    return Ok(None);
                }
                let memory = bonpp.then_some((&member.snapshot, &member.omega));
                let step = step_from_trace(
                    &mut member.net,
                    &traces_ok[k],
                    &sample.features,
                    cfg,
                    n,
                    memory,
                    &mut member.optimizer,
                )?;
                Ok(Some(step.penalty))
            });
            for (k, r) in steps.into_iter().enumerate() {
                let rep = &mut reports[k];
                rep.evaluations += 1;
                if let Some(pen) = r.map_err(|e| generator_error(e, k, &diverged))? {
                    rep.fired += 1;
                    rep.penalty_sum += pen;
                }
            }
        }

        let mut fired = Vec::with_capacity(reports.len());
        for (k, r) in reports.into_iter().enumerate() {
            evaluations += r.evaluations;
            fired_total += r.fired;
            penalty_sum += r.penalty_sum;
            fired.push(r.fired);
            if let Some(o) = observer.as_deref_mut() {
                if let Some(pen) = r.first_penalty {
                    o.on_first_gate_penalty(n, k, pen);
                }
                for (i, g) in &r.absorbed {
                    o.on_absorb(n, k, *i, g);
                }
            }
        }
        if let Some(o) = observer.as_deref_mut() {
            o.on_batch_end(n, b, Some(pop), &fired);
        }
    }

    let (acc_synth, mean_synth_mse) = match pop.as_deref() {
        Some(p) => synthetic_summary(d, p, ds, cfg)?,
        None => (0.0, 0.0),
    };
    let metrics = EpochMetrics {
        epoch: n + 1,
        acc_real: evaluate(d, ds)?.accuracy,
        acc_synth,
        mean_synth_mse,
        mean_mas_penalty: if fired_total > 0 {
            penalty_sum / fired_total as f64
        } else {
            0.0
        },
        gated_fraction: if evaluations > 0 {
            fired_total as f64 / evaluations as f64
        } else {
            0.0
        },
    };
    if !metrics.is_finite() || d.params().iter().any(|v| !v.is_finite()) {
        return Err(diverged("non-finite metrics or classifier parameters".into()));
    }
    state.history.push(metrics);
    state.epoch += 1;
    Ok(())
}

/// Classifier accuracy on, and mean MSE of, every (sample, generator)
/// synthetic point under the current networks.
pub fn synthetic_summary(
    d: &MlpNetwork,
    pop: &GeneratorPopulation,
    ds: &Dataset,
    cfg: &BonConfig,
) -> Result<(f64, f64)> {
    let xs: Vec<f64> = ds.samples().iter().flat_map(|s| s.features.iter().copied()).collect();
    let d_in = ds.feature_dim();
    let per_gen = cfg.exec.map(pop.len(), |k| -> Result<(usize, f64)> {
        let synth = predict_rows(pop.generator(k), &xs)?;
        let probs = predict_rows(d, &synth)?;
        let mut correct = 0;
        let mut mse_sum = 0.0;
        for (i, s) in ds.samples().iter().enumerate() {
            mse_sum += mse_value(&synth[i * d_in..(i + 1) * d_in], &s.features);
            if argmax(&probs[i * d.output_dim()..(i + 1) * d.output_dim()]) == s.label {
                correct += 1;
            }
        }
        Ok((correct, mse_sum))
    });
    let mut correct = 0;
    let mut mse_sum = 0.0;
    for r in per_gen {
        let (c, m) = r?;
        correct += c;
        mse_sum += m;
    }
    let total = (pop.len() * ds.len()) as f64;
    Ok((correct as f64 / total, mse_sum / total))
}
