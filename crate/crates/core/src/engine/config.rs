use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Classifier with gated generators trained on the MSE alone.
    Bon,
    /// Adds the per-epoch importance-weighted anchor on generator params.
    Bonpp,
    /// Classifier alone, optionally with dropout.
    Baseline,
}

impl Mode {
    pub fn uses_generators(self) -> bool {
        self != Mode::Baseline
    }
}

/// When the misclassification gate reads the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GateTiming {
    /// Fresh prediction after the classifier step of the batch.
    #[default]
    PostUpdate,
    /// Reuse the prediction made while computing the classifier loss.
    PreUpdate,
}

/// How per-sample classifier gradients combine into one batch step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BatchReduction {
    /// Add them up, so the step grows with the batch.
    #[default]
    Sum,
    /// Average them.
    Mean,
}

/// How the importance-weighted anchor enters a generator step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MasUpdate {
    /// Gradient step on the MSE term, then the exact minimizer of the
    /// quadratic anchor plus proximity term. Stays bounded for any multiplier.
    #[default]
    Proximal,
    /// Plain gradient step on the summed loss.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BonConfig {
    pub mode: Mode,
    /// Number of generators K.
    pub generators: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lr_d: f64,
    pub lr_g: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub momentum: f64,
    pub gate_timing: GateTiming,
    /// Divide the synthetic part of the classifier loss by K.
    pub normalize_synthetic: bool,
    pub batch_reduction: BatchReduction,
    pub mas_update: MasUpdate,
    pub exec: Exec,
}

impl Default for BonConfig {
    fn default() -> Self {
        BonConfig {
            mode: Mode::Bonpp,
            generators: 100,
            alpha: 2.0,
            beta: 1.025,
            lr_d: 0.001,
            lr_g: 0.0001,
            batch_size: 10,
            epochs: 1000,
            seed: 0,
            momentum: 0.0,
            gate_timing: GateTiming::PostUpdate,
            normalize_synthetic: false,
            batch_reduction: BatchReduction::Sum,
            mas_update: MasUpdate::Proximal,
            exec: Exec::default(),
        }
    }
}

impl BonConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.mode.uses_generators() && self.generators == 0 {
            return bad("at least one generator is required".into());
        }
        if !(self.lr_d > 0.0 && self.lr_d.is_finite()) {
            return bad(format!("lr_d must be positive, got {}", self.lr_d));
        }
        if self.mode.uses_generators() && !(self.lr_g > 0.0 && self.lr_g.is_finite()) {
            return bad(format!("lr_g must be positive, got {}", self.lr_g));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        match self.mode {
            Mode::Bon if self.alpha != 1.0 => {
                bad(format!("bon mode uses the unweighted MSE; alpha must be 1, got {}", self.alpha))
            }
            Mode::Bonpp if !(self.alpha >= 0.0 && self.alpha.is_finite()) => {
                bad(format!("alpha must be non-negative, got {}", self.alpha))
            }
            Mode::Bonpp if !(self.beta > 1.0 && self.beta.is_finite()) => {
                bad(format!("beta must be greater than 1, got {}", self.beta))
            }
            _ => Ok(()),
        }
    }

    /// Weight on the MSE term of a generator step.
    pub fn mse_weight(&self) -> f64 {
        match self.mode {
            Mode::Bonpp => self.alpha,
            _ => 1.0,
        }
    }
}
