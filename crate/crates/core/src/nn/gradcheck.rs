//! Central finite differences over network parameters. Test and
//! verification use only; training never calls into this module.

use crate::error::{Error, Result};
use crate::nn::network::{GradVector, MlpNetwork};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Central-difference gradient of `loss(net(x))` with respect to every
/// parameter, evaluated in eval mode.
pub fn finite_diff_grad<F>(net: &MlpNetwork, loss: F, x: &[f64], eps: f64) -> Result<GradVector>
where
    F: Fn(&[f64]) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {eps}")));
    }
    let mut probe = net.clone();
    let mut grad = GradVector::zeros(net.params().len());
    for i in 0..grad.len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + eps;
        let hi = loss(&probe.predict(x)?);
        probe.params_mut()[i] = orig - eps;
        let lo = loss(&probe.predict(x)?);
        probe.params_mut()[i] = orig;
        if !hi.is_finite() || !lo.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss probing parameter {i}")));
        }
        grad[i] = (hi - lo) / (2.0 * eps);
    }
    Ok(grad)
}

/// Largest elementwise relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
