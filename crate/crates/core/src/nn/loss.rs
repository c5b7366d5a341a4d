use crate::error::{Error, Result};

/// Floor added inside the logarithm of the cross-entropy.
pub const CE_EPSILON: f64 = 1e-12;

/// Cross-entropy of a probability vector against a class label.
///
/// Returns the loss and its gradient with respect to the logits that
/// produced `probs` through a softmax, which is `probs - onehot(label)`.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= probs.len() {
        return Err(Error::Label {
            label,
            classes: probs.len(),
        });
    }
    let loss = -(probs[label] + CE_EPSILON).ln();
    let mut grad = probs.to_vec();
    grad[label] -= 1.0;
    Ok((loss.max(0.0), grad))
}

/// Mean squared error over components, with its gradient in `a`.
pub fn mse(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::shape("mse operands", a.len(), b.len()));
    }
    let d = a.len() as f64;
    let mut loss = 0.0;
    let grad = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let diff = x - y;
            loss += diff * diff;
            2.0 * diff / d
        })
        .collect();
    Ok((loss / d, grad))
}

/// Mean squared error without the gradient.
pub fn mse_value(a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    s / a.len() as f64
}

/// Pulls a gradient with respect to softmax probabilities back to the logits.
pub fn softmax_vjp(probs: &[f64], d_probs: &[f64]) -> Vec<f64> {
    let inner: f64 = probs.iter().zip(d_probs).map(|(p, g)| p * g).sum();
    probs.iter().zip(d_probs).map(|(p, g)| p * (g - inner)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::softmax_in_place;

    #[test]
    fn uniform_cross_entropy_is_ln2() {
        let (l, _) = cross_entropy(&[0.5, 0.5], 0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-11);
    }

    #[test]
    fn perfect_prediction_has_negligible_loss() {
        let (l, _) = cross_entropy(&[1.0, 0.0], 0).unwrap();
        assert!(l <= 1e-11);
    }

    #[test]
    fn cross_entropy_matches_scalar_log() {
        let (l, g) = cross_entropy(&[0.25, 0.75], 1).unwrap();
        let expected = -(0.75f64).ln();
        assert!((l - expected).abs() < 1e-11);
        assert_eq!(g, vec![0.25, -0.25]);
    }

    #[test]
    fn uniform_logits_gradient() {
        let mut p = vec![0.0, 0.0];
        softmax_in_place(&mut p);
        let (_, g) = cross_entropy(&p, 0).unwrap();
        assert_eq!(g, vec![-0.5, 0.5]);
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            cross_entropy(&[0.5, 0.5], 2),
            Err(Error::Label { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn mse_conventions() {
        assert_eq!(mse(&[0.3, -1.0], &[0.3, -1.0]).unwrap().0, 0.0);
        assert_eq!(mse(&[1.0, 1.0], &[0.0, 0.0]).unwrap().0, 1.0);
        assert!(matches!(mse(&[1.0], &[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn mse_gradient_matches_central_differences() {
        let a = [0.7, -1.2, 3.3, 0.01, -0.5];
        let b = [1.1, 0.4, -2.0, 0.0, 0.25];
        let (_, g) = mse(&a, &b).unwrap();
        let eps = 1e-6;
        for i in 0..a.len() {
            let mut hi = a;
            let mut lo = a;
            hi[i] += eps;
            lo[i] -= eps;
            let fd = (mse_value(&hi, &b) - mse_value(&lo, &b)) / (2.0 * eps);
            assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn softmax_vjp_of_log_prob_matches_ce_gradient() {
        let mut p = vec![0.3, -0.2, 1.5];
        softmax_in_place(&mut p);
        let d_probs = [0.0, -1.0 / p[1], 0.0];
        let via_vjp = softmax_vjp(&p, &d_probs);
        let (_, direct) = cross_entropy(&p, 1).unwrap();
        for (a, b) in via_vjp.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
