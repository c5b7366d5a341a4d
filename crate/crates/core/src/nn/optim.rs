use crate::error::{Error, Result};

/// Plain gradient descent: `params -= lr * grads`.
///
/// The step is refused, leaving `params` untouched, if any gradient entry
/// is not finite.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape("sgd gradient", params.len(), grads.len()));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient at parameter {i}")));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

/// Heavy-ball momentum. With `momentum == 0` it is exactly [`sgd_step`].
#[derive(Debug, Clone, Default)]
pub struct Momentum {
    momentum: f64,
    velocity: Vec<f64>,
}

impl Momentum {
    pub fn new(momentum: f64) -> Self {
        Momentum {
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if self.momentum == 0.0 {
            return sgd_step(params, grads, lr);
        }
        if params.len() != grads.len() {
            return Err(Error::shape("sgd gradient", params.len(), grads.len()));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        if self.velocity.len() != params.len() {
            self.velocity = vec![0.0; params.len()];
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            *v = self.momentum * *v + g;
            *p -= lr * *v;
        }
        Ok(())
    }
}
