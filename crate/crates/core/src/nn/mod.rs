//! Minimal dense-network engine.

pub mod dump;
pub mod gradcheck;
mod kernel;
pub mod loss;
pub mod network;
pub mod optim;

pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use loss::{cross_entropy, mse, mse_value, softmax_vjp};
pub use network::{param_count, ForwardTrace, GradVector, MlpNetwork, OutputMode};
pub use optim::{sgd_step, Momentum};
