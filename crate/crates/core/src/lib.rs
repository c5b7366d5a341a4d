//! Boundary optimizing networks.
//!
//! A classifier is trained on real samples together with perturbed copies
//! produced by a population of small generator networks. A generator only
//! learns from points the classifier gets wrong, pulling them back toward
//! their source; the BON++ variant anchors generator parameters to a
//! per-epoch snapshot weighted by a streaming importance estimate, so
//! generators keep producing support points they learned earlier.
//!
//! - [`nn`]: dense networks, losses, SGD, finite-difference checks, dumps
//! - [`engine`]: the training algorithms
//! - [`data`]: Iris ingestion, the constructed blob set, batching
//! - [`experiment`]: config-driven runs and CSV exports

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod engine;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};
pub use exec::Exec;
