//! Dense feedforward networks with rectifier hidden layers.
//!
//! Parameters live in one flat vector. For each layer `l` mapping
//! `dims[l]` inputs to `dims[l + 1]` outputs, the vector holds the weight
//! matrix in row-major order (one row of `dims[l]` weights per output unit)
//! followed by the `dims[l + 1]` biases. Layers follow each other in order.

use std::ops::{Deref, DerefMut};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::kernel;
use crate::error::{Error, Result};
use crate::seed::Rng;

/// How the last layer's pre-activation is turned into the network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    Linear,
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    dims: Vec<usize>,
    output_mode: OutputMode,
    dropout_p: f64,
    params: Vec<f64>,
}

/// Everything recorded during a forward pass that the backward pass needs.
///
/// A trace covers `rows` inputs evaluated together; every per-layer buffer
/// stores them row-major, one row of that layer's width per input.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    dims: Vec<usize>,
    param_len: usize,
    rows: usize,
    /// `activations[0]` is the input; `activations[l]` for `0 < l < depth`
    /// is the (masked) output of hidden layer `l`.
    activations: Vec<Vec<f64>>,
    /// Pre-activation of every layer, including the output layer.
    pre_activations: Vec<Vec<f64>>,
    /// Per hidden layer scale factors (0 or 1/(1-p)) when dropout was active.
    masks: Vec<Option<Vec<f64>>>,
    output: Vec<f64>,
}

impl ForwardTrace {
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Outputs of all rows, concatenated.
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn row_output(&self, s: usize) -> &[f64] {
        let w = *self.dims.last().expect("dims checked at construction");
        &self.output[s * w..(s + 1) * w]
    }

    pub fn into_output(self) -> Vec<f64> {
        self.output
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }

    /// Final-layer values before the output transform.
    pub fn logits(&self) -> &[f64] {
        self.pre_activations.last().expect("network has at least one layer")
    }

    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre_activations
    }

    pub fn hidden_activations(&self) -> &[Vec<f64>] {
        &self.activations[1..]
    }

    pub fn dropout_masks(&self) -> &[Option<Vec<f64>>] {
        &self.masks
    }
}

/// Flat gradient aligned index-for-index with [`MlpNetwork::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector(Vec<f64>);

impl GradVector {
    pub fn zeros(len: usize) -> Self {
        GradVector(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &GradVector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.0 {
            *a *= factor;
        }
    }
}

impl From<Vec<f64>> for GradVector {
    fn from(v: Vec<f64>) -> Self {
        GradVector(v)
    }
}

impl Deref for GradVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for GradVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

impl MlpNetwork {
    /// Builds a network with weights drawn uniformly from
    /// `±sqrt(6 / fan_in)` and zero biases.
    pub fn new(
        dims: &[usize],
        output_mode: OutputMode,
        dropout_p: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut net = Self::zeros(dims, output_mode, dropout_p)?;
        let mut offset = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.random_range(-bound..bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize], output_mode: OutputMode, dropout_p: f64) -> Result<Self> {
        let n = param_count(dims);
        Self::from_params(dims, output_mode, dropout_p, vec![0.0; n])
    }

    pub fn from_params(
        dims: &[usize],
        output_mode: OutputMode,
        dropout_p: f64,
        params: Vec<f64>,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "a network needs at least input and output dims, got {dims:?}"
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Config(format!("layer dims must be positive: {dims:?}")));
        }
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {dropout_p}")));
        }
        let expected = param_count(dims);
        if params.len() != expected {
            return Err(Error::shape("parameter vector", expected, params.len()));
        }
        Ok(MlpNetwork {
            dims: dims.to_vec(),
            output_mode,
            dropout_p,
            params,
        })
    }

    /// A linear-output network computing the identity map.
    ///
    /// With no hidden layers this is literally `W = I, b = 0`. With hidden
    /// layers the first layer splits the input into positive and negative
    /// parts `[x, -x]`, which the rectifiers pass through unchanged, and the
    /// last layer recombines them, so every hidden width must be at least
    /// twice the input width.
    pub fn identity(dims: &[usize]) -> Result<Self> {
        let d = dims[0];
        if *dims.last().unwrap_or(&0) != d {
            return Err(Error::Config("identity map needs output dim = input dim".into()));
        }
        let mut net = Self::zeros(dims, OutputMode::Linear, 0.0)?;
        let depth = net.depth();
        if depth == 1 {
            for i in 0..d {
                net.params[i * d + i] = 1.0;
            }
            return Ok(net);
        }
        if dims[1..depth].iter().any(|&h| h < 2 * d) {
            return Err(Error::Config(format!(
                "identity map through rectifiers needs hidden widths >= {}",
                2 * d
            )));
        }
        for l in 0..depth {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let (w_off, _) = net.layer_offsets(l);
            for i in 0..d {
                let w = &mut net.params[w_off..w_off + fan_in * fan_out];
                if l == 0 {
                    w[i * fan_in + i] = 1.0;
                    w[(d + i) * fan_in + i] = -1.0;
                } else if l == depth - 1 {
                    w[i * fan_in + i] = 1.0;
                    w[i * fan_in + d + i] = -1.0;
                } else {
                    w[i * fan_in + i] = 1.0;
                    w[(d + i) * fan_in + d + i] = 1.0;
                }
            }
        }
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("dims checked at construction")
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn output_mode(&self) -> OutputMode {
        self.output_mode
    }

    pub fn dropout_p(&self) -> f64 {
        self.dropout_p
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape("parameter vector", self.params.len(), params.len()));
        }
        self.params = params;
        Ok(())
    }

    /// Offsets of the weight block and the bias block of layer `l`.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let before = param_count(&self.dims[..=l]);
        (before, before + self.dims[l] * self.dims[l + 1])
    }

    /// Runs the network. Passing an rng selects training mode, in which
    /// inverted dropout is applied after every hidden activation.
    pub fn forward(&self, x: &[f64], train_rng: Option<&mut Rng>) -> Result<ForwardTrace> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("network input", self.input_dim(), x.len()));
        }
        self.forward_batch(x, 1, train_rng)
    }

    /// Runs `rows` inputs stored row-major in `xs` through the network.
    ///
    /// Row `s` of the result is bit-for-bit what [`forward`](Self::forward)
    /// gives for that input alone. In training mode the dropout masks are
    /// drawn row by row, so one rng shared across sequential single-row
    /// calls yields the same masks as one batched call.
    pub fn forward_batch(&self, xs: &[f64], rows: usize, train_rng: Option<&mut Rng>) -> Result<ForwardTrace> {
        if xs.len() != rows * self.input_dim() {
            return Err(Error::shape("network input batch", rows * self.input_dim(), xs.len()));
        }
        let depth = self.depth();
        let rng = train_rng.filter(|_| self.dropout_p > 0.0);
        let keep_scale = 1.0 / (1.0 - self.dropout_p);

        let mut masks: Vec<Option<Vec<f64>>> = vec![None; depth - 1];
        if let Some(r) = rng {
            let mut drawn: Vec<Vec<f64>> = (1..depth).map(|l| Vec::with_capacity(rows * self.dims[l])).collect();
            for _ in 0..rows {
                for (l, m) in drawn.iter_mut().enumerate() {
                    for _ in 0..self.dims[l + 1] {
                        m.push(if r.random::<f64>() < self.dropout_p { 0.0 } else { keep_scale });
                    }
                }
            }
            masks = drawn.into_iter().map(Some).collect();
        }

        let mut activations = Vec::with_capacity(depth);
        let mut pre_activations = Vec::with_capacity(depth);
        activations.push(xs.to_vec());
        for l in 0..depth {
            let (w_off, b_off) = self.layer_offsets(l);
            let fan_out = self.dims[l + 1];
            let mut z = vec![0.0; rows * fan_out];
            kernel::affine(
                &self.params[w_off..b_off],
                &self.params[b_off..b_off + fan_out],
                activations.last().expect("input pushed above"),
                rows,
                &mut z,
            );
            if l + 1 < depth {
                let mut a: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
                if let Some(Some(m)) = masks.get(l) {
                    for (ai, mi) in a.iter_mut().zip(m) {
                        *ai *= mi;
                    }
                }
                activations.push(a);
            }
            pre_activations.push(z);
        }

        let mut output = pre_activations.last().expect("depth >= 1").clone();
        if self.output_mode == OutputMode::Softmax {
            for row in output.chunks_exact_mut(self.output_dim()) {
                softmax_in_place(row);
            }
        }
        Ok(ForwardTrace {
            dims: self.dims.clone(),
            param_len: self.params.len(),
            rows,
            activations,
            pre_activations,
            masks,
            output,
        })
    }

    pub fn forward_eval(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.forward(x, None)
    }

    /// Eval-mode output.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x, None)?.into_output())
    }

    /// Reverse-mode gradient of a scalar loss with respect to all parameters.
    ///
    /// `d_output` is the loss gradient with respect to the final layer's
    /// pre-activation: the logits for softmax networks (as returned by
    /// [`crate::nn::cross_entropy`]) and the output itself for linear ones.
    pub fn backward(&self, trace: &ForwardTrace, d_output: &[f64]) -> Result<GradVector> {
        let mut grad = GradVector::zeros(self.params.len());
        self.backward_into(trace, d_output, &mut grad)?;
        Ok(grad)
    }

    /// Like [`backward`](Self::backward) but adds into an existing gradient.
    ///
    /// For a trace of several rows, `d_output` holds one output gradient per
    /// row and the row gradients are summed, added in row order exactly as
    /// repeated single-row calls would add them.
    pub fn backward_into(
        &self,
        trace: &ForwardTrace,
        d_output: &[f64],
        grad: &mut GradVector,
    ) -> Result<()> {
        if trace.dims != self.dims || trace.param_len != self.params.len() {
            return Err(Error::Trace);
        }
        let rows = trace.rows;
        if d_output.len() != rows * self.output_dim() {
            return Err(Error::shape("output gradient", rows * self.output_dim(), d_output.len()));
        }
        if grad.len() != self.params.len() {
            return Err(Error::shape("gradient buffer", self.params.len(), grad.len()));
        }

        let depth = self.depth();
        let mut delta = d_output.to_vec();
        for l in (0..depth).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            {
                let (gw, gb) = grad.0[w_off..b_off + fan_out].split_at_mut(fan_in * fan_out);
                kernel::outer_accumulate(gw, gb, &delta, &trace.activations[l], rows);
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; rows * fan_in];
            kernel::back_project(&self.params[w_off..b_off], &delta, rows, fan_out, &mut prev);
            let z = &trace.pre_activations[l - 1];
            for (p, &zi) in prev.iter_mut().zip(z) {
                if zi <= 0.0 {
                    *p = 0.0;
                }
            }
            if let Some(mask) = &trace.masks[l - 1] {
                for (p, m) in prev.iter_mut().zip(mask) {
                    *p *= m;
                }
            }
            delta = prev;
        }
        Ok(())
    }
}
