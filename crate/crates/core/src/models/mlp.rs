//! Fully connected network with hand-written reverse-mode gradients.
//!
//! Parameters live in one flat buffer, layer by layer: the `out x in`
//! row-major weight block followed by the `out` biases. Gradients use the
//! same layout, which keeps the optimiser a plain slice update.

use serde::{Deserialize, Serialize};

use crate::error::{shape, Result};
use crate::numerics::{gemm, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// `[input, hidden..., output]`.
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
}

/// Per-layer outputs kept from a forward pass for the backward pass.
pub struct ForwardCache {
    batch: usize,
    /// `acts[0]` is the input block, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least the input")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(widths: Vec<usize>, activation: Activation, rng: &mut Rng) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(shape(format!("layer widths {widths:?}")));
        }
        let count = param_count(&widths);
        let mut params = Vec::with_capacity(count);
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.uniform(-limit, limit)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        debug_assert_eq!(params.len(), count);
        Ok(Self {
            widths,
            activation,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// `(weight offset, bias offset)` of layer `l`.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.widths.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        (off, off + self.widths[l] * self.widths[l + 1])
    }

    /// Forward pass for one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(shape(format!(
                "network input of width {} for a {}-wide layer",
                input.len(),
                self.input_dim()
            )));
        }
        let mut x = input.to_vec();
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            let w = &self.params[w_off..b_off];
            let b = &self.params[b_off..b_off + n_out];
            let hidden = l + 1 < self.num_layers();
            x = (0..n_out)
                .map(|o| {
                    let z = b[o] + crate::numerics::dot(&w[o * n_in..(o + 1) * n_in], &x);
                    if hidden {
                        self.activation.apply(z)
                    } else {
                        z
                    }
                })
                .collect();
        }
        Ok(x)
    }

    /// Forward pass over a row-major `batch x input` block.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> ForwardCache {
        assert_eq!(inputs.len(), batch * self.input_dim());
        let mut acts = Vec::with_capacity(self.widths.len());
        acts.push(inputs.to_vec());
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            let mut z = Vec::with_capacity(batch * n_out);
            for _ in 0..batch {
                z.extend_from_slice(&self.params[b_off..b_off + n_out]);
            }
            // Z = X W^T + b
            gemm(
                batch,
                n_in,
                n_out,
                1.0,
                (&acts[l], n_in as isize, 1),
                (&self.params[w_off..b_off], 1, n_in as isize),
                1.0,
                &mut z,
                n_out,
            );
            if l + 1 < self.num_layers() {
                for v in &mut z {
                    *v = self.activation.apply(*v);
                }
            }
            acts.push(z);
        }
        ForwardCache { batch, acts }
    }

    /// Accumulates `d loss / d params` into `grads` given
    /// `d loss / d output` for every row of the cached batch.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64], grads: &mut [f64]) {
        assert_eq!(grads.len(), self.params.len());
        let batch = cache.batch;
        assert_eq!(d_output.len(), batch * self.output_dim());
        let mut delta = d_output.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            if l + 1 < self.num_layers() {
                for (d, y) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= self.activation.grad_from_output(*y);
                }
            }
            // dW += delta^T X
            gemm(
                n_out,
                batch,
                n_in,
                1.0,
                (&delta, 1, n_out as isize),
                (&cache.acts[l], n_in as isize, 1),
                1.0,
                &mut grads[w_off..b_off],
                n_in,
            );
            let gb = &mut grads[b_off..b_off + n_out];
            for row in delta.chunks_exact(n_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 {
                // dX = delta W
                let mut prev = vec![0.0; batch * n_in];
                gemm(
                    batch,
                    n_out,
                    n_in,
                    1.0,
                    (&delta, n_out as isize, 1),
                    (&self.params[w_off..b_off], n_in as isize, 1),
                    0.0,
                    &mut prev,
                    n_in,
                );
                delta = prev;
            }
        }
    }

    /// Smallest |pre-activation| over hidden units for `input`; used to keep
    /// finite-difference checks away from ReLU kinks.
    pub fn min_abs_preactivation(&self, input: &[f64]) -> f64 {
        let mut x = input.to_vec();
        let mut best = f64::INFINITY;
        for l in 0..self.num_layers().saturating_sub(1) {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            let w = &self.params[w_off..b_off];
            x = (0..n_out)
                .map(|o| {
                    let z = self.params[b_off + o] + crate::numerics::dot(&w[o * n_in..(o + 1) * n_in], &x);
                    best = best.min(z.abs());
                    self.activation.apply(z)
                })
                .collect();
        }
        best
    }
}

pub fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}
