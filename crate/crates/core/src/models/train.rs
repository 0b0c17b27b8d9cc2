//! Mini-batch training of deterministic (MSE) and probabilistic (Gaussian
//! NLL) networks.

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::dataset::{Dataset, Formulation};
use super::mlp::{Activation, Mlp};
use super::normalizer::{fit_normalizer, Normalizer};
use crate::error::{invalid, Error, Result};
use crate::numerics::{derive_seed, Rng};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    /// Network output is the (normalised) target.
    Deterministic,
    /// Network output is `[mean, raw log-variance]` per coordinate.
    Probabilistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub ensemble_size: usize,
    pub normalization_enabled: bool,
    pub formulation: Formulation,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl TrainConfig {
    pub fn deterministic() -> Self {
        Self {
            epochs: 20,
            learning_rate: 3e-4,
            batch_size: 32,
            ensemble_size: 5,
            normalization_enabled: true,
            formulation: Formulation::Delta,
            hidden: vec![256, 256],
            activation: Activation::Relu,
            seed: 0,
        }
    }

    pub fn probabilistic() -> Self {
        Self {
            learning_rate: 2.5e-5,
            batch_size: 64,
            ..Self::deterministic()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.ensemble_size == 0 {
            return Err(invalid(format!(
                "learning rate {}, batch {}, ensemble {}",
                self.learning_rate, self.batch_size, self.ensemble_size
            )));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(invalid(format!("hidden widths {:?}", self.hidden)));
        }
        Ok(())
    }
}

/// Diagonal Gaussian over the next-state target.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrediction {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Smoothly squashes a raw network output into `(LOG_VAR_MIN, LOG_VAR_MAX)`.
/// Returns the bounded value and its derivative.
pub fn bound_log_var(raw: f64) -> (f64, f64) {
    let upper = LOG_VAR_MAX - softplus(LOG_VAR_MAX - raw);
    let d_upper = sigmoid(LOG_VAR_MAX - raw);
    let lv = LOG_VAR_MIN + softplus(upper - LOG_VAR_MIN);
    (lv, d_upper * sigmoid(upper - LOG_VAR_MIN))
}

pub fn split_gaussian(output: &[f64]) -> GaussianPrediction {
    let d = output.len() / 2;
    GaussianPrediction {
        mean: output[..d].to_vec(),
        log_var: output[d..].iter().map(|r| bound_log_var(*r).0).collect(),
    }
}

/// Mean per-sample loss over a batch and its gradient w.r.t. the
/// network parameters (written into `grads`, which is overwritten).
///
/// Deterministic: `sum_d (f - y)^2`. Probabilistic:
/// `sum_d (mu - y)^2 exp(-lv) + lv`.
pub fn batch_loss_and_grad(
    net: &Mlp,
    head: Head,
    inputs: &[f64],
    targets: &[f64],
    batch: usize,
    grads: &mut [f64],
) -> f64 {
    let cache = net.forward_batch(inputs, batch);
    let out = cache.output();
    let d = targets.len() / batch;
    let scale = 1.0 / batch as f64;
    let mut loss = 0.0;
    let mut d_out = vec![0.0; out.len()];
    match head {
        Head::Deterministic => {
            for ((o, y), g) in out.iter().zip(targets).zip(d_out.iter_mut()) {
                let r = o - y;
                loss += r * r;
                *g = 2.0 * r * scale;
            }
        }
        Head::Probabilistic => {
            for b in 0..batch {
                let row = &out[b * 2 * d..(b + 1) * 2 * d];
                let grow = &mut d_out[b * 2 * d..(b + 1) * 2 * d];
                for j in 0..d {
                    let (lv, dlv) = bound_log_var(row[d + j]);
                    let r = row[j] - targets[b * d + j];
                    let inv = (-lv).exp();
                    loss += r * r * inv + lv;
                    grow[j] = 2.0 * r * inv * scale;
                    grow[d + j] = (1.0 - r * r * inv) * dlv * scale;
                }
            }
        }
    }
    grads.iter_mut().for_each(|g| *g = 0.0);
    net.backward(&cache, &d_out, grads);
    loss * scale
}

/// A trained network with the normaliser it was trained under.
#[derive(Clone, Debug)]
pub struct TrainedNetwork {
    pub net: Mlp,
    pub normalizer: Normalizer,
    pub head: Head,
    pub epoch_losses: Vec<f64>,
}

/// Normalised network inputs (`n x (ds + da)`) and targets (`n x ds`).
pub fn encode_dataset(data: &Dataset, norm: &Normalizer, formulation: Formulation) -> (Vec<f64>, Vec<f64>) {
    let n = data.len();
    let mut inputs = Vec::with_capacity(n * (data.state_dim() + data.action_dim()));
    let mut targets = Vec::with_capacity(n * data.state_dim());
    let mut buf = Vec::new();
    for i in 0..n {
        norm.encode_input(data.states.row(i), data.actions.row(i), &mut buf);
        inputs.extend_from_slice(&buf);
        targets.extend(norm.normalize_target(&data.target(i, formulation)));
    }
    (inputs, targets)
}

pub fn train_network(data: &Dataset, cfg: &TrainConfig, head: Head) -> Result<TrainedNetwork> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training dataset".into()));
    }
    let normalizer = if cfg.normalization_enabled {
        fit_normalizer(data, cfg.formulation)?
    } else {
        Normalizer::identity(data.state_dim(), data.action_dim())
    };
    let (inputs, targets) = encode_dataset(data, &normalizer, cfg.formulation);
    let ds = data.state_dim();
    let din = ds + data.action_dim();
    let dout = match head {
        Head::Deterministic => ds,
        Head::Probabilistic => 2 * ds,
    };

    let mut widths = vec![din];
    widths.extend(&cfg.hidden);
    widths.push(dout);
    let mut net = Mlp::new(widths, cfg.activation, &mut Rng::derived(cfg.seed, 0))?;
    let mut shuffle = Rng::derived(cfg.seed, 1);
    let mut opt = Adam::new(net.num_params());
    let mut grads = vec![0.0; net.num_params()];

    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_in = Vec::with_capacity(cfg.batch_size * din);
    let mut batch_tg = Vec::with_capacity(cfg.batch_size * ds);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        shuffle.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch_in.clear();
            batch_tg.clear();
            for &i in chunk {
                batch_in.extend_from_slice(&inputs[i * din..(i + 1) * din]);
                batch_tg.extend_from_slice(&targets[i * ds..(i + 1) * ds]);
            }
            let loss = batch_loss_and_grad(&net, head, &batch_in, &batch_tg, chunk.len(), &mut grads);
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss in epoch {epoch} (learning rate {}, batch {}, {} samples); \
                     check the learning rate and the data scale",
                    cfg.learning_rate, cfg.batch_size, n
                )));
            }
            total += loss * chunk.len() as f64;
            opt.step(&mut net.params, &grads, cfg.learning_rate);
        }
        epoch_losses.push(total / n as f64);
    }
    Ok(TrainedNetwork {
        net,
        normalizer,
        head,
        epoch_losses,
    })
}

/// Seed of ensemble member `k` under root seed `root`.
pub fn member_seed(root: u64, k: usize) -> u64 {
    derive_seed(root, k as u64)
}
