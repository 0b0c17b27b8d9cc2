use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Formulation};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const STD_FLOOR: f64 = 1e-8;

/// Unit-Gaussian scaling for states and targets, `[-1, 1]` scaling for
/// actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
    pub action_lo: Vec<f64>,
    pub action_hi: Vec<f64>,
}

impl Normalizer {
    /// The no-op normaliser used when normalisation is disabled.
    pub fn identity(state_dim: usize, action_dim: usize) -> Self {
        Self {
            state_mean: vec![0.0; state_dim],
            state_std: vec![1.0; state_dim],
            target_mean: vec![0.0; state_dim],
            target_std: vec![1.0; state_dim],
            action_lo: vec![-1.0; action_dim],
            action_hi: vec![1.0; action_dim],
        }
    }

    pub fn normalize_state(&self, s: &[f64]) -> Vec<f64> {
        standardize(s, &self.state_mean, &self.state_std)
    }

    pub fn denormalize_state(&self, z: &[f64]) -> Vec<f64> {
        unstandardize(z, &self.state_mean, &self.state_std)
    }

    pub fn normalize_target(&self, y: &[f64]) -> Vec<f64> {
        standardize(y, &self.target_mean, &self.target_std)
    }

    pub fn denormalize_target(&self, z: &[f64]) -> Vec<f64> {
        unstandardize(z, &self.target_mean, &self.target_std)
    }

    pub fn normalize_action(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .enumerate()
            .map(|(i, v)| {
                let (lo, hi) = (self.action_lo[i], self.action_hi[i]);
                if hi - lo > 1e-12 {
                    2.0 * (v - lo) / (hi - lo) - 1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Network input `[normalized s, normalized a]`, written into `out`.
    pub fn encode_input(&self, s: &[f64], a: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.normalize_state(s));
        out.extend(self.normalize_action(a));
    }
}

fn standardize(x: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    x.iter().zip(mean).zip(std).map(|((v, m), s)| (v - m) / s).collect()
}

fn unstandardize(z: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    z.iter().zip(mean).zip(std).map(|((v, m), s)| v * s + m).collect()
}

fn column_stats(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    let mut mean = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (acc, v) in mean.iter_mut().zip(m.row(i)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for ((acc, v), mu) in var.iter_mut().zip(m.row(i)).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
    (mean, std)
}

/// Fits per-coordinate statistics of states, targets (per `formulation`)
/// and action bounds.
pub fn fit_normalizer(data: &Dataset, formulation: Formulation) -> Result<Normalizer> {
    if data.len() < 2 {
        return Err(Error::Empty(format!(
            "normaliser needs at least 2 transitions, got {}",
            data.len()
        )));
    }
    let (state_mean, state_std) = column_stats(&data.states);
    let (target_mean, target_std) = column_stats(&data.targets(formulation));
    let da = data.action_dim();
    let mut action_lo = vec![f64::INFINITY; da];
    let mut action_hi = vec![f64::NEG_INFINITY; da];
    for i in 0..data.len() {
        for (j, v) in data.actions.row(i).iter().enumerate() {
            action_lo[j] = action_lo[j].min(*v);
            action_hi[j] = action_hi[j].max(*v);
        }
    }
    Ok(Normalizer {
        state_mean,
        state_std,
        target_mean,
        target_std,
        action_lo,
        action_hi,
    })
}
