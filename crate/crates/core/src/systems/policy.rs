use serde::{Deserialize, Serialize};

use super::cartpole::{lqr_gains, Cartpole};
use crate::error::{invalid, shape, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    /// Each action coordinate i.i.d. from `[lo, hi)`.
    RandomUniform { lo: f64, hi: f64, dim: usize },
    /// `a = -K s`.
    LinearFeedback { gain: Matrix },
    Constant(Vec<f64>),
}

impl Policy {
    pub fn action_dim(&self) -> usize {
        match self {
            Policy::RandomUniform { dim, .. } => *dim,
            Policy::LinearFeedback { gain } => gain.rows(),
            Policy::Constant(a) => a.len(),
        }
    }

    pub fn act(&self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        match self {
            Policy::RandomUniform { lo, hi, dim } => Ok((0..*dim).map(|_| rng.uniform(*lo, *hi)).collect()),
            Policy::LinearFeedback { gain } => {
                if gain.cols() != state.len() {
                    return Err(shape(format!(
                        "gain {:?} for state of length {}",
                        gain.shape(),
                        state.len()
                    )));
                }
                Ok(gain.mul_vec_unchecked(state).into_iter().map(|v| -v).collect())
            }
            Policy::Constant(a) => Ok(a.clone()),
        }
    }
}

/// Recipe for the policy driving each trajectory. Varied LQR draws its
/// weights from the trajectory's policy seed, so the exact controller can be
/// rebuilt later for recomputed-action rollouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PolicySpec {
    Fixed(Policy),
    VariedLqr {
        cartpole: Cartpole,
        /// Log-uniform range for the state weight.
        q_range: (f64, f64),
        /// Log-uniform range for the input weight.
        r_range: (f64, f64),
    },
}

impl PolicySpec {
    pub fn random_actions(dim: usize) -> Self {
        PolicySpec::Fixed(Policy::RandomUniform { lo: -1.0, hi: 1.0, dim })
    }

    pub fn varied_lqr(cartpole: Cartpole) -> Self {
        PolicySpec::VariedLqr {
            cartpole,
            q_range: (0.5, 5.0),
            r_range: (0.05, 1.0),
        }
    }

    pub fn instantiate(&self, policy_seed: u64) -> Result<Policy> {
        match self {
            PolicySpec::Fixed(p) => Ok(p.clone()),
            PolicySpec::VariedLqr {
                cartpole,
                q_range,
                r_range,
            } => {
                let mut rng = Rng::new(policy_seed);
                let q = log_uniform(&mut rng, *q_range)?;
                let r = log_uniform(&mut rng, *r_range)?;
                Ok(Policy::LinearFeedback {
                    gain: lqr_gains(cartpole, q, r)?,
                })
            }
        }
    }
}

fn log_uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> Result<f64> {
    if !(lo > 0.0) || hi < lo {
        return Err(invalid(format!("log-uniform range ({lo}, {hi})")));
    }
    Ok(rng.uniform(lo.ln(), hi.ln()).exp())
}
