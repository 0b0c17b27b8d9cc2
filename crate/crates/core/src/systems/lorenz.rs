use serde::{Deserialize, Serialize};

use super::Dynamics;
use crate::error::{invalid, shape, Result};
use crate::numerics::Rng;

/// Lorenz vector field `x' = sigma (y - x)`, `y' = x (eta - z) - y`,
/// `z' = x y - beta z`, integrated with classic RK4.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub eta: f64,
    pub beta: f64,
    pub dt: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            eta: 28.0,
            beta: 8.0 / 3.0,
            dt: 0.01,
        }
    }
}

impl LorenzParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(invalid(format!("Lorenz step {} must be positive", self.dt)));
        }
        Ok(())
    }

    fn field(&self, [x, y, z]: [f64; 3]) -> [f64; 3] {
        [
            self.sigma * (y - x),
            x * (self.eta - z) - y,
            x * y - self.beta * z,
        ]
    }
}

/// One RK4 step of length `params.dt`.
pub fn lorenz_step(state: [f64; 3], params: &LorenzParams) -> [f64; 3] {
    let h = params.dt;
    let add = |s: [f64; 3], k: [f64; 3], c: f64| [s[0] + c * k[0], s[1] + c * k[1], s[2] + c * k[2]];
    let k1 = params.field(state);
    let k2 = params.field(add(state, k1, h / 2.0));
    let k3 = params.field(add(state, k2, h / 2.0));
    let k4 = params.field(add(state, k3, h));
    let mut out = state;
    for i in 0..3 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

impl Dynamics for LorenzParams {
    fn state_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        0
    }

    fn step(&self, s: &[f64], a: &[f64], _rng: &mut Rng) -> Result<Vec<f64>> {
        if s.len() != 3 || !a.is_empty() {
            return Err(shape(format!("Lorenz state/action lengths {}/{}", s.len(), a.len())));
        }
        Ok(lorenz_step([s[0], s[1], s[2]], self).to_vec())
    }
}
