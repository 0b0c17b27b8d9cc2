//! Environments that generate training and evaluation data.

mod cartpole;
mod double_integrator;
mod linear;
mod lorenz;
mod policy;
mod trajectory;

pub use cartpole::{lqr_gains, lqr_solve, solve_dare, Cartpole, LqrSolution};
pub use double_integrator::{double_integrator_trajectory, snr_estimate, DoubleIntegrator};
pub use linear::{
    transient_decay_steps, LinearSystem, StateSpaceSpec, BASE_NOISE, DECAY_CAP, REGULARIZED_NORM,
};
pub use lorenz::{lorenz_step, LorenzParams};
pub use policy::{Policy, PolicySpec};
pub use trajectory::{
    format_float, generate_dataset, generate_lorenz_dataset, read_trajectories_csv, simulate,
    write_trajectories_csv, DatasetSpec, InitialState, SystemSpec, Trajectory, DIVERGENCE_BOUND,
};

use crate::error::Result;
use crate::numerics::Rng;

/// A discrete-time environment transition.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn step(&self, s: &[f64], a: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;
}
