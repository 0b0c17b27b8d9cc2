//! Synthetic dynamical systems, one-step learned dynamics models and the
//! machinery for measuring how their prediction error compounds over long
//! rollouts.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense matrices, least squares, seeded sampling, percentiles.
//! - [`systems`]: pole-parameterised state-space systems, Lorenz, the double
//!   integrator and a cart-pole with LQR feedback; trajectory generation.
//! - [`models`]: normalisation, a small MLP with reverse-mode gradients and
//!   Adam, deterministic / probabilistic / ensemble / linear / zero models.
//! - [`rollout`]: multi-step composition and the normalised per-step error.
//! - [`experiments`]: sweep configs, presets, CSV artefacts, SVG plots and
//!   the data-statistics report.

pub mod error;
pub mod experiments;
pub mod models;
pub mod numerics;
pub mod rollout;
pub mod systems;

pub use error::{Error, Result};
pub use models::{
    fit_linear_model, fit_normalizer, train_deterministic, train_ensemble, train_probabilistic,
    Dataset, DynamicsModel, Formulation, ModelVariant, Normalizer, TrainConfig,
};
pub use numerics::{percentiles, solve_least_squares, Matrix, PercentileSummary, Rng};
pub use rollout::{
    evaluate, one_step_error_profile, per_step_mse, rollout_logged, rollout_recomputed,
    ErrorProfile, RolloutMode, RolloutResult, StateRanges,
};
pub use systems::{
    Cartpole, DoubleIntegrator, Dynamics, LinearSystem, LorenzParams, Policy, Trajectory,
};
