//! Learned one-step dynamics models behind a single prediction interface.

mod adam;
mod angles;
mod dataset;
mod linear;
mod mlp;
mod model;
mod normalizer;
mod train;

pub use adam::{adam_step, Adam};
pub use angles::{collapse_angles, expand_angles, expand_trajectory};
pub use dataset::{Dataset, Formulation};
pub use linear::fit_linear_model;
pub use mlp::{param_count, Activation, ForwardCache, Mlp};
pub use model::{train_deterministic, train_ensemble, train_probabilistic, DynamicsModel, ModelKind, ModelVariant};
pub use normalizer::{fit_normalizer, Normalizer, STD_FLOOR};
pub use train::{
    batch_loss_and_grad, bound_log_var, encode_dataset, member_seed, split_gaussian, train_network,
    GaussianPrediction, Head, TrainConfig, TrainedNetwork, LOG_VAR_MAX, LOG_VAR_MIN,
};
