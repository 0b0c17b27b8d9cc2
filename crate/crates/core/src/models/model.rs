use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Formulation};
use super::mlp::Mlp;
use super::normalizer::Normalizer;
use super::train::{member_seed, split_gaussian, train_network, GaussianPrediction, Head, TrainConfig};
use crate::error::{shape, Error, Result};
use crate::numerics::{gemm, Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelVariant {
    /// Predicts the zero vector as the next state.
    Zero,
    /// Predicts `s' = s`; the zero-delta reading of the zero baseline.
    Persistence,
    /// `s' = s + A s + B a` with `A` `d_s x d_s` and `B` `d_s x d_a`.
    Linear { a: Matrix, b: Matrix },
    Deterministic(Mlp),
    /// Network outputs `[mean, raw log-variance]`; rollouts use the mean.
    Probabilistic(Mlp),
    Ensemble(Vec<DynamicsModel>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsModel {
    pub variant: ModelVariant,
    pub formulation: Formulation,
    pub normalizer: Normalizer,
    pub state_dim: usize,
    pub action_dim: usize,
}

const FORMAT_TAG: &str = "compound-dynamics-model";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    model: DynamicsModel,
}

impl DynamicsModel {
    pub fn zero(state_dim: usize, action_dim: usize) -> Self {
        Self::baseline(ModelVariant::Zero, state_dim, action_dim)
    }

    pub fn persistence(state_dim: usize, action_dim: usize) -> Self {
        Self::baseline(ModelVariant::Persistence, state_dim, action_dim)
    }

    fn baseline(variant: ModelVariant, state_dim: usize, action_dim: usize) -> Self {
        Self {
            variant,
            formulation: Formulation::TrueState,
            normalizer: Normalizer::identity(state_dim, action_dim),
            state_dim,
            action_dim,
        }
    }

    /// Mean-of-members ensemble. Members must agree on dimensions.
    pub fn ensemble(members: Vec<DynamicsModel>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Empty("ensemble with no members".into()))?;
        if members
            .iter()
            .any(|m| m.state_dim != first.state_dim || m.action_dim != first.action_dim)
        {
            return Err(shape("ensemble members disagree on dimensions"));
        }
        Ok(Self {
            formulation: first.formulation,
            normalizer: first.normalizer.clone(),
            state_dim: first.state_dim,
            action_dim: first.action_dim,
            variant: ModelVariant::Ensemble(members),
        })
    }

    pub fn members(&self) -> Option<&[DynamicsModel]> {
        match &self.variant {
            ModelVariant::Ensemble(m) => Some(m),
            _ => None,
        }
    }

    /// Predicted next state for one `(s, a)` pair.
    pub fn predict(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let states = Matrix::from_vec(1, s.len(), s.to_vec())?;
        let actions = Matrix::from_vec(1, a.len(), a.to_vec())?;
        Ok(self.predict_batch(&states, &actions)?.into_vec())
    }

    /// Predicted next states for every row of `states` / `actions`.
    ///
    /// Non-finite inputs are rejected; non-finite outputs are returned as is
    /// and left for the caller to flag.
    pub fn predict_batch(&self, states: &Matrix, actions: &Matrix) -> Result<Matrix> {
        if states.cols() != self.state_dim
            || actions.cols() != self.action_dim
            || states.rows() != actions.rows()
        {
            return Err(shape(format!(
                "model expects ({}, {}) inputs, got {:?} and {:?}",
                self.state_dim,
                self.action_dim,
                states.shape(),
                actions.shape()
            )));
        }
        if !states.is_finite() || !actions.is_finite() {
            return Err(Error::NonFinite("model input".into()));
        }
        Ok(self.predict_unchecked(states, actions))
    }

    fn predict_unchecked(&self, states: &Matrix, actions: &Matrix) -> Matrix {
        let n = states.rows();
        let ds = self.state_dim;
        match &self.variant {
            ModelVariant::Zero => Matrix::zeros(n, ds),
            ModelVariant::Persistence => states.clone(),
            ModelVariant::Linear { a, b } => {
                let mut out = states.clone();
                // out += S A^T + U B^T
                gemm(
                    n,
                    ds,
                    ds,
                    1.0,
                    (states.as_slice(), ds as isize, 1),
                    (a.as_slice(), 1, ds as isize),
                    1.0,
                    out.as_mut_slice(),
                    ds,
                );
                if self.action_dim > 0 {
                    let da = self.action_dim;
                    gemm(
                        n,
                        da,
                        ds,
                        1.0,
                        (actions.as_slice(), da as isize, 1),
                        (b.as_slice(), 1, da as isize),
                        1.0,
                        out.as_mut_slice(),
                        ds,
                    );
                }
                out
            }
            ModelVariant::Deterministic(net) => {
                let raw = self.network_output(net, states, actions);
                self.decode(states, &raw, ds)
            }
            ModelVariant::Probabilistic(net) => {
                let raw = self.network_output(net, states, actions);
                self.decode(states, &raw, 2 * ds)
            }
            ModelVariant::Ensemble(members) => {
                let mut mean = members[0].predict_unchecked(states, actions);
                for (k, m) in members.iter().enumerate().skip(1) {
                    let p = m.predict_unchecked(states, actions);
                    let w = 1.0 / (k + 1) as f64;
                    for (acc, v) in mean.as_mut_slice().iter_mut().zip(p.as_slice()) {
                        *acc += (v - *acc) * w;
                    }
                }
                mean
            }
        }
    }

    fn network_output(&self, net: &Mlp, states: &Matrix, actions: &Matrix) -> Vec<f64> {
        let n = states.rows();
        let mut inputs = Vec::with_capacity(n * net.input_dim());
        let mut buf = Vec::with_capacity(net.input_dim());
        for i in 0..n {
            self.normalizer.encode_input(states.row(i), actions.row(i), &mut buf);
            inputs.extend_from_slice(&buf);
        }
        let cache = net.forward_batch(&inputs, n);
        cache.output().to_vec()
    }

    /// Maps normalised network outputs (first `ds` of every `stride`) back
    /// to next states.
    fn decode(&self, states: &Matrix, raw: &[f64], stride: usize) -> Matrix {
        let ds = self.state_dim;
        let mut out = Matrix::zeros(states.rows(), ds);
        for i in 0..states.rows() {
            let target = self.normalizer.denormalize_target(&raw[i * stride..i * stride + ds]);
            let row = out.row_mut(i);
            match self.formulation {
                Formulation::Delta => {
                    for ((o, t), s) in row.iter_mut().zip(&target).zip(states.row(i)) {
                        *o = s + t;
                    }
                }
                Formulation::TrueState => row.copy_from_slice(&target),
            }
        }
        out
    }

    /// Gaussian over the normalised target, for probabilistic single models.
    pub fn predict_distribution(&self, s: &[f64], a: &[f64]) -> Result<GaussianPrediction> {
        match &self.variant {
            ModelVariant::Probabilistic(net) => {
                let mut input = Vec::new();
                self.normalizer.encode_input(s, a, &mut input);
                Ok(split_gaussian(&net.forward(&input)?))
            }
            _ => Err(Error::Invalid("model has no variance head".into())),
        }
    }

    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        let env = Envelope {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            model: self.clone(),
        };
        serde_json::to_writer(out, &env)?;
        Ok(())
    }

    pub fn load<R: Read>(input: R) -> Result<Self> {
        let env: Envelope = serde_json::from_reader(input)?;
        if env.format != FORMAT_TAG || env.version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model container {} v{}",
                env.format, env.version
            )));
        }
        Ok(env.model)
    }
}

fn wrap(trained: super::train::TrainedNetwork, formulation: Formulation, ds: usize, da: usize) -> DynamicsModel {
    let variant = match trained.head {
        Head::Deterministic => ModelVariant::Deterministic(trained.net),
        Head::Probabilistic => ModelVariant::Probabilistic(trained.net),
    };
    DynamicsModel {
        variant,
        formulation,
        normalizer: trained.normalizer,
        state_dim: ds,
        action_dim: da,
    }
}

/// Single network trained with the MSE loss.
pub fn train_deterministic(data: &Dataset, cfg: &TrainConfig) -> Result<DynamicsModel> {
    let trained = train_network(data, cfg, Head::Deterministic)?;
    Ok(wrap(trained, cfg.formulation, data.state_dim(), data.action_dim()))
}

/// Single network trained with the Gaussian NLL.
pub fn train_probabilistic(data: &Dataset, cfg: &TrainConfig) -> Result<DynamicsModel> {
    let trained = train_network(data, cfg, Head::Probabilistic)?;
    Ok(wrap(trained, cfg.formulation, data.state_dim(), data.action_dim()))
}

/// `cfg.ensemble_size` members, member `k` trained with seed
/// `derive_seed(cfg.seed, k)`. Members train concurrently.
pub fn train_ensemble(data: &Dataset, cfg: &TrainConfig, head: Head) -> Result<DynamicsModel> {
    cfg.validate()?;
    let members = (0..cfg.ensemble_size)
        .into_par_iter()
        .map(|k| {
            let member_cfg = cfg.clone().with_seed(member_seed(cfg.seed, k));
            let trained = train_network(data, &member_cfg, head)?;
            Ok(wrap(trained, cfg.formulation, data.state_dim(), data.action_dim()))
        })
        .collect::<Result<Vec<_>>>()?;
    DynamicsModel::ensemble(members)
}

/// Named model families used by experiments and the command line.
/// Serialised by label (`"PE-S"`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ModelKind {
    Zero,
    Persistence,
    Linear,
    /// Deterministic network, delta target.
    D,
    /// Deterministic network, true-state target.
    DS,
    /// Probabilistic network, delta target.
    P,
    PS,
    /// Probabilistic ensemble, delta target.
    PE,
    PES,
    /// Deterministic ensemble.
    DE,
    DES,
}

impl ModelKind {
    pub const ALL: [ModelKind; 11] = [
        ModelKind::Zero,
        ModelKind::Persistence,
        ModelKind::Linear,
        ModelKind::D,
        ModelKind::DS,
        ModelKind::P,
        ModelKind::PS,
        ModelKind::PE,
        ModelKind::PES,
        ModelKind::DE,
        ModelKind::DES,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Zero => "ZERO",
            ModelKind::Persistence => "PERSIST",
            ModelKind::Linear => "LIN",
            ModelKind::D => "D",
            ModelKind::DS => "D-S",
            ModelKind::P => "P",
            ModelKind::PS => "P-S",
            ModelKind::PE => "PE",
            ModelKind::PES => "PE-S",
            ModelKind::DE => "DE",
            ModelKind::DES => "DE-S",
        }
    }

    pub fn formulation(self) -> Formulation {
        match self {
            ModelKind::DS | ModelKind::PS | ModelKind::PES | ModelKind::DES | ModelKind::Zero => {
                Formulation::TrueState
            }
            _ => Formulation::Delta,
        }
    }

    pub fn is_neural(self) -> bool {
        !matches!(self, ModelKind::Zero | ModelKind::Persistence | ModelKind::Linear)
    }

    pub fn is_probabilistic(self) -> bool {
        matches!(self, ModelKind::P | ModelKind::PS | ModelKind::PE | ModelKind::PES)
    }

    pub fn is_ensemble(self) -> bool {
        matches!(self, ModelKind::PE | ModelKind::PES | ModelKind::DE | ModelKind::DES)
    }

    /// Default training settings for this family with the right target.
    pub fn default_config(self, seed: u64) -> TrainConfig {
        let base = if self.is_probabilistic() {
            TrainConfig::probabilistic()
        } else {
            TrainConfig::deterministic()
        };
        TrainConfig {
            formulation: self.formulation(),
            seed,
            ..base
        }
    }

    /// Fits this family. The formulation in `cfg` is overridden by the
    /// family's own.
    pub fn fit(self, data: &Dataset, cfg: &TrainConfig) -> Result<DynamicsModel> {
        let cfg = TrainConfig {
            formulation: self.formulation(),
            ..cfg.clone()
        };
        let head = if self.is_probabilistic() {
            Head::Probabilistic
        } else {
            Head::Deterministic
        };
        match self {
            ModelKind::Zero => Ok(DynamicsModel::zero(data.state_dim(), data.action_dim())),
            ModelKind::Persistence => Ok(DynamicsModel::persistence(data.state_dim(), data.action_dim())),
            ModelKind::Linear => super::linear::fit_linear_model(data),
            ModelKind::D | ModelKind::DS => train_deterministic(data, &cfg),
            ModelKind::P | ModelKind::PS => train_probabilistic(data, &cfg),
            ModelKind::PE | ModelKind::PES | ModelKind::DE | ModelKind::DES => train_ensemble(data, &cfg, head),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl From<ModelKind> for String {
    fn from(k: ModelKind) -> String {
        k.label().to_string()
    }
}

impl TryFrom<String> for ModelKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('_', "-");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.label() == key || (key == "LINEAR" && *k == ModelKind::Linear))
            .ok_or_else(|| Error::Parse(format!("unknown model '{s}'")))
    }
}
