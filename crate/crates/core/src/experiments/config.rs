//! Declarative sweep configuration, read from TOML.
//!
//! A sweep is the cross product of its grid axes. Axes that do not apply to
//! the chosen system are ignored (and left empty in the results CSV).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::numerics::derive_seed_str;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemFamily {
    /// Pole-parameterised linear systems, fresh `(A, B)` per trajectory.
    StateSpace,
    Lorenz,
    /// Cart-pole under LQR feedback with per-trajectory weights.
    Cartpole,
    /// Double integrator SNR study; no models are trained.
    DoubleIntegrator,
    /// Transient-decay and label statistics per pole; no models are trained.
    DataTable,
}

impl SystemFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            SystemFamily::StateSpace => "state_space",
            SystemFamily::Lorenz => "lorenz",
            SystemFamily::Cartpole => "cartpole",
            SystemFamily::DoubleIntegrator => "double_integrator",
            SystemFamily::DataTable => "data_table",
        }
    }

    pub fn trains_models(self) -> bool {
        matches!(self, SystemFamily::StateSpace | SystemFamily::Lorenz | SystemFamily::Cartpole)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Composed rollouts replaying the logged actions.
    Logged,
    /// Composed rollouts with actions recomputed from predicted states.
    Recomputed,
    /// Uncomposed prediction from the true state at every index.
    OneStep,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Logged => "logged",
            EvalMode::Recomputed => "recomputed",
            EvalMode::OneStep => "one_step",
        }
    }
}

pub const DEFAULT_HIDDEN: [usize; 2] = [256, 256];

fn default_poles() -> Vec<f64> {
    vec![0.5]
}
fn default_noise() -> Vec<f64> {
    vec![1.0]
}
fn default_dims() -> Vec<usize> {
    vec![3]
}
fn default_false() -> Vec<bool> {
    vec![false]
}
fn default_true() -> Vec<bool> {
    vec![true]
}
fn default_models() -> Vec<ModelKind> {
    vec![ModelKind::D]
}
fn default_hidden() -> Vec<Vec<usize>> {
    vec![DEFAULT_HIDDEN.to_vec()]
}
fn default_train_trajs() -> Vec<usize> {
    vec![100]
}
fn default_modes() -> Vec<EvalMode> {
    vec![EvalMode::Logged]
}
fn default_hundred() -> usize {
    100
}
fn default_ensemble() -> usize {
    5
}
fn default_epochs() -> usize {
    20
}
fn default_lorenz_init() -> [f64; 2] {
    [5.0, 10.0]
}
fn default_snr_dts() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}
fn default_snr_sigma() -> f64 {
    0.5
}
fn default_table_systems() -> usize {
    1000
}
fn default_table_horizon() -> usize {
    200
}
fn default_workers() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment: String,
    /// Root seed; every other seed is derived from it.
    pub seed: u64,
    pub system: SystemFamily,

    #[serde(default = "default_poles")]
    pub poles: Vec<f64>,
    #[serde(default = "default_noise")]
    pub noise_mults: Vec<f64>,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_false")]
    pub regularized: Vec<bool>,
    /// Systems with `B = 0`.
    #[serde(default)]
    pub zero_inputs: bool,

    /// Initial coordinates for Lorenz trajectories are drawn from this range.
    #[serde(default = "default_lorenz_init")]
    pub lorenz_init: [f64; 2],

    #[serde(default = "default_snr_dts")]
    pub snr_dts: Vec<f64>,
    #[serde(default = "default_snr_sigma")]
    pub snr_noise_sigma: f64,

    #[serde(default = "default_table_systems")]
    pub table_systems: usize,
    #[serde(default = "default_table_horizon")]
    pub table_horizon: usize,

    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<Vec<usize>>,
    #[serde(default = "default_true")]
    pub normalization: Vec<bool>,
    /// Cart-pole only: encode the pole angle as `(cos, sin)`.
    #[serde(default = "default_false")]
    pub angle_encoding: Vec<bool>,
    #[serde(default = "default_ensemble")]
    pub ensemble_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,

    #[serde(default = "default_train_trajs")]
    pub train_trajs: Vec<usize>,
    #[serde(default = "default_hundred")]
    pub test_trajs: usize,
    /// Length of every training trajectory.
    #[serde(default = "default_hundred")]
    pub train_horizon: usize,
    /// Length of every test trajectory, and the evaluated horizon.
    #[serde(default = "default_hundred")]
    pub test_horizon: usize,
    #[serde(default = "default_modes")]
    pub modes: Vec<EvalMode>,

    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl SweepConfig {
    /// A state-space config with every axis at its default.
    pub fn new(experiment: &str, system: SystemFamily, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            seed,
            system,
            poles: default_poles(),
            noise_mults: default_noise(),
            dims: default_dims(),
            regularized: default_false(),
            zero_inputs: false,
            lorenz_init: default_lorenz_init(),
            snr_dts: default_snr_dts(),
            snr_noise_sigma: default_snr_sigma(),
            table_systems: default_table_systems(),
            table_horizon: default_table_horizon(),
            models: default_models(),
            hidden: default_hidden(),
            normalization: default_true(),
            angle_encoding: default_false(),
            ensemble_size: default_ensemble(),
            epochs: default_epochs(),
            train_trajs: default_train_trajs(),
            test_trajs: default_hundred(),
            train_horizon: default_hundred(),
            test_horizon: default_hundred(),
            modes: default_modes(),
            workers: default_workers(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.experiment.trim().is_empty() {
            return bad("experiment name is empty".into());
        }
        if self.experiment.contains(['/', '\\', ',', '"']) {
            return bad(format!("experiment name '{}' has reserved characters", self.experiment));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        match self.system {
            SystemFamily::DoubleIntegrator => {
                if self.snr_dts.is_empty() || self.snr_dts.iter().any(|dt| !(*dt > 0.0)) {
                    return bad(format!("snr_dts {:?} must be non-empty and positive", self.snr_dts));
                }
                if !(self.snr_noise_sigma >= 0.0) || self.test_trajs == 0 || self.test_horizon < 2 {
                    return bad("snr study needs sigma >= 0, trajectories and horizon >= 2".into());
                }
                return Ok(());
            }
            SystemFamily::DataTable => {
                if self.poles.is_empty() || self.table_systems == 0 || self.test_trajs == 0 || self.table_horizon == 0 {
                    return bad("data table needs poles, systems, trajectories and a horizon".into());
                }
                return Ok(());
            }
            _ => {}
        }
        let axes: [(&str, usize); 8] = [
            ("poles", self.poles.len()),
            ("noise_mults", self.noise_mults.len()),
            ("dims", self.dims.len()),
            ("regularized", self.regularized.len()),
            ("models", self.models.len()),
            ("hidden", self.hidden.len()),
            ("normalization", self.normalization.len()),
            ("train_trajs", self.train_trajs.len()),
        ];
        for (name, len) in axes {
            if len == 0 {
                return bad(format!("grid axis '{name}' is empty"));
            }
        }
        if self.modes.is_empty() || self.angle_encoding.is_empty() {
            return bad("grid axes 'modes' and 'angle_encoding' must be non-empty".into());
        }
        if self.poles.iter().any(|p| !p.is_finite()) || self.noise_mults.iter().any(|n| !(*n >= 0.0)) {
            return bad("poles must be finite and noise multipliers non-negative".into());
        }
        if self.dims.contains(&0) || self.train_trajs.contains(&0) || self.hidden.iter().any(|h| h.contains(&0)) {
            return bad("dims, train_trajs and hidden widths must be positive".into());
        }
        if self.test_trajs == 0 || self.train_horizon == 0 || self.test_horizon == 0 {
            return bad("test_trajs and horizons must be positive".into());
        }
        if self.epochs == 0 || self.ensemble_size == 0 {
            return bad("epochs and ensemble_size must be positive".into());
        }
        if !(self.lorenz_init[0] < self.lorenz_init[1]) {
            return bad(format!("lorenz_init {:?} is not an interval", self.lorenz_init));
        }
        if self.system != SystemFamily::Cartpole && self.angle_encoding.contains(&true) {
            return bad("angle_encoding only applies to the cartpole".into());
        }
        if self.angle_encoding.contains(&true) && self.modes.contains(&EvalMode::Recomputed) {
            return bad("recomputed actions are not supported with angle encoding".into());
        }
        if self.system == SystemFamily::Lorenz && self.modes.contains(&EvalMode::Recomputed) {
            return bad("the Lorenz system has no actions to recompute".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Grid cells in deterministic order. Non-neural models collapse the
    /// network axes.
    pub fn cells(&self) -> Vec<Cell> {
        if !self.system.trains_models() {
            return vec![Cell {
                index: 0,
                system: self.system,
                pole: None,
                noise_mult: None,
                dim: None,
                regularized: None,
                model: None,
                hidden: Vec::new(),
                normalization: true,
                angles: false,
                train_trajs: None,
                mode: None,
            }];
        }
        let ss = self.system == SystemFamily::StateSpace;
        let opt_axis = |v: Vec<Option<f64>>| if ss { v } else { vec![None] };
        let poles = opt_axis(self.poles.iter().map(|p| Some(*p)).collect());
        let noises = opt_axis(self.noise_mults.iter().map(|n| Some(*n)).collect());
        let dims: Vec<Option<usize>> = if ss { self.dims.iter().map(|d| Some(*d)).collect() } else { vec![None] };
        let regs: Vec<Option<bool>> = if ss { self.regularized.iter().map(|r| Some(*r)).collect() } else { vec![None] };

        let mut cells = Vec::new();
        for &pole in &poles {
            for &noise_mult in &noises {
                for &dim in &dims {
                    for &regularized in &regs {
                        for &angles in &self.angle_encoding {
                            for &train in &self.train_trajs {
                                for &model in &self.models {
                                    let (hidden, norms): (Vec<Vec<usize>>, Vec<bool>) = if model.is_neural() {
                                        (self.hidden.clone(), self.normalization.clone())
                                    } else {
                                        (vec![Vec::new()], vec![true])
                                    };
                                    for h in &hidden {
                                        for &normalization in &norms {
                                            for &mode in &self.modes {
                                                cells.push(Cell {
                                                    index: cells.len(),
                                                    system: self.system,
                                                    pole,
                                                    noise_mult,
                                                    dim,
                                                    regularized,
                                                    model: Some(model),
                                                    hidden: h.clone(),
                                                    normalization,
                                                    angles,
                                                    train_trajs: Some(train),
                                                    mode: Some(mode),
                                                });
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        cells
    }
}

/// One point of the sweep grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub system: SystemFamily,
    pub pole: Option<f64>,
    pub noise_mult: Option<f64>,
    pub dim: Option<usize>,
    pub regularized: Option<bool>,
    pub model: Option<ModelKind>,
    pub hidden: Vec<usize>,
    pub normalization: bool,
    pub angles: bool,
    pub train_trajs: Option<usize>,
    pub mode: Option<EvalMode>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Cell {
    /// Identifies the environment distribution (shared by all cells that
    /// see the same test data).
    pub fn system_key(&self) -> String {
        format!(
            "{}|pole={}|noise={}|dim={}|reg={}|sincos={}",
            self.system.as_str(),
            opt(self.pole),
            opt(self.noise_mult),
            opt(self.dim),
            opt(self.regularized),
            self.angles
        )
    }

    pub fn key(&self) -> String {
        format!(
            "{}|model={}|hidden={}|norm={}|train={}|mode={}",
            self.system_key(),
            opt(self.model),
            hidden_label(&self.hidden),
            self.normalization,
            opt(self.train_trajs),
            self.mode.map(EvalMode::as_str).unwrap_or_default()
        )
    }

    /// The `model` column: family label plus any non-default modifiers.
    pub fn model_label(&self) -> String {
        let Some(model) = self.model else {
            return String::new();
        };
        let mut label = model.label().to_string();
        if model.is_neural() {
            if self.hidden != DEFAULT_HIDDEN {
                label += &format!(" h={}", hidden_label(&self.hidden));
            }
            if !self.normalization {
                label += " no-norm";
            }
        }
        if self.angles {
            label += " sincos";
        }
        label
    }

    /// File-name-safe identifier, unique within a sweep.
    pub fn slug(&self) -> String {
        let mut s = format!("{:04}", self.index);
        for part in [
            self.pole.map(|p| format!("p{p}")),
            self.noise_mult.map(|n| format!("n{n}")),
            self.dim.map(|d| format!("d{d}")),
            self.regularized.map(|r| if r { "reg".into() } else { "unreg".into() }),
            self.model.map(|_| self.model_label()),
            self.train_trajs.map(|t| format!("t{t}")),
            self.mode.map(|m| m.as_str().into()),
        ]
        .into_iter()
        .flatten()
        {
            s.push('-');
            s.extend(part.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' }));
        }
        s
    }

    pub fn train_seed(&self, root: u64) -> u64 {
        derive_seed_str(root, &format!("train|{}|n={}", self.system_key(), opt(self.train_trajs)))
    }

    pub fn test_seed(&self, root: u64) -> u64 {
        derive_seed_str(root, &format!("test|{}", self.system_key()))
    }

    pub fn model_seed(&self, root: u64) -> u64 {
        derive_seed_str(root, &format!("model|{}", self.key()))
    }
}

pub fn hidden_label(hidden: &[usize]) -> String {
    if hidden.len() > 1 && hidden.iter().all(|w| *w == hidden[0]) && hidden != DEFAULT_HIDDEN {
        format!("{}x{}", hidden[0], hidden.len())
    } else {
        hidden.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
    }
}
