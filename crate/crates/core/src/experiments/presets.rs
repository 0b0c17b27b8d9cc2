//! Named sweeps, one per figure or table of the study.

use super::config::{EvalMode, SweepConfig, SystemFamily};
use crate::error::{Error, Result};
use crate::models::ModelKind;

pub const PRESETS: [&str; 17] = [
    "compound",
    "compare_noise",
    "noB",
    "state_dim",
    "dim_diverge",
    "simple_models",
    "sincos",
    "tps",
    "training_set",
    "capacity",
    "no_norm",
    "react",
    "lorenz_narrow",
    "lorenz_broad",
    "snr",
    "data_table",
    "smoke",
];

const COMPOUND_POLES: [f64; 8] = [0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 1.0];
const TABLE_POLES: [f64; 10] = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 1.0, 1.1];

/// Builds a preset by name. Names are matched case-insensitively and `-`
/// is accepted for `_`.
pub fn preset(name: &str, seed: u64) -> Result<SweepConfig> {
    let key = name.trim().to_ascii_lowercase().replace('-', "_");
    let ss = |n: &str| SweepConfig::new(n, SystemFamily::StateSpace, seed);
    let cfg = match key.as_str() {
        "compound" => SweepConfig {
            poles: COMPOUND_POLES.to_vec(),
            models: vec![ModelKind::D, ModelKind::DS, ModelKind::PE, ModelKind::PES],
            ..ss("compound")
        },
        "compare_noise" => SweepConfig {
            noise_mults: vec![0.0, 1.0, 10.0, 100.0],
            ..ss("compare_noise")
        },
        "nob" => SweepConfig {
            noise_mults: vec![0.0, 1.0, 10.0, 100.0],
            zero_inputs: true,
            ..ss("noB")
        },
        "state_dim" => SweepConfig {
            dims: vec![3, 9, 27, 81],
            regularized: vec![true],
            ..ss("state_dim")
        },
        "dim_diverge" => SweepConfig {
            dims: vec![3, 9, 27],
            regularized: vec![false],
            ..ss("dim_diverge")
        },
        "simple_models" => SweepConfig {
            poles: vec![0.25, 0.5, 0.75, 0.95],
            models: vec![ModelKind::Linear, ModelKind::Zero, ModelKind::Persistence, ModelKind::D],
            ..ss("simple_models")
        },
        "sincos" => SweepConfig {
            angle_encoding: vec![false, true],
            ..SweepConfig::new("sincos", SystemFamily::Cartpole, seed)
        },
        "tps" => SweepConfig {
            poles: vec![0.1, 0.5, 0.9],
            modes: vec![EvalMode::OneStep, EvalMode::Logged],
            ..ss("tps")
        },
        "training_set" => SweepConfig {
            train_trajs: vec![1, 5, 10, 100],
            ..ss("training_set")
        },
        "capacity" => SweepConfig {
            hidden: vec![vec![32], vec![256, 256], vec![512, 512, 512]],
            ..ss("capacity")
        },
        "no_norm" => SweepConfig {
            poles: vec![0.5, 0.9],
            normalization: vec![true, false],
            ..ss("no_norm")
        },
        "react" => SweepConfig {
            modes: vec![EvalMode::Logged, EvalMode::Recomputed],
            ..SweepConfig::new("react", SystemFamily::Cartpole, seed)
        },
        "lorenz_narrow" | "lorenz_broad" => SweepConfig {
            lorenz_init: if key == "lorenz_narrow" { [5.0, 10.0] } else { [-10.0, 10.0] },
            models: vec![ModelKind::D, ModelKind::Zero],
            train_horizon: 500,
            test_horizon: 200,
            ..SweepConfig::new(&key, SystemFamily::Lorenz, seed)
        },
        "snr" => SweepConfig {
            test_trajs: 1000,
            test_horizon: 10,
            ..SweepConfig::new("snr", SystemFamily::DoubleIntegrator, seed)
        },
        "data_table" => SweepConfig {
            poles: TABLE_POLES.to_vec(),
            ..SweepConfig::new("data_table", SystemFamily::DataTable, seed)
        },
        // Seconds-scale run that touches every stage of the pipeline.
        "smoke" => SweepConfig {
            poles: vec![0.5],
            models: vec![ModelKind::D, ModelKind::Zero],
            hidden: vec![vec![16]],
            epochs: 2,
            train_trajs: vec![5],
            test_trajs: 5,
            train_horizon: 20,
            test_horizon: 20,
            ..ss("smoke")
        },
        _ => {
            return Err(Error::Config(format!(
                "unknown preset '{name}'; known presets: {}",
                PRESETS.join(", ")
            )))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}
