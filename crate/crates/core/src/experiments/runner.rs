//! Executes sweeps: data generation, training and evaluation per cell,
//! then a single ordered write of the combined results.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Cell, EvalMode, SweepConfig, SystemFamily};
use super::results::{cell_rows, read_rows, write_rows, ResultRow};
use super::snr::{snr_study, write_snr_csv};
use super::table::{data_table, write_table_csv};
use crate::error::{invalid, Error, Result};
use crate::models::{expand_trajectory, Dataset, DynamicsModel, ModelKind, TrainConfig};
use crate::rollout::{evaluate, one_step_error_profile, ErrorProfile, RolloutMode};
use crate::systems::{
    generate_dataset, generate_lorenz_dataset, Cartpole, DatasetSpec, LorenzParams, PolicySpec, StateSpaceSpec,
    Trajectory,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const CELLS_DIR: &str = "cells";

/// Pole angle position in the cart-pole state.
const CARTPOLE_ANGLE: [usize; 1] = [2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSeeds {
    pub train: u64,
    pub test: u64,
    pub model: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub index: usize,
    pub key: String,
    pub seeds: CellSeeds,
    /// Relative to the output directory.
    pub artifact: String,
    pub status: CellStatus,
    pub error: Option<String>,
    pub duration_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub tool_version: String,
    pub config_hash: String,
    pub root_seed: u64,
    pub config_path: String,
    pub results_path: String,
    /// Study outputs beyond the results CSV (`snr.csv`, `table.csv`).
    pub artifacts: Vec<String>,
    pub cell_count: usize,
    pub cells: Vec<CellRecord>,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn all_ok(&self) -> bool {
        self.cells.iter().all(|c| c.status == CellStatus::Ok)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CellRecord> {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        std::io::Write::write_all(&mut w, b"\n")?;
        Ok(())
    }
}

/// Train and test trajectories for a cell, angle-expanded when the cell
/// asks for it.
pub fn cell_datasets(cfg: &SweepConfig, cell: &Cell) -> Result<(Vec<Trajectory>, Vec<Trajectory>)> {
    let n_train = cell.train_trajs.ok_or_else(|| invalid("cell has no training set"))?;
    let (train_seed, test_seed) = (cell.train_seed(cfg.seed), cell.test_seed(cfg.seed));
    let gen = |n: usize, h: usize, seed: u64| -> Result<Vec<Trajectory>> {
        match cell.system {
            SystemFamily::StateSpace => {
                let spec = StateSpaceSpec {
                    pole: cell.pole.ok_or_else(|| invalid("state-space cell without a pole"))?,
                    dim: cell.dim.ok_or_else(|| invalid("state-space cell without a dim"))?,
                    action_dim: 1,
                    noise_mult: cell.noise_mult.unwrap_or(1.0),
                    regularized: cell.regularized.unwrap_or(false),
                    zero_inputs: cfg.zero_inputs,
                };
                generate_dataset(&DatasetSpec::state_space(spec, n, h), seed)
            }
            SystemFamily::Lorenz => {
                let [lo, hi] = cfg.lorenz_init;
                generate_lorenz_dataset(lo, hi, n, h, &LorenzParams::default(), seed)
            }
            SystemFamily::Cartpole => generate_dataset(&DatasetSpec::cartpole_lqr(Cartpole::default(), n, h), seed),
            other => Err(invalid(format!("{} cells do not generate datasets", other.as_str()))),
        }
    };
    let mut train = gen(n_train, cfg.train_horizon, train_seed)?;
    let mut test = gen(cfg.test_trajs, cfg.test_horizon, test_seed)?;
    if cell.angles {
        let expand = |ts: &[Trajectory]| -> Result<Vec<Trajectory>> {
            ts.iter().map(|t| expand_trajectory(t, &CARTPOLE_ANGLE)).collect()
        };
        train = expand(&train)?;
        test = expand(&test)?;
    }
    Ok((train, test))
}

pub fn cell_train_config(cfg: &SweepConfig, cell: &Cell, kind: ModelKind) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        ensemble_size: cfg.ensemble_size,
        normalization_enabled: cell.normalization,
        hidden: if cell.hidden.is_empty() { kind.default_config(0).hidden } else { cell.hidden.clone() },
        ..kind.default_config(cell.model_seed(cfg.seed))
    }
}

pub fn train_cell_model(cfg: &SweepConfig, cell: &Cell, train: &[Trajectory]) -> Result<DynamicsModel> {
    let kind = cell.model.ok_or_else(|| invalid("cell has no model"))?;
    let data = Dataset::from_trajectories(train)?;
    kind.fit(&data, &cell_train_config(cfg, cell, kind))
}

pub fn evaluate_cell_model(cell: &Cell, model: &DynamicsModel, test: &[Trajectory]) -> Result<ErrorProfile> {
    match cell.mode.ok_or_else(|| invalid("cell has no evaluation mode"))? {
        EvalMode::Logged => evaluate(model, test, &RolloutMode::Logged),
        EvalMode::OneStep => one_step_error_profile(model, test),
        EvalMode::Recomputed => {
            let policy = match cell.system {
                SystemFamily::Cartpole => PolicySpec::varied_lqr(Cartpole::default()),
                SystemFamily::StateSpace => PolicySpec::random_actions(model.action_dim),
                other => return Err(invalid(format!("no policy to recompute for {}", other.as_str()))),
            };
            evaluate(model, test, &RolloutMode::Recomputed(policy))
        }
    }
}

/// Generates data, trains and evaluates one cell.
pub fn execute_cell(cfg: &SweepConfig, cell: &Cell) -> Result<Vec<ResultRow>> {
    let (train, test) = cell_datasets(cfg, cell)?;
    let model = train_cell_model(cfg, cell, &train)?;
    let profile = evaluate_cell_model(cell, &model, &test)?;
    Ok(cell_rows(&cfg.experiment, cell, &profile))
}

fn cell_artifact(cell: &Cell) -> String {
    format!("{CELLS_DIR}/{}.csv", cell.slug())
}

fn study_artifacts(cfg: &SweepConfig) -> Vec<String> {
    match cfg.system {
        SystemFamily::DoubleIntegrator => vec!["snr.csv".into()],
        SystemFamily::DataTable => vec!["table.csv".into()],
        _ => Vec::new(),
    }
}

/// Runs a study cell (SNR or data table), writing its own CSV.
fn execute_study(cfg: &SweepConfig, cell: &Cell, out_dir: &Path) -> Result<()> {
    let seed = cell.test_seed(cfg.seed);
    match cfg.system {
        SystemFamily::DoubleIntegrator => {
            let rows = snr_study(&cfg.snr_dts, cfg.snr_noise_sigma, cfg.test_trajs, cfg.test_horizon, seed)?;
            write_snr_csv(File::create(out_dir.join("snr.csv"))?, &rows)
        }
        SystemFamily::DataTable => {
            let rows = data_table(cfg, seed)?;
            write_table_csv(File::create(out_dir.join("table.csv"))?, &rows)
        }
        _ => Err(invalid("not a study family")),
    }
}

/// Runs one cell and writes its CSV; errors are captured in the record.
pub fn run_cell(cfg: &SweepConfig, cell: &Cell, out_dir: &Path) -> CellRecord {
    let start = Instant::now();
    let artifact = if cfg.system.trains_models() {
        cell_artifact(cell)
    } else {
        study_artifacts(cfg).join(";")
    };
    let outcome = if cfg.system.trains_models() {
        execute_cell(cfg, cell).and_then(|rows| {
            let path = out_dir.join(&artifact);
            write_rows(BufWriter::new(File::create(path)?), &rows)
        })
    } else {
        execute_study(cfg, cell, out_dir)
    };
    if outcome.is_err() && cfg.system.trains_models() {
        // never leave a stale per-cell file behind a failed cell
        let _ = fs::remove_file(out_dir.join(&artifact));
    }
    CellRecord {
        index: cell.index,
        key: cell.key(),
        seeds: CellSeeds {
            train: cell.train_seed(cfg.seed),
            test: cell.test_seed(cfg.seed),
            model: cell.model_seed(cfg.seed),
        },
        artifact,
        status: if outcome.is_ok() { CellStatus::Ok } else { CellStatus::Failed },
        error: outcome.err().map(|e| e.to_string()),
        duration_secs: start.elapsed().as_secs_f64(),
    }
}

fn prepare_out_dir(cfg: &SweepConfig, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir.join(CELLS_DIR))?;
    fs::write(out_dir.join(CONFIG_FILE), cfg.to_toml_string()?)?;
    Ok(())
}

/// Concatenates the per-cell CSVs that exist, in cell order, into the
/// combined results file. Returns the number of rows written.
pub fn assemble_results(cfg: &SweepConfig, out_dir: &Path) -> Result<usize> {
    let mut rows = Vec::new();
    if cfg.system.trains_models() {
        for cell in cfg.cells() {
            match File::open(out_dir.join(cell_artifact(&cell))) {
                Ok(f) => rows.extend(read_rows(BufReader::new(f))?),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    write_rows(BufWriter::new(File::create(out_dir.join(RESULTS_FILE))?), &rows)?;
    Ok(rows.len())
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Runs every cell of `cfg` into `out_dir` and writes `results.csv`,
/// `config.toml` and `manifest.json` there. Cell failures are recorded, not
/// returned; only I/O problems with the output directory are errors.
pub fn run_sweep(cfg: &SweepConfig, out_dir: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let start = Instant::now();
    prepare_out_dir(cfg, out_dir)?;
    let cells = cfg.cells();
    let records: Vec<CellRecord> =
        thread_pool(cfg.workers)?.install(|| cells.par_iter().map(|c| run_cell(cfg, c, out_dir)).collect());
    assemble_results(cfg, out_dir)?;
    let manifest = RunManifest {
        experiment: cfg.experiment.clone(),
        tool_version: TOOL_VERSION.to_string(),
        config_hash: cfg.hash(),
        root_seed: cfg.seed,
        config_path: CONFIG_FILE.into(),
        results_path: RESULTS_FILE.into(),
        artifacts: study_artifacts(cfg),
        cell_count: cells.len(),
        cells: records,
        duration_secs: start.elapsed().as_secs_f64(),
    };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Re-runs selected cells of an existing (or fresh) output directory, then
/// rebuilds the combined results and updates the manifest.
pub fn rerun_cells(cfg: &SweepConfig, out_dir: &Path, indices: &[usize]) -> Result<RunManifest> {
    cfg.validate()?;
    let start = Instant::now();
    let cells = cfg.cells();
    if let Some(bad) = indices.iter().find(|&&i| i >= cells.len()) {
        return Err(invalid(format!("cell {bad} out of range; the sweep has {} cells", cells.len())));
    }
    prepare_out_dir(cfg, out_dir)?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut manifest = match RunManifest::load(&manifest_path) {
        Ok(m) if m.config_hash == cfg.hash() => m,
        _ => RunManifest {
            experiment: cfg.experiment.clone(),
            tool_version: TOOL_VERSION.to_string(),
            config_hash: cfg.hash(),
            root_seed: cfg.seed,
            config_path: CONFIG_FILE.into(),
            results_path: RESULTS_FILE.into(),
            artifacts: study_artifacts(cfg),
            cell_count: cells.len(),
            cells: Vec::new(),
            duration_secs: 0.0,
        },
    };
    let fresh: Vec<CellRecord> =
        thread_pool(cfg.workers)?.install(|| indices.par_iter().map(|&i| run_cell(cfg, &cells[i], out_dir)).collect());
    for rec in fresh {
        manifest.cells.retain(|c| c.index != rec.index);
        manifest.cells.push(rec);
    }
    manifest.cells.sort_by_key(|c| c.index);
    manifest.duration_secs = start.elapsed().as_secs_f64();
    assemble_results(cfg, out_dir)?;
    manifest.save(&manifest_path)?;
    Ok(manifest)
}

pub fn results_path(out_dir: &Path) -> PathBuf {
    out_dir.join(RESULTS_FILE)
}
