//! The combined results CSV: one row per (cell, step).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::config::Cell;
use crate::error::{Error, Result};
use crate::rollout::ErrorProfile;
use crate::systems::format_float;

pub const RESULT_COLUMNS: [&str; 14] = [
    "experiment",
    "pole",
    "noise_mult",
    "dim",
    "regularized",
    "model",
    "formulation",
    "train_trajs",
    "mode",
    "step",
    "p50",
    "p65",
    "p95",
    "n",
];

/// Axis columns hold the empty string when a cell does not vary them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub pole: String,
    pub noise_mult: String,
    pub dim: String,
    pub regularized: String,
    pub model: String,
    pub formulation: String,
    pub train_trajs: String,
    pub mode: String,
    pub step: usize,
    pub p50: f64,
    pub p65: f64,
    pub p95: f64,
    pub n: usize,
}

impl ResultRow {
    pub fn column(&self, name: &str) -> Option<String> {
        Some(match name {
            "experiment" => self.experiment.clone(),
            "pole" => self.pole.clone(),
            "noise_mult" => self.noise_mult.clone(),
            "dim" => self.dim.clone(),
            "regularized" => self.regularized.clone(),
            "model" => self.model.clone(),
            "formulation" => self.formulation.clone(),
            "train_trajs" => self.train_trajs.clone(),
            "mode" => self.mode.clone(),
            _ => return None,
        })
    }
}

fn show<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Rows for one evaluated cell, steps numbered from 1.
pub fn cell_rows(experiment: &str, cell: &Cell, profile: &ErrorProfile) -> Vec<ResultRow> {
    profile
        .steps
        .iter()
        .zip(&profile.counts)
        .enumerate()
        .map(|(i, (p, n))| ResultRow {
            experiment: experiment.to_string(),
            pole: show(cell.pole),
            noise_mult: show(cell.noise_mult),
            dim: show(cell.dim),
            regularized: show(cell.regularized),
            model: cell.model_label(),
            formulation: cell.model.map(|m| m.formulation().as_str().to_string()).unwrap_or_default(),
            train_trajs: show(cell.train_trajs),
            mode: cell.mode.map(|m| m.as_str().to_string()).unwrap_or_default(),
            step: i + 1,
            p50: p.p50,
            p65: p.p65,
            p95: p.p95,
            n: *n,
        })
        .collect()
}

/// Writes rows with a header. Floats use the round-trip format so reruns
/// compare byte for byte.
pub fn write_rows<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.experiment.as_str(),
            &r.pole,
            &r.noise_mult,
            &r.dim,
            &r.regularized,
            &r.model,
            &r.formulation,
            &r.train_trajs,
            &r.mode,
            &r.step.to_string(),
            &format_float(r.p50),
            &format_float(r.p65),
            &format_float(r.p95),
            &r.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RESULT_COLUMNS {
        return Err(Error::Parse(format!("unexpected results header {header:?}")));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Parse(format!("results row: {e}"))))
        .collect()
}
