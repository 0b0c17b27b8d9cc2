//! Dataset statistics per pole: transient decay and label magnitudes.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::SweepConfig;
use super::runner::RunManifest;
use crate::error::{Error, Result};
use crate::numerics::{derive_seed_str, mean, norm2, std_dev};
use crate::systems::{format_float, generate_dataset, transient_decay_steps, DatasetSpec, StateSpaceSpec};

pub const DECAY_THRESHOLD: f64 = 1e-4;
pub const TABLE_DIM: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub pole: f64,
    /// `None` when any system's transient failed to decay.
    pub decay_mean: Option<f64>,
    pub delta_mean: f64,
    pub delta_std: f64,
    pub true_mean: f64,
    pub true_std: f64,
    pub systems: usize,
}

/// Input-free dim-3 systems, one trajectory per system from `s0 ~ N(0, I)`.
/// The decay count uses the noise-free transient from the same `s0`.
pub fn table_row(pole: f64, systems: usize, horizon: usize, seed: u64) -> Result<TableRow> {
    let spec = StateSpaceSpec {
        zero_inputs: true,
        ..StateSpaceSpec::new(pole, TABLE_DIM)
    };
    let trajs = generate_dataset(&DatasetSpec::state_space(spec.clone(), systems, horizon), seed)?;
    let mut decays = Vec::with_capacity(trajs.len());
    let mut converged = true;
    let mut deltas = Vec::new();
    let mut nexts = Vec::new();
    for traj in &trajs {
        let sys = spec.build(traj.system_seed)?;
        match transient_decay_steps(&sys, traj.initial_state(), DECAY_THRESHOLD) {
            Ok(k) => decays.push(k as f64),
            Err(Error::NoConvergence(_)) => converged = false,
            Err(e) => return Err(e),
        }
        for w in traj.states.windows(2) {
            let d: Vec<f64> = w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect();
            deltas.push(norm2(&d));
            nexts.push(norm2(&w[1]));
        }
    }
    Ok(TableRow {
        pole,
        decay_mean: converged.then(|| mean(&decays)),
        delta_mean: mean(&deltas),
        delta_std: std_dev(&deltas),
        true_mean: mean(&nexts),
        true_std: std_dev(&nexts),
        systems,
    })
}

pub fn data_table(cfg: &SweepConfig, seed: u64) -> Result<Vec<TableRow>> {
    cfg.poles
        .iter()
        .map(|&p| table_row(p, cfg.table_systems, cfg.table_horizon, derive_seed_str(seed, &format!("pole={p}"))))
        .collect()
}

const TABLE_HEADER: [&str; 7] = ["pole", "decay_mean", "delta_mean", "delta_std", "true_mean", "true_std", "systems"];

pub fn write_table_csv<W: Write>(out: W, rows: &[TableRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE_HEADER)?;
    for r in rows {
        w.write_record([
            r.pole.to_string(),
            r.decay_mean.map(format_float).unwrap_or_default(),
            format_float(r.delta_mean),
            format_float(r.delta_std),
            format_float(r.true_mean),
            format_float(r.true_std),
            r.systems.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table_csv<R: Read>(input: R) -> Result<Vec<TableRow>> {
    let mut r = csv::Reader::from_reader(input);
    let num = |f: &str| -> Result<f64> { f.parse().map_err(|_| Error::Parse(format!("bad table field {f:?}"))) };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != TABLE_HEADER.len() {
            return Err(Error::Parse(format!("table row with {} fields", rec.len())));
        }
        rows.push(TableRow {
            pole: num(&rec[0])?,
            decay_mean: if rec[1].is_empty() { None } else { Some(num(&rec[1])?) },
            delta_mean: num(&rec[2])?,
            delta_std: num(&rec[3])?,
            true_mean: num(&rec[4])?,
            true_std: num(&rec[5])?,
            systems: rec[6].parse().map_err(|_| Error::Parse(format!("bad system count {:?}", &rec[6])))?,
        });
    }
    Ok(rows)
}

fn sig(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else if v.abs() >= 100.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

/// Text rendering. Poles with no row, or whose decay did not converge,
/// show `N.A.`.
pub fn format_table(poles: &[f64], rows: &[TableRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>6} | {:>15} | {:>24} | {:>24}",
        "pole", "transient decay", "delta-state labels", "true-state labels"
    );
    let _ = writeln!(out, "{}", "-".repeat(6 + 15 + 24 + 24 + 9));
    for &p in poles {
        let row = rows.iter().find(|r| r.pole == p);
        let decay = row.and_then(|r| r.decay_mean).map_or("N.A.".to_string(), |d| format!("{d:.1}"));
        let (delta, truth) = match row {
            Some(r) => (
                format!("{} ± {}", sig(r.delta_mean), sig(r.delta_std)),
                format!("{} ± {}", sig(r.true_mean), sig(r.true_std)),
            ),
            None => ("N.A.".into(), "N.A.".into()),
        };
        let _ = writeln!(out, "{p:>6} | {decay:>15} | {delta:>24} | {truth:>24}");
    }
    out
}

/// Renders the data table of a finished `data_table` run from its output
/// directory.
pub fn report_tables(manifest: &RunManifest, out_dir: &Path) -> Result<String> {
    let cfg = SweepConfig::from_file(&out_dir.join(&manifest.config_path))?;
    if cfg.system != super::config::SystemFamily::DataTable {
        return Err(Error::Config(format!(
            "run '{}' is not a data-table run",
            manifest.experiment
        )));
    }
    let rows = match manifest.artifacts.iter().find(|a| a.ends_with("table.csv")) {
        Some(rel) => match std::fs::File::open(out_dir.join(rel)) {
            Ok(f) => read_table_csv(f)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        },
        None => Vec::new(),
    };
    Ok(format_table(&cfg.poles, &rows))
}
