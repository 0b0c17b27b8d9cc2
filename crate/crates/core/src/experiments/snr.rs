//! Signal-to-noise of finite differences on the double integrator as the
//! sampling step grows.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::{mean, std_dev, Rng};
use crate::systems::{double_integrator_trajectory, format_float, snr_estimate, DoubleIntegrator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrRow {
    pub dt: f64,
    pub snr_mean: f64,
    pub snr_std: f64,
    pub trajectories: usize,
}

/// Trajectory `i` draws its start velocity, input and measurement noise
/// from the same stream at every `dt`, so the step sizes are compared on
/// common random numbers.
pub fn snr_study(dts: &[f64], sigma: f64, trajectories: usize, horizon: usize, seed: u64) -> Result<Vec<SnrRow>> {
    dts.iter()
        .map(|&dt| {
            let di = DoubleIntegrator::new(dt, sigma)?;
            let snrs = (0..trajectories)
                .map(|i| {
                    let mut rng = Rng::derived(seed, i as u64);
                    let v0 = rng.uniform(-1.0, 1.0);
                    let u = rng.uniform(-1.0, 1.0);
                    let (truth, obs) = double_integrator_trajectory(&di, [0.0, v0], u, horizon, &mut rng)?;
                    snr_estimate(&truth, &obs)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(SnrRow {
                dt,
                snr_mean: mean(&snrs),
                snr_std: std_dev(&snrs),
                trajectories,
            })
        })
        .collect()
}

pub fn write_snr_csv<W: Write>(out: W, rows: &[SnrRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dt", "snr_mean", "snr_std", "trajectories"])?;
    for r in rows {
        w.write_record([
            r.dt.to_string(),
            format_float(r.snr_mean),
            format_float(r.snr_std),
            r.trajectories.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
