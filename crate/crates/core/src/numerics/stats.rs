use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Median, 65th and 95th percentile of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentileSummary {
    pub p50: f64,
    pub p65: f64,
    pub p95: f64,
}

/// Linear-interpolation percentiles (rank `q * (n - 1)` over the sorted
/// sample).
pub fn percentiles(values: &[f64]) -> Result<PercentileSummary> {
    if values.is_empty() {
        return Err(Error::Empty("percentile sample".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("percentile sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(PercentileSummary {
        p50: percentile_sorted(&sorted, 0.50),
        p65: percentile_sorted(&sorted, 0.65),
        p95: percentile_sorted(&sorted, 0.95),
    })
}

pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}
