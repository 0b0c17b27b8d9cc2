use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::numerics::{norm2, Rng};

/// Position/velocity double integrator with Gaussian measurement noise on
/// both observed coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubleIntegrator {
    /// Step size in seconds.
    pub dt: f64,
    pub measurement_noise_sigma: f64,
}

impl DoubleIntegrator {
    pub fn new(dt: f64, measurement_noise_sigma: f64) -> Result<Self> {
        if !(dt > 0.0) || !(measurement_noise_sigma >= 0.0) {
            return Err(invalid(format!(
                "double integrator dt {dt}, sigma {measurement_noise_sigma}"
            )));
        }
        Ok(Self {
            dt,
            measurement_noise_sigma,
        })
    }

    /// Exact zero-order-hold transition under constant input `u`.
    pub fn advance(&self, x: [f64; 2], u: f64) -> [f64; 2] {
        let dt = self.dt;
        [x[0] + dt * x[1] + 0.5 * dt * dt * u, x[1] + dt * u]
    }
}

/// Simulates `horizon` steps from `x0` under constant input `u`, returning
/// the `horizon + 1` true states and their noisy observations.
pub fn double_integrator_trajectory(
    di: &DoubleIntegrator,
    x0: [f64; 2],
    u: f64,
    horizon: usize,
    rng: &mut Rng,
) -> Result<(Vec<[f64; 2]>, Vec<[f64; 2]>)> {
    if horizon < 2 {
        return Err(invalid("double integrator horizon must be at least 2"));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut obs = Vec::with_capacity(horizon + 1);
    let mut x = x0;
    for t in 0..=horizon {
        if t > 0 {
            x = di.advance(x, u);
        }
        states.push(x);
        let s = di.measurement_noise_sigma;
        obs.push([x[0] + rng.normal(0.0, s), x[1] + rng.normal(0.0, s)]);
    }
    Ok((states, obs))
}

/// Mean over steps of `||s_t - s_{t-1}|| / ||o_t - o_{t-1}||`.
///
/// Steps whose observed change has zero length are skipped.
pub fn snr_estimate<S: AsRef<[f64]>>(truth: &[S], observations: &[S]) -> Result<f64> {
    if truth.len() != observations.len() {
        return Err(shape(format!(
            "{} true states against {} observations",
            truth.len(),
            observations.len()
        )));
    }
    if truth.len() < 2 {
        return Err(invalid("SNR needs at least two observations"));
    }
    let delta = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let mut total = 0.0;
    let mut used = 0usize;
    for t in 1..truth.len() {
        let signal = norm2(&delta(truth[t].as_ref(), truth[t - 1].as_ref()));
        let observed = norm2(&delta(observations[t].as_ref(), observations[t - 1].as_ref()));
        if observed == 0.0 {
            continue;
        }
        total += signal / observed;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Invalid("every observed step had zero length".into()));
    }
    Ok(total / used as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_velocity() {
        let di = DoubleIntegrator::new(1.0, 0.0).unwrap();
        let (s, _) = double_integrator_trajectory(&di, [0.0, 1.0], 0.0, 3, &mut Rng::new(0)).unwrap();
        let pos: Vec<f64> = s.iter().map(|x| x[0]).collect();
        assert_eq!(pos, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn constant_input_is_quadratic() {
        let di = DoubleIntegrator::new(1.0, 0.0).unwrap();
        let (s, o) = double_integrator_trajectory(&di, [0.0, 0.0], 1.0, 10, &mut Rng::new(0)).unwrap();
        for (k, x) in s.iter().enumerate() {
            assert!((x[0] - (k * k) as f64 / 2.0).abs() < 1e-12);
        }
        assert_eq!(s, o);
    }

    #[test]
    fn observation_mean_is_unbiased() {
        let di = DoubleIntegrator::new(0.5, 0.2).unwrap();
        let mut rng = Rng::new(5);
        let n = 100_000;
        let mut sum = [0.0; 2];
        let mut truth = [0.0; 2];
        for _ in 0..n {
            let (s, o) = double_integrator_trajectory(&di, [0.0, 0.0], 1.0, 2, &mut rng).unwrap();
            truth = s[2];
            sum[0] += o[2][0];
            sum[1] += o[2][1];
        }
        let bound = 4.0 * 0.2 / (n as f64).sqrt();
        for i in 0..2 {
            assert!((sum[i] / n as f64 - truth[i]).abs() < bound);
        }
    }

    #[test]
    fn snr_noise_free_is_one() {
        let di = DoubleIntegrator::new(0.25, 0.0).unwrap();
        let (s, o) = double_integrator_trajectory(&di, [0.0, 0.0], 1.0, 20, &mut Rng::new(0)).unwrap();
        assert_eq!(snr_estimate(&s, &o).unwrap(), 1.0);
    }

    #[test]
    fn snr_vanishes_without_signal() {
        let mut rng = Rng::new(3);
        let still = vec![[1.0, 0.0]; 50];
        let noisy = |rng: &mut Rng, truth: &[[f64; 2]], sigma: f64| -> Vec<[f64; 2]> {
            truth
                .iter()
                .map(|x| [x[0] + rng.normal(0.0, sigma), x[1] + rng.normal(0.0, sigma)])
                .collect()
        };
        let obs = noisy(&mut rng, &still, 0.1);
        assert_eq!(snr_estimate(&still, &obs).unwrap(), 0.0);

        // a faint signal is drowned out as the noise grows
        let creeping: Vec<[f64; 2]> = (0..50).map(|t| [1e-3 * t as f64, 1e-3]).collect();
        let mut last = f64::INFINITY;
        for sigma in [1e-4, 1e-2, 1.0] {
            let obs = noisy(&mut rng, &creeping, sigma);
            let snr = snr_estimate(&creeping, &obs).unwrap();
            assert!(snr < last);
            last = snr;
        }
        assert!(last < 0.01);
    }

    #[test]
    fn snr_errors() {
        let s = vec![[0.0, 0.0]; 3];
        assert!(snr_estimate(&s, &s).is_err());
        assert!(snr_estimate(&s[..1], &s[..1]).is_err());
    }
}
