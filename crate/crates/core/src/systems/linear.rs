//! Pole-parameterised discrete-time linear systems
//! `s' = A s + B a + w`, with `A` upper triangular and every diagonal entry
//! equal to the pole, so the spectrum is exactly `{pole}`.

use serde::{Deserialize, Serialize};

use super::Dynamics;
use crate::error::{invalid, shape, Error, Result};
use crate::numerics::{infinity_norm, matrix_power_apply, norm2, Matrix, Rng};

/// Half-width of the default uniform process noise.
pub const BASE_NOISE: f64 = 0.01;
/// Row-sum bound enforced on regularised systems.
pub const REGULARIZED_NORM: f64 = 3.0;
/// Step cap for [`transient_decay_steps`].
pub const DECAY_CAP: usize = 1_000_000;

/// How to draw a state-space system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceSpec {
    pub pole: f64,
    pub dim: usize,
    pub action_dim: usize,
    pub noise_mult: f64,
    pub regularized: bool,
    pub zero_inputs: bool,
}

impl StateSpaceSpec {
    pub fn new(pole: f64, dim: usize) -> Self {
        Self {
            pole,
            dim,
            action_dim: 1,
            noise_mult: 1.0,
            regularized: false,
            zero_inputs: false,
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<LinearSystem> {
        LinearSystem::sample_with_actions(
            self.pole,
            self.dim,
            self.action_dim,
            self.noise_mult,
            self.regularized,
            self.zero_inputs,
            rng,
        )
    }

    /// The system whose own seed is `seed`, i.e. the one recorded as
    /// `system_seed` in generated trajectories.
    pub fn build(&self, seed: u64) -> Result<LinearSystem> {
        LinearSystem::from_seed(
            self.pole,
            self.dim,
            self.action_dim,
            self.noise_mult,
            self.regularized,
            self.zero_inputs,
            seed,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub pole: f64,
    /// Multiplier on [`BASE_NOISE`].
    pub noise_scale: f64,
    pub dim: usize,
    pub regularized: bool,
    pub zero_inputs: bool,
    pub seed: u64,
}

impl LinearSystem {
    /// Wraps explicit matrices. The pole is read off `A[0][0]`.
    pub fn from_matrices(a: Matrix, b: Matrix, noise_scale: f64) -> Result<Self> {
        if !a.is_square() || a.rows() == 0 {
            return Err(shape(format!("dynamics matrix {:?}", a.shape())));
        }
        if b.rows() != a.rows() {
            return Err(shape(format!("input matrix {:?} for state dim {}", b.shape(), a.rows())));
        }
        if noise_scale < 0.0 {
            return Err(invalid("negative noise scale"));
        }
        Ok(Self {
            pole: a[(0, 0)],
            dim: a.rows(),
            zero_inputs: b.max_abs() == 0.0,
            a,
            b,
            noise_scale,
            regularized: false,
            seed: 0,
        })
    }

    /// Draws a system with a single input channel.
    pub fn sample(
        pole: f64,
        dim: usize,
        noise_mult: f64,
        regularized: bool,
        zero_inputs: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        Self::sample_with_actions(pole, dim, 1, noise_mult, regularized, zero_inputs, rng)
    }

    pub fn sample_with_actions(
        pole: f64,
        dim: usize,
        action_dim: usize,
        noise_mult: f64,
        regularized: bool,
        zero_inputs: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        Self::from_seed(pole, dim, action_dim, noise_mult, regularized, zero_inputs, rng.next_u64())
    }

    fn from_seed(
        pole: f64,
        dim: usize,
        action_dim: usize,
        noise_mult: f64,
        regularized: bool,
        zero_inputs: bool,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("state dimension must be at least 1"));
        }
        if !(noise_mult >= 0.0) || !pole.is_finite() {
            return Err(invalid(format!("pole {pole}, noise multiplier {noise_mult}")));
        }
        let mut own = Rng::new(seed);

        let mut a = Matrix::identity(dim).scale(pole);
        for i in 0..dim {
            for j in i + 1..dim {
                a[(i, j)] = own.uniform(-1.0, 1.0);
            }
        }
        let mut b = Matrix::zeros(dim, action_dim);
        for v in b.as_mut_slice() {
            let x = own.uniform(-1.0, 1.0);
            if !zero_inputs {
                *v = x;
            }
        }
        if regularized {
            regularize(&mut a, REGULARIZED_NORM);
        }
        Ok(Self {
            a,
            b,
            pole,
            noise_scale: noise_mult,
            dim,
            regularized,
            zero_inputs,
            seed,
        })
    }

    pub fn noise_halfwidth(&self) -> f64 {
        BASE_NOISE * self.noise_scale
    }

    /// Noise-free analytical state after `t` steps:
    /// `A^t s0 + sum_{l<t} A^(t-l-1) B a_l`.
    pub fn closed_form_state(&self, s0: &[f64], actions: &[Vec<f64>], t: usize) -> Result<Vec<f64>> {
        if t > actions.len() {
            return Err(invalid(format!("t = {t} exceeds {} logged actions", actions.len())));
        }
        let mut s = matrix_power_apply(&self.a, s0, t)?;
        for (l, act) in actions.iter().take(t).enumerate() {
            let forced = self.b.mul_vec(act)?;
            let term = matrix_power_apply(&self.a, &forced, t - l - 1)?;
            for (si, ti) in s.iter_mut().zip(term) {
                *si += ti;
            }
        }
        Ok(s)
    }

    /// Noise-free transition.
    pub fn mean_step(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(s, a)?;
        let mut next = self.a.mul_vec_unchecked(s);
        if self.b.cols() > 0 {
            for (n, f) in next.iter_mut().zip(self.b.mul_vec_unchecked(a)) {
                *n += f;
            }
        }
        Ok(next)
    }

    fn check_dims(&self, s: &[f64], a: &[f64]) -> Result<()> {
        if s.len() != self.dim || a.len() != self.b.cols() {
            return Err(shape(format!(
                "state/action of length {}/{} for system {}x{}",
                s.len(),
                a.len(),
                self.dim,
                self.b.cols()
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input state".into()));
        }
        Ok(())
    }
}

impl Dynamics for LinearSystem {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn action_dim(&self) -> usize {
        self.b.cols()
    }

    fn step(&self, s: &[f64], a: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let mut next = self.mean_step(s, a)?;
        let w = self.noise_halfwidth();
        for v in &mut next {
            *v += rng.uniform(-w, w);
        }
        Ok(next)
    }
}

/// Scales the strict-upper part of any row whose absolute sum exceeds
/// `bound`, leaving the diagonal (and hence the pole) untouched.
fn regularize(a: &mut Matrix, bound: f64) {
    let n = a.rows();
    for i in 0..n {
        let diag = a[(i, i)].abs();
        let off: f64 = (i + 1..n).map(|j| a[(i, j)].abs()).sum();
        if diag + off > bound && off > 0.0 {
            let k = ((bound - diag) / off).max(0.0);
            for j in i + 1..n {
                a[(i, j)] *= k;
            }
        }
    }
    debug_assert!(infinity_norm(a) <= bound + 1e-12 || a[(0, 0)].abs() > bound);
}

/// Smallest `k` with `||A^k s0||_2 < threshold`.
///
/// Fails with [`Error::NoConvergence`] once [`DECAY_CAP`] steps pass or the
/// transient overflows.
pub fn transient_decay_steps(sys: &LinearSystem, s0: &[f64], threshold: f64) -> Result<usize> {
    if s0.len() != sys.dim {
        return Err(shape(format!("initial state of length {} for dim {}", s0.len(), sys.dim)));
    }
    // If the last row only has its diagonal, that coordinate evolves as
    // a_dd^k s0_d and can never drop below the threshold when |a_dd| >= 1.
    let last = sys.dim - 1;
    let a_dd = sys.a[(last, last)];
    if sys.a.row(last)[..last].iter().all(|v| *v == 0.0) && a_dd.abs() >= 1.0 && s0[last].abs() >= threshold {
        return Err(Error::NoConvergence(format!(
            "transient cannot decay for pole {}",
            sys.pole
        )));
    }
    let mut x = s0.to_vec();
    for k in 0..=DECAY_CAP {
        let n = norm2(&x);
        if n < threshold {
            return Ok(k);
        }
        if !n.is_finite() {
            break;
        }
        x = sys.a.mul_vec_unchecked(&x);
    }
    Err(Error::NoConvergence(format!(
        "transient did not decay below {threshold} for pole {}",
        sys.pole
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_system(noise: f64) -> LinearSystem {
        let a = Matrix::from_rows(&[[0.5, 1.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.5]]).unwrap();
        let b = Matrix::column(&[0.0, 0.0, 1.0]);
        LinearSystem::from_matrices(a, b, noise).unwrap()
    }

    #[test]
    fn sampled_diagonal_is_the_pole() {
        let mut rng = Rng::new(0);
        let sys = LinearSystem::sample(0.5, 3, 1.0, false, false, &mut rng).unwrap();
        for i in 0..3 {
            assert_eq!(sys.a[(i, i)], 0.5);
            for j in 0..i {
                assert_eq!(sys.a[(i, j)], 0.0);
            }
        }
        assert!(infinity_norm(&sys.a) <= 3.0);
    }

    #[test]
    fn zero_dim_rejected() {
        let mut rng = Rng::new(0);
        assert!(LinearSystem::sample(0.5, 0, 1.0, false, false, &mut rng).is_err());
    }

    #[test]
    fn regularized_dim81_bounded() {
        let mut rng = Rng::new(81);
        for _ in 0..1000 {
            let sys = LinearSystem::sample(0.5, 81, 1.0, true, false, &mut rng).unwrap();
            assert!(infinity_norm(&sys.a) <= 3.0 + 1e-12);
            assert!((0..81).all(|i| sys.a[(i, i)] == 0.5));
        }
    }

    #[test]
    fn zero_inputs_zero_b() {
        let mut rng = Rng::new(4);
        let sys = LinearSystem::sample(0.9, 9, 1.0, false, true, &mut rng).unwrap();
        assert_eq!(sys.b.max_abs(), 0.0);
    }

    #[test]
    fn same_seed_same_system_as_unzeroed_a() {
        // zeroing B must not shift the draws that make up A
        let plain = LinearSystem::sample(0.5, 5, 1.0, false, false, &mut Rng::new(2)).unwrap();
        let zeroed = LinearSystem::sample(0.5, 5, 1.0, false, true, &mut Rng::new(2)).unwrap();
        assert_eq!(plain.a, zeroed.a);
    }

    #[test]
    fn step_direct_arithmetic() {
        let sys = example_system(0.0);
        let mut rng = Rng::new(1);
        let next = sys.step(&[1.0, 0.0, 0.0], &[0.3], &mut rng).unwrap();
        assert_eq!(next, vec![0.5, 0.0, 0.3]);
        let zero = sys.step(&[0.0; 3], &[0.0], &mut rng).unwrap();
        assert_eq!(zero, vec![0.0; 3]);
    }

    #[test]
    fn step_noise_within_halfwidth() {
        let sys = example_system(10.0);
        let mut rng = Rng::new(1);
        for _ in 0..1000 {
            let next = sys.step(&[0.0; 3], &[0.0], &mut rng).unwrap();
            assert!(next.iter().all(|v| v.abs() < 0.1));
        }
    }

    #[test]
    fn step_rejects_non_finite_state() {
        let sys = example_system(1.0);
        let mut rng = Rng::new(1);
        assert!(matches!(
            sys.step(&[f64::NAN, 0.0, 0.0], &[0.0], &mut rng),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(sys.step(&[0.0; 2], &[0.0], &mut rng), Err(Error::Shape(_))));
    }

    #[test]
    fn iterated_steps_match_closed_form() {
        let mut rng = Rng::new(50);
        let sys = LinearSystem::sample(0.9, 4, 0.0, false, false, &mut rng).unwrap();
        let s0: Vec<f64> = (0..4).map(|_| rng.normal(0.0, 1.0)).collect();
        let actions: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.uniform(-1.0, 1.0)]).collect();
        let mut s = s0.clone();
        for a in &actions {
            s = sys.step(&s, a, &mut rng).unwrap();
        }
        let cf = sys.closed_form_state(&s0, &actions, 50).unwrap();
        let scale = norm2(&cf).max(1e-300);
        let err: Vec<f64> = s.iter().zip(&cf).map(|(x, y)| x - y).collect();
        assert!(norm2(&err) / scale < 1e-10);
    }

    #[test]
    fn closed_form_edge_cases() {
        let sys = example_system(0.0);
        let s0 = vec![1.0, 2.0, 3.0];
        assert_eq!(sys.closed_form_state(&s0, &[], 0).unwrap(), s0);
        let zeros = vec![vec![0.0]; 4];
        let got = sys.closed_form_state(&s0, &zeros, 4).unwrap();
        assert_eq!(got, matrix_power_apply(&sys.a, &s0, 4).unwrap());
        assert!(sys.closed_form_state(&s0, &zeros, 5).is_err());
    }

    fn scalar(pole: f64) -> LinearSystem {
        LinearSystem::from_matrices(Matrix::from_diag(&[pole]), Matrix::zeros(1, 1), 0.0).unwrap()
    }

    #[test]
    fn decay_hand_computed() {
        assert_eq!(transient_decay_steps(&scalar(0.5), &[1.0], 1e-4).unwrap(), 14);
        assert_eq!(transient_decay_steps(&scalar(0.1), &[1.0], 1e-4).unwrap(), 5);
        assert!(matches!(
            transient_decay_steps(&scalar(1.0), &[1.0], 1e-4),
            Err(Error::NoConvergence(_))
        ));
    }

    #[test]
    fn marginal_pole_fails_fast() {
        let mut rng = Rng::new(3);
        let sys = LinearSystem::sample(1.0, 3, 0.0, false, true, &mut rng).unwrap();
        let start = std::time::Instant::now();
        assert!(transient_decay_steps(&sys, &[0.3, -0.2, 1.0], 1e-4).is_err());
        assert!(start.elapsed().as_millis() < 100);
        // last coordinate already below threshold: the loop decides
        assert!(transient_decay_steps(&scalar(1.0), &[1e-5], 1e-4).is_ok());
    }
}
