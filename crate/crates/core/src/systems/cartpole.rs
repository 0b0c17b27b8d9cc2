//! Cart-pole with Euler integration and a discrete LQR for the upright
//! equilibrium.
//!
//! State is `(x, x_dot, theta, theta_dot)` with `theta = 0` upright; the
//! action is a horizontal force on the cart in newtons.

use serde::{Deserialize, Serialize};

use super::Dynamics;
use crate::error::{invalid, shape, Error, Result};
use crate::numerics::{solve_least_squares, Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cartpole {
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Distance from pivot to the pole's centre of mass.
    pub half_length: f64,
    pub gravity: f64,
    pub dt: f64,
    /// Per-step process noise `U(-w, w)` on every state; 0 disables it.
    pub state_noise_halfwidth: f64,
}

impl Default for Cartpole {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            gravity: 9.81,
            dt: 0.02,
            state_noise_halfwidth: 0.1,
        }
    }
}

impl Cartpole {
    pub fn noise_free(self) -> Self {
        Self {
            state_noise_halfwidth: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = [self.cart_mass, self.pole_mass, self.half_length, self.gravity, self.dt];
        if p.iter().any(|v| !(*v > 0.0)) || !(self.state_noise_halfwidth >= 0.0) {
            return Err(invalid(format!("cartpole parameters {self:?}")));
        }
        Ok(())
    }

    /// Continuous-time accelerations `(x_ddot, theta_ddot)`.
    pub fn accelerations(&self, s: &[f64], force: f64) -> (f64, f64) {
        let total = self.cart_mass + self.pole_mass;
        let ml = self.pole_mass * self.half_length;
        let (sin, cos) = s[2].sin_cos();
        let temp = (force + ml * s[3] * s[3] * sin) / total;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (self.half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / total));
        let x_acc = temp - ml * theta_acc * cos / total;
        (x_acc, theta_acc)
    }

    /// Noise-free Euler step.
    pub fn mean_step(&self, s: &[f64], force: f64) -> [f64; 4] {
        let (x_acc, theta_acc) = self.accelerations(s, force);
        let dt = self.dt;
        [
            s[0] + dt * s[1],
            s[1] + dt * x_acc,
            s[2] + dt * s[3],
            s[3] + dt * theta_acc,
        ]
    }

    /// Discrete-time Jacobians `(A, B)` of [`Cartpole::mean_step`] at the
    /// upright equilibrium.
    pub fn linearize_upright(&self) -> (Matrix, Matrix) {
        let total = self.cart_mass + self.pole_mass;
        let ml = self.pole_mass * self.half_length;
        let denom = self.half_length * (4.0 / 3.0 - self.pole_mass / total);
        // d(theta_acc)/d(theta), d(theta_acc)/dF
        let tt = self.gravity / denom;
        let tf = -1.0 / (total * denom);
        // x_acc = F/total - ml/total * theta_acc
        let xt = -ml / total * tt;
        let xf = 1.0 / total - ml / total * tf;
        let dt = self.dt;
        let a = Matrix::from_rows(&[
            [1.0, dt, 0.0, 0.0],
            [0.0, 1.0, dt * xt, 0.0],
            [0.0, 0.0, 1.0, dt],
            [0.0, 0.0, dt * tt, 1.0],
        ])
        .expect("finite");
        let b = Matrix::column(&[0.0, dt * xf, 0.0, dt * tf]);
        (a, b)
    }
}

impl Dynamics for Cartpole {
    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn step(&self, s: &[f64], a: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        if s.len() != 4 || a.len() != 1 {
            return Err(shape(format!("cartpole state/action lengths {}/{}", s.len(), a.len())));
        }
        if s.iter().chain(a).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cartpole input".into()));
        }
        let w = self.state_noise_halfwidth;
        let mut next = self.mean_step(s, a[0]).to_vec();
        if w > 0.0 {
            for v in &mut next {
                *v += rng.uniform(-w, w);
            }
        }
        Ok(next)
    }
}

/// Riccati fixed point and the matching feedback gain (`u = -K s`).
#[derive(Clone, Debug)]
pub struct LqrSolution {
    pub gain: Matrix,
    pub cost_to_go: Matrix,
    pub iterations: usize,
}

const RICCATI_TOL: f64 = 1e-10;
const RICCATI_CAP: usize = 10_000;

/// Iterates the discrete algebraic Riccati equation
/// `P = Q + A'PA - A'PB (R + B'PB)^-1 B'PA` from `P = Q` to a fixed point.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<LqrSolution> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n || q.shape() != (n, n) || r.shape() != (b.cols(), b.cols()) {
        return Err(shape("inconsistent LQR matrices"));
    }
    let at = a.transpose();
    let bt = b.transpose();
    let mut p = q.clone();
    for it in 1..=RICCATI_CAP {
        let pa = p.matmul(a)?;
        let pb = p.matmul(b)?;
        let s = r.add(&bt.matmul(&pb)?)?;
        let gain = solve_least_squares(&s, &bt.matmul(&pa)?)?;
        let next = q
            .add(&at.matmul(&pa)?)?
            .sub(&at.matmul(&pb)?.matmul(&gain)?)?;
        let change = next.sub(&p)?.max_abs();
        let scale = next.max_abs().max(1.0);
        p = next;
        if !p.is_finite() {
            break;
        }
        if change <= RICCATI_TOL * scale {
            let s = r.add(&bt.matmul(&p.matmul(b)?)?)?;
            let gain = solve_least_squares(&s, &bt.matmul(&p.matmul(a)?)?)?;
            return Ok(LqrSolution {
                gain,
                cost_to_go: p,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence(format!(
        "Riccati iteration did not settle within {RICCATI_CAP} steps"
    )))
}

/// LQR gain for the linearised upright cart-pole with `Q = q_scale I` and
/// `R = r_scale`.
pub fn lqr_gains(cp: &Cartpole, q_scale: f64, r_scale: f64) -> Result<Matrix> {
    Ok(lqr_solve(cp, q_scale, r_scale)?.gain)
}

pub fn lqr_solve(cp: &Cartpole, q_scale: f64, r_scale: f64) -> Result<LqrSolution> {
    if !(q_scale > 0.0) || !(r_scale > 0.0) {
        return Err(invalid(format!("LQR weights q = {q_scale}, r = {r_scale}")));
    }
    cp.validate()?;
    let (a, b) = cp.linearize_upright();
    let q = Matrix::identity(4).scale(q_scale);
    let r = Matrix::from_diag(&[r_scale]);
    solve_dare(&a, &b, &q, &r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_rest_is_fixed() {
        let cp = Cartpole::default().noise_free();
        let next = cp.step(&[0.0; 4], &[0.0], &mut Rng::new(0)).unwrap();
        assert_eq!(next, vec![0.0; 4]);
    }

    #[test]
    fn tilted_pole_falls_away() {
        let cp = Cartpole::default();
        let (_, theta_acc) = cp.accelerations(&[0.0, 0.0, 0.05, 0.0], 0.0);
        assert!(theta_acc > 0.0);
        let (_, theta_acc) = cp.accelerations(&[0.0, 0.0, -0.05, 0.0], 0.0);
        assert!(theta_acc < 0.0);
    }

    #[test]
    fn euler_converges_first_order() {
        let horizon = 0.4;
        let s0 = [0.0, 0.2, 0.1, -0.3];
        let run = |dt: f64| {
            let cp = Cartpole { dt, ..Cartpole::default() }.noise_free();
            let steps = (horizon / dt).round() as usize;
            let mut s = s0;
            for _ in 0..steps {
                s = cp.mean_step(&s, 0.5);
            }
            s
        };
        let reference = run(horizon / 16_384.0);
        let err = |s: [f64; 4]| (0..4).map(|i| (s[i] - reference[i]).abs()).fold(0.0, f64::max);
        let e1 = err(run(0.01));
        let e2 = err(run(0.005));
        let ratio = e1 / e2;
        assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn linearization_matches_finite_differences() {
        let cp = Cartpole::default();
        let (a, b) = cp.linearize_upright();
        let h = 1e-6;
        for j in 0..4 {
            let mut up = [0.0; 4];
            let mut dn = [0.0; 4];
            up[j] = h;
            dn[j] = -h;
            let fu = cp.mean_step(&up, 0.0);
            let fd = cp.mean_step(&dn, 0.0);
            for i in 0..4 {
                assert!(((fu[i] - fd[i]) / (2.0 * h) - a[(i, j)]).abs() < 1e-8);
            }
        }
        let fu = cp.mean_step(&[0.0; 4], h);
        let fd = cp.mean_step(&[0.0; 4], -h);
        for i in 0..4 {
            assert!(((fu[i] - fd[i]) / (2.0 * h) - b[(i, 0)]).abs() < 1e-8);
        }
    }

    #[test]
    fn dare_residual_small() {
        let cp = Cartpole::default();
        let sol = lqr_solve(&cp, 1.0, 1.0).unwrap();
        let (a, b) = cp.linearize_upright();
        let p = &sol.cost_to_go;
        let q = Matrix::identity(4);
        let r = Matrix::from_diag(&[1.0]);
        let at = a.transpose();
        let bt = b.transpose();
        let s = r.add(&bt.matmul(&p.matmul(&b).unwrap()).unwrap()).unwrap();
        let bpa = bt.matmul(&p.matmul(&a).unwrap()).unwrap();
        // scalar input: (R + B'PB)^-1 is a plain division
        let correction = at
            .matmul(&p.matmul(&b).unwrap())
            .unwrap()
            .matmul(&bpa)
            .unwrap()
            .scale(1.0 / s[(0, 0)]);
        let rhs = q
            .add(&at.matmul(&p.matmul(&a).unwrap()).unwrap())
            .unwrap()
            .sub(&correction)
            .unwrap();
        let residual = rhs.sub(p).unwrap().max_abs() / p.max_abs().max(1.0);
        assert!(residual < 1e-8, "{residual}");
    }

    #[test]
    fn gain_shrinks_with_control_cost() {
        let cp = Cartpole::default();
        let mut last = f64::INFINITY;
        for r in [0.1, 1.0, 10.0, 100.0, 1000.0] {
            let k = lqr_gains(&cp, 1.0, r).unwrap();
            let norm = k.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm < last, "r = {r}: {norm} >= {last}");
            last = norm;
        }
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(lqr_gains(&Cartpole::default(), 0.0, 1.0).is_err());
        assert!(lqr_gains(&Cartpole::default(), 1.0, -1.0).is_err());
    }
}
