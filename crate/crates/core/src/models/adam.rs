use serde::{Deserialize, Serialize};

/// Bias-corrected Adam over a flat parameter slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(num_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// One Adam update; convenience wrapper over [`Adam::step`].
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut Adam, lr: f64) {
    state.step(params, grads, lr);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_no_move() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut opt = Adam::new(3);
        adam_step(&mut p, &[0.0; 3], &mut opt, 1e-3);
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![0.0; 3];
        let g = [0.5, -3.0, 1e-3];
        let mut opt = Adam::new(3);
        adam_step(&mut p, &g, &mut opt, 1e-3);
        for (pi, gi) in p.iter().zip(&g) {
            let expect = -1e-3 * gi.abs() / (gi.abs() + 1e-8) * gi.signum();
            assert!((pi - expect).abs() < 1e-15, "{pi} vs {expect}");
        }
    }

    #[test]
    fn matches_scalar_reference_on_quadratic() {
        // f(x) = 0.5 * c * (x - x0)^2 per coordinate
        let c = [1.0, 10.0, 0.1];
        let x0 = [3.0, -1.0, 0.5];
        let lr = 0.05;
        let mut p = vec![0.0; 3];
        let mut opt = Adam::new(3);
        let mut reference = [0.0f64; 3];
        let mut m = [0.0f64; 3];
        let mut v = [0.0f64; 3];
        for t in 1..=100 {
            let g: Vec<f64> = (0..3).map(|i| c[i] * (p[i] - x0[i])).collect();
            opt.step(&mut p, &g, lr);
            for i in 0..3 {
                let gi = c[i] * (reference[i] - x0[i]);
                m[i] = 0.9 * m[i] + 0.1 * gi;
                v[i] = 0.999 * v[i] + 0.001 * gi * gi;
                let mh = m[i] / (1.0 - 0.9f64.powi(t));
                let vh = v[i] / (1.0 - 0.999f64.powi(t));
                reference[i] -= lr * mh / (vh.sqrt() + 1e-8);
            }
        }
        for i in 0..3 {
            assert!((p[i] - reference[i]).abs() < 1e-12);
        }
    }
}
