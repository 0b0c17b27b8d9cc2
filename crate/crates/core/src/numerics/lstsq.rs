//! Least squares via Householder QR with a ridge fallback for rank-deficient
//! designs.

use super::Matrix;
use crate::error::{shape, Error, Result};

/// Relative size below which an `R` diagonal entry counts as zero.
const RANK_TOL: f64 = 1e-10;
/// Ridge strength relative to `trace(X^T X) / k`.
const RIDGE_REL: f64 = 1e-10;

/// Returns `w` minimising `||X w - b||^2` for every column of `b`.
///
/// Rank-deficient `X` falls back to the ridge solution with
/// `lambda = 1e-10 * trace(X^T X) / k`, obtained by QR of the augmented
/// system `[X; sqrt(lambda) I] w = [b; 0]`.
pub fn solve_least_squares(x: &Matrix, b: &Matrix) -> Result<Matrix> {
    let (n, k) = x.shape();
    if n == 0 || k == 0 {
        return Err(Error::Empty("least-squares design matrix".into()));
    }
    if b.rows() != n {
        return Err(shape(format!(
            "design {:?} against targets {:?}",
            x.shape(),
            b.shape()
        )));
    }
    if !x.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite("least-squares input".into()));
    }

    if n >= k {
        let qr = HouseholderQr::new(x.clone());
        if !qr.rank_deficient() {
            return Ok(qr.solve(b));
        }
    }

    let trace: f64 = x.as_slice().iter().map(|v| v * v).sum();
    if trace == 0.0 {
        return Ok(Matrix::zeros(k, b.cols()));
    }
    let lambda = RIDGE_REL * trace / k as f64;
    let root = lambda.sqrt();
    let mut aug = Matrix::zeros(n + k, k);
    aug.as_mut_slice()[..n * k].copy_from_slice(x.as_slice());
    for i in 0..k {
        aug[(n + i, i)] = root;
    }
    let mut aug_b = Matrix::zeros(n + k, b.cols());
    aug_b.as_mut_slice()[..n * b.cols()].copy_from_slice(b.as_slice());
    Ok(HouseholderQr::new(aug).solve(&aug_b))
}

/// Compact Householder factorisation: `R` in the upper triangle, the
/// reflector vectors below the diagonal with their leading entries in
/// `head`.
struct HouseholderQr {
    qr: Matrix,
    head: Vec<f64>,
    beta: Vec<f64>,
    diag: Vec<f64>,
}

impl HouseholderQr {
    fn new(mut a: Matrix) -> Self {
        let (n, k) = a.shape();
        let mut head = vec![0.0; k];
        let mut beta = vec![0.0; k];
        let mut diag = vec![0.0; k];
        for j in 0..k {
            let norm = (j..n).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt();
            if norm == 0.0 {
                diag[j] = 0.0;
                continue;
            }
            let alpha = if a[(j, j)] > 0.0 { -norm } else { norm };
            // v = x - alpha e1, stored in place; v^T v = 2 norm (norm + |x0|)
            let v0 = a[(j, j)] - alpha;
            head[j] = v0;
            let vtv = v0 * v0 + (j + 1..n).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>();
            beta[j] = 2.0 / vtv;
            diag[j] = alpha;
            for c in j + 1..k {
                let mut s = v0 * a[(j, c)];
                for i in j + 1..n {
                    s += a[(i, j)] * a[(i, c)];
                }
                s *= beta[j];
                a[(j, c)] -= s * v0;
                for i in j + 1..n {
                    let vi = a[(i, j)];
                    a[(i, c)] -= s * vi;
                }
            }
        }
        Self {
            qr: a,
            head,
            beta,
            diag,
        }
    }

    fn rank_deficient(&self) -> bool {
        let max = self.diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        max == 0.0 || self.diag.iter().any(|d| d.abs() <= RANK_TOL * max)
    }

    fn solve(&self, b: &Matrix) -> Matrix {
        let (n, k) = self.qr.shape();
        let m = b.cols();
        let mut y = b.clone();
        // y <- Q^T b
        for j in 0..k {
            if self.beta[j] == 0.0 {
                continue;
            }
            for c in 0..m {
                let mut s = self.head[j] * y[(j, c)];
                for i in j + 1..n {
                    s += self.qr[(i, j)] * y[(i, c)];
                }
                s *= self.beta[j];
                y[(j, c)] -= s * self.head[j];
                for i in j + 1..n {
                    y[(i, c)] -= s * self.qr[(i, j)];
                }
            }
        }
        // back substitution on R
        let mut w = Matrix::zeros(k, m);
        for c in 0..m {
            for j in (0..k).rev() {
                let mut s = y[(j, c)];
                for l in j + 1..k {
                    s -= self.qr[(j, l)] * w[(l, c)];
                }
                w[(j, c)] = if self.diag[j] == 0.0 { 0.0 } else { s / self.diag[j] };
            }
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    /// Gauss-Jordan inverse, used only as an independent oracle.
    fn invert(a: &Matrix) -> Matrix {
        let n = a.rows();
        let mut m = a.clone();
        let mut inv = Matrix::identity(n);
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| m[(i, c)].abs().total_cmp(&m[(j, c)].abs()))
                .unwrap();
            for j in 0..n {
                let t = m[(c, j)];
                m[(c, j)] = m[(p, j)];
                m[(p, j)] = t;
                let t = inv[(c, j)];
                inv[(c, j)] = inv[(p, j)];
                inv[(p, j)] = t;
            }
            let d = m[(c, c)];
            for j in 0..n {
                m[(c, j)] /= d;
                inv[(c, j)] /= d;
            }
            for i in 0..n {
                if i != c {
                    let f = m[(i, c)];
                    for j in 0..n {
                        m[(i, j)] -= f * m[(c, j)];
                        inv[(i, j)] -= f * inv[(c, j)];
                    }
                }
            }
        }
        inv
    }

    #[test]
    fn identity_system() {
        let w = solve_least_squares(&Matrix::identity(2), &Matrix::column(&[2.0, 3.0])).unwrap();
        assert!((w[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((w[(1, 0)] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_affine_fit() {
        let x = Matrix::from_rows(&[[1.0, 1.0], [1.0, 2.0], [1.0, 3.0]]).unwrap();
        let w = solve_least_squares(&x, &Matrix::column(&[3.0, 5.0, 7.0])).unwrap();
        assert!((w[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((w[(1, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn matches_normal_equations_oracle() {
        let mut rng = Rng::new(50);
        let data = (0..250).map(|_| rng.normal(0.0, 1.0)).collect();
        let x = Matrix::from_vec(50, 5, data).unwrap();
        let truth = Matrix::column(&[1.5, -2.0, 0.25, 3.0, -0.75]);
        let b = x.matmul(&truth).unwrap();
        let w = solve_least_squares(&x, &b).unwrap();

        let xt = x.transpose();
        let oracle = invert(&xt.matmul(&x).unwrap())
            .matmul(&xt)
            .unwrap()
            .matmul(&b)
            .unwrap();
        for i in 0..5 {
            let rel = (w[(i, 0)] - oracle[(i, 0)]).abs() / oracle[(i, 0)].abs();
            assert!(rel < 1e-9, "coef {i}: {rel}");
        }
    }

    #[test]
    fn residual_orthogonal_to_columns() {
        let mut rng = Rng::new(8);
        let x = Matrix::from_vec(40, 4, (0..160).map(|_| rng.uniform(-2.0, 2.0)).collect()).unwrap();
        let b = Matrix::from_vec(40, 2, (0..80).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
        let w = solve_least_squares(&x, &b).unwrap();
        let r = x.matmul(&w).unwrap().sub(&b).unwrap();
        let g = x.transpose().matmul(&r).unwrap();
        assert!(g.max_abs() < 1e-8);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let x = Matrix::zeros(3, 2);
        let b = Matrix::zeros(4, 1);
        assert!(matches!(solve_least_squares(&x, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn rank_deficient_falls_back_to_ridge() {
        // duplicated column: minimum-norm-like ridge answer splits the weight
        let x = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        let b = Matrix::column(&[2.0, 4.0, 6.0]);
        let w = solve_least_squares(&x, &b).unwrap();
        assert!(w.is_finite());
        assert!((w[(0, 0)] - 1.0).abs() < 1e-6);
        assert!((w[(1, 0)] - 1.0).abs() < 1e-6);
        // all-zero design gives the zero solution rather than an error
        let z = solve_least_squares(&Matrix::zeros(4, 3), &Matrix::column(&[1.0; 4])).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }
}
