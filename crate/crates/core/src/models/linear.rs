use super::dataset::{Dataset, Formulation};
use super::model::{DynamicsModel, ModelVariant};
use super::normalizer::Normalizer;
use crate::error::{invalid, Result};
use crate::numerics::{solve_least_squares, Matrix};

/// Least-squares fit of `s' - s ~ A s + B a`. The model predicts
/// `s + A s + B a`.
pub fn fit_linear_model(data: &Dataset) -> Result<DynamicsModel> {
    let (ds, da) = (data.state_dim(), data.action_dim());
    if data.len() < ds + da {
        return Err(invalid(format!(
            "linear fit needs at least {} transitions, got {}",
            ds + da,
            data.len()
        )));
    }
    let n = data.len();
    let mut design = Vec::with_capacity(n * (ds + da));
    for i in 0..n {
        design.extend_from_slice(data.states.row(i));
        design.extend_from_slice(data.actions.row(i));
    }
    let x = Matrix::from_vec(n, ds + da, design)?;
    let w = solve_least_squares(&x, &data.targets(Formulation::Delta))?;
    // w is (ds + da) x ds; A = w[..ds]^T, B = w[ds..]^T
    let mut a = Matrix::zeros(ds, ds);
    let mut b = Matrix::zeros(ds, da);
    for i in 0..ds {
        for j in 0..ds {
            a[(i, j)] = w[(j, i)];
        }
        for j in 0..da {
            b[(i, j)] = w[(ds + j, i)];
        }
    }
    Ok(DynamicsModel {
        variant: ModelVariant::Linear { a, b },
        formulation: Formulation::Delta,
        normalizer: Normalizer::identity(ds, da),
        state_dim: ds,
        action_dim: da,
    })
}
