//! Quick in-process oracle checks, runnable from an installed binary.

use crate::error::Result;
use crate::models::{batch_loss_and_grad, fit_linear_model, Activation, Dataset, DynamicsModel, Head, Mlp};
use crate::numerics::{norm2, Matrix, Rng};
use crate::rollout::{evaluate, RolloutMode, StateRanges};
use crate::systems::{generate_dataset, transient_decay_steps, DatasetSpec, LinearSystem, StateSpaceSpec};

use super::snr::snr_study;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, result: Result<(bool, String)>) -> CheckOutcome {
    match result {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn closed_form() -> Result<(bool, String)> {
    let mut rng = Rng::new(11);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let dim = 3 + k % 7;
        let pole = rng.uniform(0.1, 0.95);
        let sys = LinearSystem::sample(pole, dim, 0.0, false, false, &mut rng)?;
        let mut s: Vec<f64> = (0..dim).map(|_| rng.normal(0.0, 1.0)).collect();
        let s0 = s.clone();
        let actions: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.uniform(-1.0, 1.0)]).collect();
        for a in &actions {
            s = sys.mean_step(&s, a)?;
        }
        let exact = sys.closed_form_state(&s0, &actions, 50)?;
        let diff: Vec<f64> = s.iter().zip(&exact).map(|(x, y)| x - y).collect();
        worst = worst.max(norm2(&diff) / norm2(&exact).max(1e-300));
    }
    Ok((worst < 1e-10, format!("max relative error {worst:.2e}")))
}

fn gradients() -> Result<(bool, String)> {
    let mut rng = Rng::new(5);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for head in [Head::Deterministic, Head::Probabilistic] {
        let dout = if head == Head::Deterministic { 3 } else { 6 };
        for _ in 0..3 {
            let net = Mlp::new(vec![4, 32, 32, dout], Activation::Relu, &mut rng)?;
            let inputs: Vec<f64> = (0..8).map(|_| rng.normal(0.0, 1.0)).collect();
            if inputs.chunks(4).any(|x| net.min_abs_preactivation(x) < 1e-4) {
                continue;
            }
            let targets: Vec<f64> = (0..6).map(|_| rng.normal(0.0, 1.0)).collect();
            let mut grads = vec![0.0; net.num_params()];
            let loss = batch_loss_and_grad(&net, head, &inputs, &targets, 2, &mut grads);
            let mut scratch = grads.clone();
            let mut probe = net.clone();
            for _ in 0..30 {
                let k = (rng.next_u64() % net.num_params() as u64) as usize;
                probe.params[k] = net.params[k] + h;
                let up = batch_loss_and_grad(&probe, head, &inputs, &targets, 2, &mut scratch);
                probe.params[k] = net.params[k] - h;
                let down = batch_loss_and_grad(&probe, head, &inputs, &targets, 2, &mut scratch);
                probe.params[k] = net.params[k];
                let fd = (up - down) / (2.0 * h);
                let floor = 1e-3 * loss.abs().max(1.0);
                worst = worst.max((grads[k] - fd).abs() / grads[k].abs().max(fd.abs()).max(floor));
            }
        }
    }
    Ok((worst < 1e-5, format!("max relative error {worst:.2e}")))
}

fn linear_recovery() -> Result<(bool, String)> {
    let spec = StateSpaceSpec {
        noise_mult: 0.0,
        ..StateSpaceSpec::new(0.5, 3)
    };
    let sys = spec.build(42)?;
    let mut rng = Rng::new(3);
    let (mut s_rows, mut a_rows, mut n_rows) = (Vec::new(), Vec::new(), Vec::new());
    let mut s: Vec<f64> = (0..3).map(|_| rng.normal(0.0, 1.0)).collect();
    for _ in 0..60 {
        let a = vec![rng.uniform(-1.0, 1.0)];
        let next = sys.mean_step(&s, &a)?;
        s_rows.push(s.clone());
        a_rows.push(a);
        n_rows.push(next.clone());
        s = next;
    }
    let data = Dataset::new(Matrix::from_rows(&s_rows)?, Matrix::from_rows(&a_rows)?, Matrix::from_rows(&n_rows)?)?;
    let model = fit_linear_model(&data)?;
    let crate::models::ModelVariant::Linear { a, b } = &model.variant else {
        return Ok((false, "fit did not return a linear model".into()));
    };
    let a_hat = a.add(&Matrix::identity(3))?;
    let err = a_hat.sub(&sys.a)?.max_abs().max(b.sub(&sys.b)?.max_abs());
    Ok((err < 1e-6, format!("max entry error {err:.2e}")))
}

fn zero_baseline() -> Result<(bool, String)> {
    let trajs = generate_dataset(&DatasetSpec::state_space(StateSpaceSpec::new(0.5, 3), 10, 20), 9)?;
    let profile = evaluate(&DynamicsModel::zero(3, 1), &trajs, &RolloutMode::Logged)?;
    let ranges = StateRanges::from_trajectories(&trajs)?;
    let mut worst = 0.0f64;
    for t in 1..=20 {
        let mut errs: Vec<f64> = trajs
            .iter()
            .map(|tr| {
                let dims: Vec<usize> = ranges.active_dims().collect();
                dims.iter()
                    .map(|&d| (tr.states[t][d] / (ranges.hi[d] - ranges.lo[d])).powi(2))
                    .sum::<f64>()
                    / dims.len() as f64
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        let median = 0.5 * (errs[4] + errs[5]);
        worst = worst.max((profile.steps[t - 1].p50 - median).abs());
    }
    Ok((worst < 1e-12, format!("max median deviation {worst:.2e}")))
}

fn decay() -> Result<(bool, String)> {
    let sys = LinearSystem::from_matrices(Matrix::from_diag(&[0.5]), Matrix::zeros(1, 1), 0.0)?;
    let k = transient_decay_steps(&sys, &[1.0], 1e-4)?;
    Ok((k == 14, format!("scalar pole 0.5 decays in {k} steps")))
}

fn snr() -> Result<(bool, String)> {
    let rows = snr_study(&[0.25, 0.5, 0.75], 0.5, 200, 10, 1)?;
    let means: Vec<f64> = rows.iter().map(|r| r.snr_mean).collect();
    let ok = means.windows(2).all(|w| w[0] < w[1]);
    Ok((ok, format!("SNR {means:.3?}")))
}

fn determinism() -> Result<(bool, String)> {
    let spec = DatasetSpec::state_space(StateSpaceSpec::new(0.9, 5), 8, 30);
    let same = generate_dataset(&spec, 77)? == generate_dataset(&spec, 77)?;
    Ok((same, "equal seeds give equal datasets".into()))
}

/// Runs every check; none of them trains a network.
pub fn run_selftest() -> Vec<CheckOutcome> {
    vec![
        outcome("closed-form evolution", closed_form()),
        outcome("mlp gradients", gradients()),
        outcome("linear model recovery", linear_recovery()),
        outcome("zero-model error profile", zero_baseline()),
        outcome("transient decay", decay()),
        outcome("snr monotone in dt", snr()),
        outcome("seeded generation", determinism()),
    ]
}
