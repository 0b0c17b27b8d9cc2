use compound_core::models::{
    batch_loss_and_grad, encode_dataset, fit_normalizer, member_seed, train_deterministic,
    train_ensemble, train_network, train_probabilistic, Activation, Dataset, DynamicsModel,
    Formulation, Head, Mlp, ModelKind, ModelVariant, TrainConfig, LOG_VAR_MIN,
};
use compound_core::numerics::{Matrix, Rng};

fn random_dataset(n: usize, ds: usize, da: usize, rng: &mut Rng) -> Dataset {
    let mut s = Matrix::zeros(n, ds);
    let mut a = Matrix::zeros(n, da);
    let mut sn = Matrix::zeros(n, ds);
    for i in 0..n {
        for j in 0..ds {
            s[(i, j)] = rng.normal(0.0, 1.0);
            sn[(i, j)] = 0.9 * s[(i, j)] + rng.normal(0.0, 0.3);
        }
        for j in 0..da {
            a[(i, j)] = rng.uniform(-1.0, 1.0);
        }
    }
    Dataset::new(s, a, sn).unwrap()
}

/// Stable upper-triangular system without noise.
fn linear_system_data(n_traj: usize, horizon: usize, rng: &mut Rng) -> Dataset {
    let a = [[0.8, 0.3, -0.2], [0.0, 0.7, 0.4], [0.0, 0.0, 0.6]];
    let b = [0.5, -0.3, 0.8];
    let mut s_rows = Vec::new();
    let mut a_rows = Vec::new();
    let mut n_rows = Vec::new();
    for _ in 0..n_traj {
        let mut s: Vec<f64> = (0..3).map(|_| rng.normal(0.0, 1.0)).collect();
        for _ in 0..horizon {
            let u = rng.uniform(-1.0, 1.0);
            let next: Vec<f64> = (0..3)
                .map(|r| (0..3).map(|c| a[r][c] * s[c]).sum::<f64>() + b[r] * u)
                .collect();
            s_rows.push(s.clone());
            a_rows.push(vec![u]);
            n_rows.push(next.clone());
            s = next;
        }
    }
    Dataset::new(
        Matrix::from_rows(&s_rows).unwrap(),
        Matrix::from_rows(&a_rows).unwrap(),
        Matrix::from_rows(&n_rows).unwrap(),
    )
    .unwrap()
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        hidden: vec![32, 32],
        epochs: 5,
        ..TrainConfig::deterministic().with_seed(seed)
    }
}

/// Relative error with a floor that tracks the loss magnitude: central
/// differences at h = 1e-6 carry roughly `eps * |loss| / h` of roundoff.
fn relative_error(analytic: f64, numeric: f64, loss: f64) -> f64 {
    let floor = 1e-3 * loss.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central differences on a random subset of coordinates, at a parameter
/// point whose hidden pre-activations are all at least 1e-4 from a kink.
fn check_gradient(widths: &[usize], head: Head, points: usize, coords: usize, seed: u64) {
    let mut rng = Rng::new(seed);
    let ds = 3;
    let din = widths[0];
    let dout = match head {
        Head::Deterministic => ds,
        Head::Probabilistic => 2 * ds,
    };
    let mut layer = widths.to_vec();
    layer.push(dout);
    let batch = 2;
    let h = 1e-6;
    for point in 0..points {
        let mut net = Mlp::new(layer.clone(), Activation::Relu, &mut rng).unwrap();
        for p in &mut net.params {
            *p += rng.normal(0.0, 0.05);
        }
        let inputs = loop {
            let x: Vec<f64> = (0..batch * din).map(|_| rng.normal(0.0, 1.0)).collect();
            let clear = x
                .chunks(din)
                .all(|row| net.min_abs_preactivation(row) > 1e-4);
            if clear {
                break x;
            }
        };
        let targets: Vec<f64> = (0..batch * ds).map(|_| rng.normal(0.0, 1.0)).collect();
        let mut grads = vec![0.0; net.num_params()];
        let loss = batch_loss_and_grad(&net, head, &inputs, &targets, batch, &mut grads);
        let mut scratch = vec![0.0; net.num_params()];
        let mut worst = 0.0f64;
        for _ in 0..coords {
            let k = (rng.next_u64() % net.num_params() as u64) as usize;
            let orig = net.params[k];
            net.params[k] = orig + h;
            let up = batch_loss_and_grad(&net, head, &inputs, &targets, batch, &mut scratch);
            net.params[k] = orig - h;
            let down = batch_loss_and_grad(&net, head, &inputs, &targets, batch, &mut scratch);
            net.params[k] = orig;
            worst = worst.max(relative_error(grads[k], (up - down) / (2.0 * h), loss));
        }
        assert!(
            worst < 1e-5,
            "widths {widths:?} head {head:?} point {point}: relative error {worst:e}"
        );
    }
}

#[test]
fn gradients_match_finite_differences_small() {
    for head in [Head::Deterministic, Head::Probabilistic] {
        check_gradient(&[4, 32, 32], head, 10, 60, 1);
    }
}

#[test]
fn gradients_match_finite_differences_default_width() {
    for head in [Head::Deterministic, Head::Probabilistic] {
        check_gradient(&[4, 256, 256], head, 10, 40, 2);
    }
}

#[test]
fn gradients_match_finite_differences_wide_deep() {
    for head in [Head::Deterministic, Head::Probabilistic] {
        check_gradient(&[4, 512, 512, 512], head, 10, 20, 3);
    }
}

#[test]
fn deterministic_learns_noise_free_linear_system() {
    let mut rng = Rng::new(5);
    let train = linear_system_data(100, 50, &mut rng);
    let test = linear_system_data(20, 50, &mut rng);
    let cfg = TrainConfig::deterministic().with_seed(9);
    let model = train_deterministic(&train, &cfg).unwrap();
    let pred = model.predict_batch(&test.states, &test.actions).unwrap();
    // one-step error in normalised target units
    let mut se = 0.0;
    for i in 0..test.len() {
        let truth = model.normalizer.normalize_target(&test.target(i, Formulation::Delta));
        let delta: Vec<f64> = pred.row(i).iter().zip(test.states.row(i)).map(|(p, s)| p - s).collect();
        let est = model.normalizer.normalize_target(&delta);
        se += truth.iter().zip(&est).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 3.0;
    }
    let mse = se / test.len() as f64;
    assert!(mse < 1e-3, "normalised one-step mse {mse}");
}

#[test]
fn training_loss_decreases_and_is_deterministic() {
    let mut rng = Rng::new(6);
    let data = random_dataset(800, 3, 1, &mut rng);
    let cfg = TrainConfig {
        epochs: 20,
        ..small_config(3)
    };
    let a = train_network(&data, &cfg, Head::Deterministic).unwrap();
    let b = train_network(&data, &cfg, Head::Deterministic).unwrap();
    assert!(a.epoch_losses[19] < a.epoch_losses[0], "{:?}", a.epoch_losses);
    assert_eq!(a.net.params, b.net.params);
    let p = train_network(&data, &cfg, Head::Probabilistic).unwrap();
    assert!(p.epoch_losses[19] < p.epoch_losses[0], "{:?}", p.epoch_losses);
}

#[test]
fn different_seeds_differ() {
    let mut rng = Rng::new(7);
    let data = random_dataset(200, 2, 1, &mut rng);
    let a = train_network(&data, &small_config(1), Head::Deterministic).unwrap();
    let b = train_network(&data, &small_config(2), Head::Deterministic).unwrap();
    assert_ne!(a.net.params, b.net.params);
}

#[test]
fn exact_targets_push_log_variance_down() {
    let mut rng = Rng::new(8);
    let data = linear_system_data(40, 25, &mut rng);
    let mean_log_var = |epochs: usize| {
        let cfg = TrainConfig {
            hidden: vec![64, 64],
            epochs,
            learning_rate: 1e-3,
            ..TrainConfig::probabilistic().with_seed(4)
        };
        let model = train_probabilistic(&data, &cfg).unwrap();
        let mut total = 0.0;
        for i in 0..50 {
            let g = model
                .predict_distribution(data.states.row(i), data.actions.row(i))
                .unwrap();
            total += g.log_var.iter().sum::<f64>() / 3.0;
        }
        total / 50.0
    };
    let (early, late) = (mean_log_var(5), mean_log_var(30));
    assert!(late < early, "{early} -> {late}");
    assert!(late < -4.0 && late >= LOG_VAR_MIN, "mean log variance {late}");
}

#[test]
fn variance_head_recovers_fixed_residual() {
    // targets are +-r independent of the inputs: optimum mean 0, variance r^2
    let r = 0.5;
    let mut rng = Rng::new(9);
    let n = 2000;
    let mut s = Matrix::zeros(n, 2);
    let mut a = Matrix::zeros(n, 1);
    let mut sn = Matrix::zeros(n, 2);
    for i in 0..n {
        for j in 0..2 {
            s[(i, j)] = rng.normal(0.0, 1.0);
            let sign = if rng.uniform(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
            sn[(i, j)] = sign * r;
        }
        a[(i, 0)] = rng.uniform(-1.0, 1.0);
    }
    let data = Dataset::new(s, a, sn).unwrap();
    let cfg = TrainConfig {
        hidden: vec![32, 32],
        epochs: 30,
        learning_rate: 1e-3,
        normalization_enabled: false,
        formulation: Formulation::TrueState,
        ..TrainConfig::probabilistic().with_seed(5)
    };
    let model = train_probabilistic(&data, &cfg).unwrap();
    let mut var = 0.0;
    for i in 0..200 {
        let g = model.predict_distribution(data.states.row(i), data.actions.row(i)).unwrap();
        var += g.log_var.iter().map(|lv| lv.exp()).sum::<f64>() / 2.0;
    }
    var /= 200.0;
    assert!((var - r * r).abs() < 0.2 * r * r, "variance {var} vs {}", r * r);
}

#[test]
fn ensemble_member_matches_standalone() {
    let mut rng = Rng::new(10);
    let data = random_dataset(300, 2, 1, &mut rng);
    let cfg = TrainConfig {
        ensemble_size: 3,
        ..small_config(77)
    };
    let ens = train_ensemble(&data, &cfg, Head::Deterministic).unwrap();
    let members = ens.members().unwrap();
    for k in 0..3 {
        let solo = train_deterministic(&data, &cfg.clone().with_seed(member_seed(77, k))).unwrap();
        assert_eq!(members[k], solo);
    }
}

#[test]
fn ensemble_mean_matches_member_loop() {
    let mut rng = Rng::new(11);
    let data = random_dataset(300, 3, 2, &mut rng);
    let cfg = TrainConfig {
        ensemble_size: 5,
        ..small_config(12)
    };
    let ens = train_ensemble(&data, &cfg, Head::Deterministic).unwrap();
    for i in 0..20 {
        let (s, a) = (data.states.row(i), data.actions.row(i));
        let got = ens.predict(s, a).unwrap();
        let mut brute = vec![0.0; 3];
        for m in ens.members().unwrap() {
            for (acc, v) in brute.iter_mut().zip(m.predict(s, a).unwrap()) {
                *acc += v / 5.0;
            }
        }
        for (x, y) in got.iter().zip(&brute) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    let single = train_deterministic(&data, &cfg).unwrap();
    let same = DynamicsModel::ensemble(vec![single.clone(); 5]).unwrap();
    for i in 0..20 {
        let (s, a) = (data.states.row(i), data.actions.row(i));
        assert_eq!(same.predict(s, a).unwrap(), single.predict(s, a).unwrap());
    }
}

#[test]
fn zero_model_predicts_zero_vector() {
    for dim in [3, 9, 81] {
        let m = DynamicsModel::zero(dim, 1);
        let s: Vec<f64> = (0..dim).map(|i| i as f64 - 4.0).collect();
        assert_eq!(m.predict(&s, &[0.3]).unwrap(), vec![0.0; dim]);
        let p = DynamicsModel::persistence(dim, 1);
        assert_eq!(p.predict(&s, &[0.3]).unwrap(), s);
    }
}

#[test]
fn non_finite_input_is_rejected() {
    let m = DynamicsModel::zero(2, 1);
    assert!(m.predict(&[f64::NAN, 0.0], &[0.0]).is_err());
    assert!(m.predict(&[0.0, 0.0, 0.0], &[0.0]).is_err());
}

#[test]
fn zero_output_network_semantics() {
    let mut rng = Rng::new(13);
    let data = random_dataset(100, 3, 1, &mut rng);
    let cfg = TrainConfig {
        epochs: 1,
        normalization_enabled: false,
        ..small_config(1)
    };
    let mut delta = train_deterministic(&data, &cfg).unwrap();
    if let ModelVariant::Deterministic(net) = &mut delta.variant {
        net.params.iter_mut().for_each(|p| *p = 0.0);
    }
    let s = [0.4, -1.2, 2.0];
    assert_eq!(delta.predict(&s, &[0.5]).unwrap(), s.to_vec());

    let cfg = TrainConfig {
        formulation: Formulation::TrueState,
        ..small_config(1)
    };
    let mut abs = train_deterministic(&data, &cfg).unwrap();
    if let ModelVariant::Deterministic(net) = &mut abs.variant {
        net.params.iter_mut().for_each(|p| *p = 0.0);
    }
    let norm = fit_normalizer(&data, Formulation::TrueState).unwrap();
    assert_eq!(abs.predict(&s, &[0.5]).unwrap(), norm.target_mean);
}

#[test]
fn normalisation_is_identity_on_normalised_data() {
    let mut rng = Rng::new(14);
    let n = 400;
    let raw = random_dataset(n, 3, 1, &mut rng);
    let standardize = |m: &Matrix| {
        let mut out = m.clone();
        for j in 0..m.cols() {
            let col = m.col_vec(j);
            let mu = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64).sqrt();
            for i in 0..n {
                out[(i, j)] = (m[(i, j)] - mu) / sd;
            }
        }
        out
    };
    let s = standardize(&raw.states);
    let delta = standardize(&raw.targets(Formulation::Delta));
    let next = s.add(&delta).unwrap();
    let col = raw.actions.col_vec(0);
    let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    let mut a = raw.actions.clone();
    for i in 0..n {
        a[(i, 0)] = 2.0 * (col[i] - lo) / (hi - lo) - 1.0;
    }
    let data = Dataset::new(s, a, next).unwrap();

    let on = TrainConfig {
        epochs: 6,
        ..small_config(21)
    };
    let off = TrainConfig {
        normalization_enabled: false,
        ..on.clone()
    };
    let with = train_network(&data, &on, Head::Deterministic).unwrap();
    let without = train_network(&data, &off, Head::Deterministic).unwrap();
    for (x, y) in with.epoch_losses.iter().zip(&without.epoch_losses) {
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
    }
    let (ein, etg) = encode_dataset(&data, &with.normalizer, Formulation::Delta);
    let (rin, rtg) = encode_dataset(&data, &without.normalizer, Formulation::Delta);
    assert!(ein.iter().zip(&rin).all(|(x, y)| (x - y).abs() < 1e-12));
    assert!(etg.iter().zip(&rtg).all(|(x, y)| (x - y).abs() < 1e-12));
}

#[test]
fn save_load_reproduces_predictions_exactly() {
    let mut rng = Rng::new(15);
    let data = random_dataset(200, 3, 1, &mut rng);
    let cfg = TrainConfig {
        ensemble_size: 2,
        ..small_config(4)
    };
    for kind in [ModelKind::Zero, ModelKind::Linear, ModelKind::D, ModelKind::PS, ModelKind::PE] {
        let model = kind.fit(&data, &TrainConfig { formulation: kind.formulation(), ..cfg.clone() }).unwrap();
        let mut buf = Vec::new();
        model.save(&mut buf).unwrap();
        let back = DynamicsModel::load(buf.as_slice()).unwrap();
        assert_eq!(back, model, "{kind}");
        let p1 = model.predict_batch(&data.states, &data.actions).unwrap();
        let p2 = back.predict_batch(&data.states, &data.actions).unwrap();
        assert_eq!(p1.as_slice(), p2.as_slice());
    }
    assert!(DynamicsModel::load(&b"{\"format\":\"other\",\"version\":1}"[..]).is_err());
}

#[test]
fn model_kind_names_round_trip() {
    for kind in ModelKind::ALL {
        assert_eq!(kind.label().parse::<ModelKind>().unwrap(), kind);
    }
    assert_eq!("pe-s".parse::<ModelKind>().unwrap(), ModelKind::PES);
    assert!("bogus".parse::<ModelKind>().is_err());
    assert_eq!(ModelKind::DS.formulation(), Formulation::TrueState);
    assert_eq!(ModelKind::PE.formulation(), Formulation::Delta);
}
