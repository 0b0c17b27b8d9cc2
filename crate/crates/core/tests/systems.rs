use compound_core::experiments::snr_study;
use compound_core::numerics::Matrix;
use compound_core::systems::{
    generate_dataset, generate_lorenz_dataset, lqr_gains, transient_decay_steps, Cartpole, DatasetSpec, Dynamics,
    LinearSystem, LorenzParams, StateSpaceSpec, BASE_NOISE, REGULARIZED_NORM,
};
use compound_core::Rng;
use proptest::prelude::*;

fn power(m: &Matrix, k: usize) -> Matrix {
    let mut out = Matrix::identity(m.rows());
    for _ in 0..k {
        out = out.matmul(m).unwrap();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_systems_keep_their_structure(
        pole in -1.5f64..1.5,
        dim in 1usize..30,
        regularized: bool,
        zero_inputs: bool,
        seed: u64,
    ) {
        let sys = LinearSystem::sample(pole, dim, 1.0, regularized, zero_inputs, &mut Rng::new(seed)).unwrap();
        for i in 0..dim {
            prop_assert_eq!(sys.a[(i, i)], pole);
            for j in 0..i {
                prop_assert_eq!(sys.a[(i, j)], 0.0);
            }
            for j in i + 1..dim {
                prop_assert!(sys.a[(i, j)].abs() <= 1.0);
            }
            prop_assert!(sys.b[(i, 0)].abs() <= 1.0);
            if zero_inputs {
                prop_assert_eq!(sys.b[(i, 0)], 0.0);
            }
        }
        if regularized && pole.abs() <= REGULARIZED_NORM {
            prop_assert!(sys.a.infinity_norm() <= REGULARIZED_NORM + 1e-12);
        }
    }

    #[test]
    fn noise_stays_inside_its_band(mult in 0.0f64..100.0, seed: u64) {
        let sys = LinearSystem::sample(0.5, 4, mult, false, false, &mut Rng::new(seed)).unwrap();
        let mut rng = Rng::new(seed ^ 1);
        let s = [0.3, -0.2, 1.0, 0.0];
        let mean = sys.mean_step(&s, &[0.5]).unwrap();
        for _ in 0..20 {
            let next = sys.step(&s, &[0.5], &mut rng).unwrap();
            for (x, m) in next.iter().zip(&mean) {
                prop_assert!((x - m).abs() <= BASE_NOISE * mult + 1e-15);
            }
        }
    }
}

#[test]
fn spectrum_is_the_pole() {
    // Newton's identities: tr(A^k) = d * rho^k iff every eigenvalue is rho
    let mut rng = Rng::new(4);
    for dim in [3, 9, 27] {
        let pole = 0.8;
        let sys = LinearSystem::sample(pole, dim, 1.0, true, false, &mut rng).unwrap();
        for k in 1..=dim.min(8) {
            let tr = power(&sys.a, k).trace();
            let want = dim as f64 * pole.powi(k as i32);
            assert!((tr - want).abs() < 1e-9 * want.abs().max(1.0), "dim {dim} k {k}: {tr} vs {want}");
        }
    }
}

#[test]
fn regularization_at_dim_81() {
    let mut rng = Rng::new(81);
    for pole in [0.1, 0.5, 0.95] {
        let raw = LinearSystem::sample(pole, 81, 1.0, false, false, &mut rng).unwrap();
        let reg = LinearSystem::sample(pole, 81, 1.0, true, false, &mut rng).unwrap();
        assert!(raw.a.infinity_norm() > 10.0);
        assert!(reg.a.infinity_norm() <= REGULARIZED_NORM + 1e-12);
        assert!((0..81).all(|i| reg.a[(i, i)] == pole));
    }
}

#[test]
fn lqr_closes_the_loop() {
    let cp = Cartpole::default().noise_free();
    let (a, b) = cp.linearize_upright();
    assert!(power(&a, 200).max_abs() > 1e3, "upright should be open-loop unstable");
    for (q, r) in [(0.5, 0.05), (1.0, 0.1), (5.0, 1.0)] {
        let k = lqr_gains(&cp, q, r).unwrap();
        let closed = a.sub(&b.matmul(&k).unwrap()).unwrap();
        // the cart position mode is slow at dt = 0.02, hence the long horizon
        let (m1, m2) = (power(&closed, 1000).max_abs(), power(&closed, 2000).max_abs());
        assert!(m1 < 1e-6 && m2 < 1e-3 * m1, "q {q} r {r}: {m1:e} {m2:e}");
    }
}

#[test]
fn lqr_data_stays_near_upright() {
    let trajs = generate_dataset(&DatasetSpec::cartpole_lqr(Cartpole::default(), 20, 200), 3).unwrap();
    for t in &trajs {
        assert!(!t.diverged);
        assert_eq!(t.states.len(), 201);
        assert!(t.states.iter().all(|s| s[2].abs() < 1.0), "pole angle left the basin");
    }
}

#[test]
fn snr_increases_with_step_size() {
    let rows = snr_study(&[0.1, 0.25, 0.5, 0.75, 1.0], 0.5, 400, 10, 8).unwrap();
    for w in rows.windows(2) {
        assert!(w[0].snr_mean < w[1].snr_mean, "{rows:?}");
    }
    assert!(rows.iter().all(|r| r.trajectories == 400 && r.snr_mean > 0.0));
}

#[test]
fn lorenz_stays_on_the_attractor() {
    let trajs = generate_lorenz_dataset(-10.0, 10.0, 20, 2000, &LorenzParams::default(), 5).unwrap();
    for t in &trajs {
        assert!(t.actions.iter().all(|a| a.is_empty()));
        for s in &t.states[200..] {
            assert!(s[0].abs() < 25.0 && s[1].abs() < 35.0 && (0.0..60.0).contains(&s[2]), "{s:?}");
        }
    }
}

#[test]
fn delta_labels_grow_with_the_pole() {
    let mean_delta = |pole: f64| {
        let spec = StateSpaceSpec {
            zero_inputs: true,
            ..StateSpaceSpec::new(pole, 3)
        };
        let trajs = generate_dataset(&DatasetSpec::state_space(spec, 200, 100), 6).unwrap();
        let mut sum = 0.0;
        let mut n = 0;
        for t in &trajs {
            for w in t.states.windows(2) {
                sum += w[1].iter().zip(&w[0]).map(|(b, a)| (b - a).powi(2)).sum::<f64>().sqrt();
                n += 1;
            }
        }
        sum / n as f64
    };
    // small poles are dominated by the first step away from s0, so only the
    // upper range is monotone
    let d: Vec<f64> = [0.5, 0.9, 0.95].into_iter().map(mean_delta).collect();
    assert!(d[0] < d[1] && d[1] < d[2], "{d:?}");
}

#[test]
fn decay_grows_with_the_pole() {
    let mut rng = Rng::new(12);
    let mut means = Vec::new();
    for pole in [0.1, 0.5, 0.9] {
        let mut total = 0.0;
        for _ in 0..200 {
            let sys = LinearSystem::sample(pole, 3, 0.0, false, true, &mut rng).unwrap();
            let s0: Vec<f64> = (0..3).map(|_| rng.normal(0.0, 1.0)).collect();
            total += transient_decay_steps(&sys, &s0, 1e-4).unwrap() as f64;
        }
        means.push(total / 200.0);
    }
    assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
}
