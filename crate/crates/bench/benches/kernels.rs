use std::hint::black_box;

use compound_core::models::{batch_loss_and_grad, Activation, Head, Mlp};
use compound_core::systems::{generate_dataset, lorenz_step, DatasetSpec, LorenzParams, StateSpaceSpec};
use compound_core::{rollout_logged, solve_least_squares, train_deterministic, Dataset, Matrix, Rng, TrainConfig};
use criterion::{criterion_group, criterion_main, Criterion};

fn mlp(c: &mut Criterion) {
    let mut rng = Rng::new(1);
    let net = Mlp::new(vec![4, 256, 256, 3], Activation::Relu, &mut rng).unwrap();
    let batch = 32;
    let inputs: Vec<f64> = (0..4 * batch).map(|_| rng.normal(0.0, 1.0)).collect();
    let targets: Vec<f64> = (0..3 * batch).map(|_| rng.normal(0.0, 1.0)).collect();
    let mut grads = vec![0.0; net.num_params()];

    c.bench_function("mlp forward 256x2 batch 32", |b| {
        b.iter(|| black_box(net.forward_batch(black_box(&inputs), batch)))
    });
    c.bench_function("mlp forward+backward 256x2 batch 32", |b| {
        b.iter(|| batch_loss_and_grad(&net, Head::Deterministic, black_box(&inputs), &targets, batch, &mut grads))
    });
}

fn lstsq(c: &mut Criterion) {
    let mut rng = Rng::new(2);
    let x = Matrix::from_rows(&(0..1000).map(|_| (0..28).map(|_| rng.normal(0.0, 1.0)).collect()).collect::<Vec<Vec<f64>>>()).unwrap();
    let y = Matrix::from_rows(&(0..1000).map(|_| (0..27).map(|_| rng.normal(0.0, 1.0)).collect()).collect::<Vec<Vec<f64>>>()).unwrap();
    c.bench_function("lstsq 1000x28", |b| b.iter(|| solve_least_squares(black_box(&x), black_box(&y)).unwrap()));
}

fn rollout(c: &mut Criterion) {
    let trajs = generate_dataset(&DatasetSpec::state_space(StateSpaceSpec::new(0.5, 3), 5, 100), 3).unwrap();
    let data = Dataset::from_trajectories(&trajs).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::deterministic()
    };
    let model = train_deterministic(&data, &cfg).unwrap();
    let tr = &trajs[0];
    c.bench_function("rollout D 256x2 100 steps", |b| {
        b.iter(|| rollout_logged(&model, &tr.states[0], &tr.actions, 100).unwrap())
    });
}

fn lorenz(c: &mut Criterion) {
    let p = LorenzParams::default();
    c.bench_function("lorenz rk4 1000 steps", |b| {
        b.iter(|| {
            let mut s = black_box([1.0, 1.0, 1.0]);
            for _ in 0..1000 {
                s = lorenz_step(s, &p);
            }
            s
        })
    });
}

criterion_group!(benches, mlp, lstsq, rollout, lorenz);
criterion_main!(benches);
