use criterion::{Criterion, criterion_group, criterion_main};
use std::hint::black_box;

use mpq_core::blending::{
    HorizonEstimates, blended_q_recursive, blended_q_telescoped_costs, blended_q_weighted,
};
use mpq_core::cartpole::CartpoleEnv;
use mpq_core::mppi::{ControlPlan, MppiConfig, ZeroValue, plan_action};
use mpq_core::qnet::{AdamState, QNetwork, adam_step};
use mpq_core::seeding::{Stream, stream_rng};
use rand::RngExt;

fn estimator_forms(c: &mut Criterion) {
    let mut rng = stream_rng(1, Stream::Scratch, 0);
    let h = 64;
    let costs: Vec<f64> = (0..h).map(|_| rng.random_range(-1.0..1.0)).collect();
    let q_hat: Vec<f64> = (0..=h).map(|_| rng.random_range(-5.0..5.0)).collect();

    let mut group = c.benchmark_group("blended_estimator_h64");
    group.bench_function("telescoped", |b| {
        b.iter(|| blended_q_telescoped_costs(black_box(&costs), black_box(&q_hat), 0.8, 0.99))
    });
    group.bench_function("recursive", |b| {
        b.iter(|| blended_q_recursive(black_box(&costs), black_box(&q_hat), 0.8, 0.99))
    });
    group.bench_function("weighted_with_partial_returns", |b| {
        b.iter(|| {
            let est =
                HorizonEstimates::from_partial_returns(black_box(&costs), black_box(&q_hat), 0.99)
                    .unwrap();
            blended_q_weighted(&est, 0.8)
        })
    });
    group.finish();
}

fn planner_step(c: &mut Criterion) {
    let env = CartpoleEnv::default();
    let cfg = MppiConfig::default();
    let state = [0.0, std::f64::consts::PI, 0.0, 0.0];

    let mut group = c.benchmark_group("plan_action");
    group.sample_size(20);
    group.bench_function("cartpole_h32_p60_zero_value", |b| {
        b.iter(|| {
            let blend = cfg.blend(1.0).unwrap();
            let mut rng = stream_rng(2, Stream::Scratch, 0);
            plan_action(
                black_box(&state),
                ControlPlan::zeros(cfg.horizon, 1),
                &env,
                &ZeroValue,
                &cfg,
                &blend,
                &mut rng,
            )
            .unwrap()
        })
    });
    let qnet = QNetwork::new(4, 1, &[100, 100], &mut stream_rng(3, Stream::Scratch, 0));
    group.bench_function("cartpole_h32_p60_qnet_blend", |b| {
        b.iter(|| {
            let blend = cfg.blend(0.8).unwrap();
            let mut rng = stream_rng(2, Stream::Scratch, 0);
            plan_action(
                black_box(&state),
                ControlPlan::zeros(cfg.horizon, 1),
                &env,
                &qnet,
                &cfg,
                &blend,
                &mut rng,
            )
            .unwrap()
        })
    });
    group.finish();
}

fn qnet_ops(c: &mut Criterion) {
    let mut rng = stream_rng(4, Stream::Scratch, 0);
    let net = QNetwork::new(4, 1, &[100, 100], &mut rng);
    let obs = [0.1, -0.4, 0.2, 0.9];
    let action = [0.3];
    let batch: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..64)
        .map(|_| {
            let o: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = vec![rng.random_range(-1.0..1.0)];
            let y: f64 = rng.random_range(0.0..100.0);
            (o, a, y)
        })
        .collect();

    let mut group = c.benchmark_group("qnet");
    group.bench_function("forward_single", |b| {
        b.iter(|| net.forward(black_box(&obs), black_box(&action)))
    });
    group.bench_function("loss_and_grad_batch64", |b| {
        b.iter(|| net.loss_and_grad(black_box(&batch)))
    });
    group.bench_function("adam_step", |b| {
        let (_, grads) = net.loss_and_grad(&batch).unwrap();
        b.iter_batched(
            || (net.clone(), AdamState::new(&net, 1e-3)),
            |(mut n, mut a)| adam_step(&mut n, &mut a, black_box(&grads)),
            criterion::BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, estimator_forms, planner_step, qnet_ops);
criterion_main!(benches);
