//! Benchmarks for the per-step hot paths: residual jets, per-sample
//! gradient assembly, optimizer updates, the finite-difference solvers
//! and the deterministic reduction kernel.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use pinn_core::autodiff::{interior_residuals, GradientVector};
use pinn_core::model::{self, ModelSpec};
use pinn_core::optim::{
    assemble_per_sample_gradients, AdamState, AssembleConfig, GradientSource, Hyper,
    PdeAwareState, PerSampleForm,
};
use pinn_core::pde::{sample_collocation, total_loss, PdeSpec};
use pinn_core::reduce::pairwise_dot;
use pinn_core::refsolve::{self, Grid};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 7;

fn bench_residual_jets(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let net = ModelSpec::desk_scale();
    let params = model::init_params_rng(&net, &mut rng);
    let mut group = c.benchmark_group("residual-jets");
    for spec in [
        PdeSpec::burgers_default(),
        PdeSpec::allen_cahn_default(),
        PdeSpec::kdv_default(),
    ] {
        let colloc = sample_collocation(&spec, 64, 8, 8, SEED).unwrap();
        group.bench_function(spec.kind.name(), |b| {
            b.iter(|| interior_residuals(&spec, &params, black_box(&colloc.interior)).unwrap())
        });
    }
    group.finish();
}

fn bench_per_sample_grads(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let net = ModelSpec::desk_scale();
    let params = model::init_params_rng(&net, &mut rng);
    let spec = PdeSpec::burgers_default();
    let colloc = sample_collocation(&spec, 64, 32, 32, SEED).unwrap();
    let cfg = AssembleConfig {
        gradient_source: GradientSource::TotalLoss,
        per_sample_form: PerSampleForm::SquaredResidual,
    };
    c.bench_function("per-sample-grads/burgers-b64", |b| {
        b.iter(|| {
            assemble_per_sample_gradients(
                &spec,
                &params,
                black_box(&colloc.interior),
                &colloc,
                cfg,
            )
            .unwrap()
        })
    });
    c.bench_function("total-loss/burgers-128pts", |b| {
        b.iter(|| total_loss(&spec, &params, black_box(&colloc)).unwrap())
    });
}

fn bench_optimizer_steps(c: &mut Criterion) {
    let dim = ModelSpec::desk_scale().param_count();
    let noise: Vec<Vec<f64>> = (0..32)
        .map(|s| (0..dim).map(|j| ((s * dim + j) as f64 * 0.37).sin()).collect())
        .collect();
    let psg = pinn_core::optim::PerSampleGradients::new(noise.clone(), Some(noise[0].clone()))
        .unwrap();
    c.bench_function("optimizer-step/pde-aware-b32", |b| {
        let mut st = PdeAwareState::new(
            dim,
            Hyper::pde_aware_default(),
            GradientSource::TotalLoss,
            PerSampleForm::SquaredResidual,
        )
        .unwrap();
        b.iter(|| st.step(black_box(&psg)).unwrap())
    });
    let grad = GradientVector::new(noise[0].clone()).unwrap();
    c.bench_function("optimizer-step/adam", |b| {
        let mut st = AdamState::new(dim, Hyper::adam_default()).unwrap();
        b.iter(|| st.step(black_box(&grad)).unwrap())
    });
}

fn bench_solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("fdm-solve-128");
    group.sample_size(10);
    for spec in [
        PdeSpec::burgers_default(),
        PdeSpec::allen_cahn_default(),
        PdeSpec::kdv_default(),
    ] {
        group.bench_function(spec.kind.name(), |b| {
            b.iter(|| {
                let grid = Grid::square(128, spec.domain).unwrap();
                refsolve::solve(black_box(&spec), &grid).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_reduction(c: &mut Criterion) {
    let xs: Vec<f64> = (0..16_384).map(|i| (i as f64).sin()).collect();
    c.bench_function("pairwise-dot/16384", |b| {
        b.iter(|| pairwise_dot(black_box(&xs), black_box(&xs)))
    });
}

criterion_group!(
    benches,
    bench_residual_jets,
    bench_per_sample_grads,
    bench_optimizer_steps,
    bench_solvers,
    bench_reduction
);
criterion_main!(benches);
