use std::hint::black_box;

use beamctl_core::controllability::gamma_norm;
use beamctl_core::dynamics::{integrate_mild, Forcing, History, Impulse, ImpulseMap, Nonlinearity, Nonlocal};
use beamctl_core::semigroup::{expm2, mode_matrix};
use beamctl_core::{ControlSignal, GramianOptions, GramianSet, ModalCoeffs, ModelParams, ProblemSpec, StateZ};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn params(modes: usize) -> ModelParams {
    ModelParams::new(1.0, 1.0, 1.0, modes, 1.0, 0.3).unwrap()
}

fn bench_expm2(c: &mut Criterion) {
    let p = params(8);
    let a = mode_matrix(8, &p).unwrap();
    c.bench_function("expm2/mode8", |b| b.iter(|| expm2(black_box(&a), black_box(0.37))));
}

fn bench_gramians(c: &mut Criterion) {
    let mut group = c.benchmark_group("gramian_set");
    for modes in [4usize, 8, 16] {
        let p = params(modes);
        group.bench_with_input(BenchmarkId::from_parameter(modes), &p, |b, p| {
            b.iter(|| GramianSet::build(p, 0.0, 1.0, GramianOptions::with_intervals(1000)).unwrap())
        });
    }
    group.finish();

    let p = params(8);
    let gs = GramianSet::build(&p, 0.0, 1.0, GramianOptions::with_intervals(1000)).unwrap();
    c.bench_function("gamma_norm/2000", |b| b.iter(|| gamma_norm(&gs, &p, 2000).unwrap()));
}

fn nonlinear_spec(steps: usize) -> ProblemSpec {
    let mut spec = ProblemSpec::linear(params(4), steps).unwrap();
    spec.impulses = vec![Impulse::new(
        0.5,
        ImpulseMap::LinearVelocity {
            gain: -0.3,
            offset: ModalCoeffs::zeros(4),
        },
    )];
    spec.nonlocal = Nonlocal {
        lags: vec![0.1, 0.2],
        gamma_w: vec![0.1, -0.05],
        gamma_y: vec![-0.1, 0.1],
    };
    spec.nonlinearity = Nonlinearity::DelayedSaturating { a: 0.5 };
    spec.forcing = Forcing::Sine {
        mode: 1,
        amplitude: 1.0,
        omega: 2.0,
    };
    spec.constants = spec.catalog_constants();
    spec.history = History::Constant(StateZ::mode(4, 1, 0.01, 0.5));
    spec
}

fn bench_integrate(c: &mut Criterion) {
    let mut group = c.benchmark_group("integrate_mild");
    group.sample_size(20);
    for steps in [1000usize, 4000] {
        let spec = nonlinear_spec(steps);
        let u = ControlSignal::zeros(0.0, spec.step(), steps, 4).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(steps), &spec, |b, spec| {
            b.iter(|| integrate_mild(spec, &u).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_expm2, bench_gramians, bench_integrate);
criterion_main!(benches);
