use criterion::{black_box, criterion_group, criterion_main, Criterion};
use phaselat_bench::fixture;
use phaselat_core::bloch::BlochOperator;
use phaselat_core::evolve::{integrate, make_perturbation, IntegrateOptions, PerturbationKind, PerturbationParams};
use phaselat_core::fourierbloch::{FourierBloch, Propagator};
use phaselat_core::normalform::{decompose, random_state, reconstruct};
use rand::rngs::StdRng;
use rand::SeedableRng;

fn kernels(c: &mut Criterion) {
    let (p, b, ctx) = fixture(24);

    let op = BlochOperator::new(&p, 24).unwrap();
    c.bench_function("bloch_eig_m24", |bench| bench.iter(|| op.eig(black_box(0.1)).unwrap()));

    let fb = FourierBloch::new(&p, &b.u_ad, 24).unwrap();
    c.bench_function("fourier_bloch_assemble", |bench| bench.iter(|| fb.assemble(black_box(0.1)).unwrap()));
    let prop = Propagator::new(&fb.assemble(0.1).unwrap()).unwrap();
    c.bench_function("propagator_sample", |bench| bench.iter(|| prop.sample(black_box(100.0)).unwrap()));

    let mut rng = StdRng::seed_from_u64(1);
    let s = random_state(&ctx, 8, 0.05, &mut rng);
    let v = reconstruct(&ctx, &s).unwrap();
    c.bench_function("reconstruct_j8", |bench| bench.iter(|| reconstruct(&ctx, black_box(&s)).unwrap()));
    c.bench_function("decompose_j8", |bench| bench.iter(|| decompose(&ctx, black_box(&v)).unwrap()));

    let v0 = make_perturbation(PerturbationKind::GaussianBump, &PerturbationParams::default(), &ctx.pattern, 16, 64, 0).unwrap();
    let opts = IntegrateOptions { t_end: 1.0, linearized: false, ..IntegrateOptions::default() };
    c.bench_function("etdrk4_100_steps_j16", |bench| bench.iter(|| integrate(&ctx.pattern, black_box(&v0), &opts).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = kernels
}
criterion_main!(benches);
