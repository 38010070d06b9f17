//! Throughput of the data-parallel kernels against the sequential
//! fallback, plus end-to-end model paths under the compiled default.
//!
//! The two execution modes are bit-identical by construction; these
//! benches quantify the speedup only.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use disentune::autodiff::Tape;
use disentune::diffusion::{Condition, Denoiser, DenoiserConfig, NoiseSchedule, ScheduleKind};
use disentune::exec::Exec;
use disentune::kernels;
use disentune::rng::{normal_tensor, rng_from_seed};

fn conv_benches(c: &mut Criterion) {
    let mut rng = rng_from_seed(1);
    let (ci, h, w, co) = (16usize, 32usize, 32usize, 16usize);
    let x = normal_tensor::<f32>(&mut rng, vec![ci, h, w], 1.0);
    let weight = normal_tensor::<f32>(&mut rng, vec![co, ci, 3, 3], 0.05);
    let bias = normal_tensor::<f32>(&mut rng, vec![co], 0.1);

    let mut group = c.benchmark_group("conv2d_16x32x32");
    for exec in [Exec::Seq, Exec::Par] {
        group.bench_with_input(BenchmarkId::new("forward", format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| {
                kernels::conv2d_exec(
                    exec,
                    x.data(),
                    weight.data(),
                    Some(bias.data()),
                    ci,
                    h,
                    w,
                    co,
                    1,
                )
            })
        });
    }
    group.finish();
}

fn matmul_benches(c: &mut Criterion) {
    let mut rng = rng_from_seed(2);
    let (m, k, n) = (256usize, 128usize, 128usize);
    let a = normal_tensor::<f32>(&mut rng, vec![m, k], 1.0);
    let b = normal_tensor::<f32>(&mut rng, vec![k, n], 1.0);

    let mut group = c.benchmark_group("matmul_256x128x128");
    for exec in [Exec::Seq, Exec::Par] {
        group.bench_with_input(BenchmarkId::new("product", format!("{exec:?}")), &exec, |bch, &exec| {
            bch.iter(|| kernels::matmul_exec(exec, a.data(), b.data(), m, k, n))
        });
    }
    group.finish();
}

fn denoiser_benches(c: &mut Criterion) {
    let cfg = DenoiserConfig::default();
    let model = Denoiser::<f32>::init(cfg.clone(), 3).unwrap();
    let sched = NoiseSchedule::<f32>::make(100, ScheduleKind::Cosine).unwrap();
    let mut rng = rng_from_seed(4);
    let z = normal_tensor::<f32>(&mut rng, vec![3, 32, 32], 1.0);
    let cond =
        Condition::new(normal_tensor::<f32>(&mut rng, vec![cfg.cond_len, cfg.cond_dim], 1.0))
            .unwrap();
    let coeffs = (sched.alpha(50).unwrap(), sched.sigma(50).unwrap());

    c.bench_function("denoiser_forward_default_mode", |b| {
        b.iter(|| {
            let mut tape = Tape::<f32>::no_grad();
            let staged = model.stage(&mut tape).unwrap();
            let zv = tape.constant(z.clone()).unwrap();
            let cv = tape.constant(cond.tokens.clone()).unwrap();
            model.predict_noise(&mut tape, &staged, None, zv, 50, coeffs, cv).unwrap()
        })
    });

    c.bench_function("denoiser_forward_backward_default_mode", |b| {
        b.iter(|| {
            let mut tape = Tape::<f32>::new();
            let staged = model.stage(&mut tape).unwrap();
            let zv = tape.constant(z.clone()).unwrap();
            let cv = tape.constant(cond.tokens.clone()).unwrap();
            let eps_hat =
                model.predict_noise(&mut tape, &staged, None, zv, 50, coeffs, cv).unwrap();
            let target = tape.constant(z.clone()).unwrap();
            let loss = tape.mse(eps_hat, target).unwrap();
            tape.backward(loss).unwrap();
        })
    });
}

criterion_group!(benches, conv_benches, matmul_benches, denoiser_benches);
criterion_main!(benches);
