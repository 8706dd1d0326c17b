use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use modhilbert_core::operators::{hilbert_maximal, t_star};
use modhilbert_core::signal::{convolve_with, ConvolveConfig};
use modhilbert_core::sparse::{build_sparse_collection, random_pair};
use modhilbert_core::{
    AdmissiblePhase, CoeffSequence, Complex64, DyadicInterval, FiniteSignal, Interval, SparseConfig, TruncationFamily,
};

fn t32() -> CoeffSequence {
    CoeffSequence::modulated(AdmissiblePhase::monomial(1.5).unwrap())
}

fn wave(len: usize) -> FiniteSignal {
    FiniteSignal::from_fn(Interval::new(0, len as i64), |x| {
        let t = x as f64;
        Complex64::new((0.37 * t).sin(), (0.011 * t * t).cos())
    })
}

fn convolution(c: &mut Criterion) {
    let mut group = c.benchmark_group("convolve");
    for len in [64usize, 256, 1024, 4096] {
        let f = wave(len);
        let direct = ConvolveConfig { fft_threshold: usize::MAX };
        let fft = ConvolveConfig { fft_threshold: 0 };
        group.bench_with_input(BenchmarkId::new("direct", len), &len, |b, _| {
            b.iter(|| convolve_with(black_box(&f), black_box(&f), &direct))
        });
        group.bench_with_input(BenchmarkId::new("fft", len), &len, |b, _| {
            b.iter(|| convolve_with(black_box(&f), black_box(&f), &fft))
        });
    }
    group.finish();
}

fn maximal(c: &mut Criterion) {
    let a = t32();
    let mut group = c.benchmark_group("hilbert_maximal");
    for len in [256usize, 1024, 4096] {
        let f = wave(len);
        let window = Interval::new(0, 2 * len as i64);
        group.bench_with_input(BenchmarkId::from_parameter(len), &len, |b, _| {
            b.iter(|| hilbert_maximal(&a, black_box(&f), window))
        });
    }
    group.finish();
}

fn truncations(c: &mut Criterion) {
    let a = t32();
    let mut group = c.benchmark_group("t_star");
    for level in [8u32, 10, 12] {
        let i0 = DyadicInterval::new(level, 0, 0).unwrap();
        let family = TruncationFamily::all_within(&i0).unwrap();
        let f = wave(i0.len());
        group.bench_with_input(BenchmarkId::from_parameter(level), &level, |b, _| {
            b.iter(|| t_star(&family, &a, black_box(&f)).unwrap())
        });
    }
    group.finish();
}

fn sparse_build(c: &mut Criterion) {
    let a = t32();
    let mut group = c.benchmark_group("sparse_build");
    group.sample_size(20);
    for level in [8u32, 10, 12] {
        let i0 = DyadicInterval::new(level, 0, 0).unwrap();
        let (f, g) = random_pair(7, &i0);
        group.bench_with_input(BenchmarkId::from_parameter(level), &level, |b, _| {
            b.iter(|| build_sparse_collection(&a, &f, &g, i0, 1.5, &SparseConfig::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, convolution, maximal, truncations, sparse_build);
criterion_main!(benches);
