use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crbo::acquisition::{propose, AcquisitionConfig};
use crbo::benchmarks::{GpSampleConfig, GpSampleObjective};
use crbo::par::Execution;
use crbo::region::ConfidenceRegion;
use crbo::sampler::{sample_region, SamplerConfig};
use crbo::{BoxBounds, Dataset, GpHyperparams, GpModel, KernelSpec};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn model(dim: usize, n: usize) -> GpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect())
        .collect();
    let ys = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let data = Dataset::from_parts(dim, pts, ys).unwrap();
    GpModel::fit(
        &data,
        GpHyperparams::new(KernelSpec::matern52(1.0, 0.3).unwrap(), 1e-4).unwrap(),
    )
    .unwrap()
}

fn bench_sampler(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_region");
    group.sample_size(20);
    let bounds = BoxBounds::cube(5, 1.0).unwrap();
    let m = model(5, 40);
    let region = ConfidenceRegion::new(0.6, &m, &bounds).unwrap();
    let cfg = SamplerConfig::default();
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sample_region(black_box(&region), &cfg, 7, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_propose(c: &mut Criterion) {
    let mut group = c.benchmark_group("propose");
    group.sample_size(20);
    let bounds = BoxBounds::cube(5, 1.0).unwrap();
    let m = model(5, 40);
    let region = ConfidenceRegion::new(0.6, &m, &bounds).unwrap();
    let pool = sample_region(&region, &SamplerConfig::default(), 7, Execution::Parallel).unwrap();
    let cfg = AcquisitionConfig::default();
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| propose(&region, black_box(&pool.samples), &cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_optimum_search(c: &mut Criterion) {
    let mut group = c.benchmark_group("optimum_search");
    group.sample_size(10);
    let obj = GpSampleObjective::new(
        2,
        3,
        GpSampleConfig {
            optimum_starts: 200,
            ..Default::default()
        },
    )
    .unwrap();
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| obj.clone().search_optimum(exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sampler, bench_propose, bench_optimum_search);
criterion_main!(benches);
