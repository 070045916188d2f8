//! One worker versus the full pool on the data-parallel kernels. Built
//! without the `parallel` feature, both variants run the sequential path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mislabel_core::dataio::{SyntheticData, SyntheticGenerator, SyntheticSpec};
use mislabel_core::detectors::knn::{detect_knn, KnnConfig};
use mislabel_core::par::{current_threads, with_thread_limit};
use mislabel_core::probe::cross_val_proba;
use mislabel_core::TrainConfig;

fn data(n: usize) -> SyntheticData {
    SyntheticGenerator::new(SyntheticSpec::single_label(10, n, 16, 4.0, 0))
        .unwrap()
        .sample(n, 0)
        .unwrap()
}

fn thread_settings() -> Vec<(&'static str, usize)> {
    vec![("sequential", 1), ("parallel", 0)]
}

fn bench_cross_val(c: &mut Criterion) {
    let d = data(2000);
    let y = d.labels.as_single().unwrap();
    let cfg = TrainConfig::default();
    let mut group = c.benchmark_group(format!("cross_val_proba/{}-threads", current_threads()));
    group.sample_size(10);
    for (name, jobs) in thread_settings() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &jobs, |b, &jobs| {
            b.iter(|| with_thread_limit(jobs, || cross_val_proba(&d.embeddings, y, &cfg).unwrap()))
        });
    }
    group.finish();
}

fn bench_knn(c: &mut Criterion) {
    let d = data(3000);
    let y = d.labels.as_single().unwrap();
    let cfg = KnnConfig::default();
    let mut group = c.benchmark_group(format!("detect_knn/{}-threads", current_threads()));
    group.sample_size(10);
    for (name, jobs) in thread_settings() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &jobs, |b, &jobs| {
            b.iter(|| with_thread_limit(jobs, || detect_knn(&d.embeddings, y, &cfg).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_cross_val, bench_knn);
criterion_main!(benches);
