use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use mmcoreset::{fit_pca, sample_coreset, select_bins, SelectionMode, SelectorConfig};
use mmcoreset_bench::uniform_features;

fn selector(c: &mut Criterion) {
    let mut group = c.benchmark_group("select_bins");
    group.sample_size(10);
    for &(n, d) in &[(500, 32), (2000, 64)] {
        let features = uniform_features(n, d, 1);
        let config = SelectorConfig::new(20, SelectionMode::Accelerated);
        group.bench_with_input(BenchmarkId::new("accelerated", format!("{n}x{d}")), &features, |b, f| {
            b.iter(|| select_bins(black_box(f), &config).unwrap())
        });
    }
    let features = uniform_features(120, 8, 2);
    let config = SelectorConfig::new(20, SelectionMode::Oracle);
    group.bench_function("oracle/120x8", |b| {
        b.iter(|| select_bins(black_box(&features), &config).unwrap())
    });
    group.finish();
}

fn pca(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_pca");
    group.sample_size(10);
    // Covariance route (d <= n) and Gram route (d > n).
    for &(n, d, k) in &[(400, 64, 16), (64, 400, 16)] {
        let features = uniform_features(n, d, 3);
        group.bench_function(format!("{n}x{d}_k{k}"), |b| {
            b.iter(|| fit_pca(black_box(&features), k).unwrap())
        });
    }
    group.finish();
}

fn sampler(c: &mut Criterion) {
    let features = uniform_features(2000, 16, 4);
    let partition = select_bins(&features, &SelectorConfig::new(20, SelectionMode::Accelerated)).unwrap();
    c.bench_function("sample_coreset/2000", |b| {
        b.iter(|| sample_coreset(black_box(&partition), 0.2, 7).unwrap())
    });
}

criterion_group!(benches, selector, pca, sampler);
criterion_main!(benches);
