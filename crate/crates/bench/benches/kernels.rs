use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pollencast_core::data::{
    generate_synthetic, label_series, label_series_brute_force, GeneratorProfile, SeasonDefinition,
};
use pollencast_core::features::{build_feature_matrix, window_features, SeriesReferences};
use pollencast_core::gbm::{self, GbmConfig};
use pollencast_core::wls::{fit_weighted, Sigma0};

fn features(c: &mut Criterion) {
    let window: Vec<f64> = (0..14)
        .map(|i| (i as f64 * 0.7).sin() * 50.0 + 60.0)
        .collect();
    c.bench_function("window_features", |b| {
        b.iter(|| window_features(black_box(&window), 120.0).unwrap())
    });

    let data = generate_synthetic(42, 2, &GeneratorProfile::default()).unwrap();
    let def = SeasonDefinition::new(120.0, 4).unwrap();
    let refs = SeriesReferences::from_training(&data, &[2003], &def).unwrap();
    c.bench_function("build_feature_matrix_2y", |b| {
        b.iter(|| build_feature_matrix(black_box(&data), &refs).unwrap())
    });
}

fn labeling(c: &mut Criterion) {
    let pollen: Vec<f64> = (0..365)
        .map(|d| {
            if (100..160).contains(&d) && d % 3 != 0 {
                300.0
            } else {
                10.0
            }
        })
        .collect();
    let def = SeasonDefinition::new(120.0, 4).unwrap();
    c.bench_function("label_series", |b| {
        b.iter(|| label_series(black_box(&pollen), &def))
    });
    c.bench_function("label_series_brute_force", |b| {
        b.iter(|| label_series_brute_force(black_box(&pollen), &def))
    });
}

fn boosting(c: &mut Criterion) {
    let mut group = c.benchmark_group("gbm_fit");
    group.sample_size(10);
    for &rows in &[200usize, 800] {
        let x: Vec<Vec<f64>> = (0..rows)
            .map(|r| (0..361).map(|f| ((r * 31 + f * 17) % 101) as f64).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[3] * 0.5 + r[100]).collect();
        let cfg = GbmConfig {
            n_trees: 20,
            ..GbmConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(rows), &rows, |b, _| {
            b.iter(|| gbm::fit(black_box(&x), &y, &cfg).unwrap())
        });
    }
    group.finish();
}

fn fusion(c: &mut Criterion) {
    let z: Vec<f64> = (0..60).map(f64::from).collect();
    let y: Vec<f64> = z.iter().map(|z| 90.0 - z + (z * 1.3).sin()).collect();
    let w: Vec<f64> = z.iter().map(|z| 1.0 / (1.0 + z * 0.1)).collect();
    c.bench_function("fit_weighted_60", |b| {
        b.iter(|| fit_weighted(black_box(&z), &y, &w, Sigma0::Residual).unwrap())
    });
}

criterion_group!(benches, features, labeling, boosting, fusion);
criterion_main!(benches);
