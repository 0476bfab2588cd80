use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fingertrain::datasets::{butina_cluster, filter_fingerprint_config};
use fingertrain::fingerprints::folded_batch;
use fingertrain::gin::{GinConfig, GinModel};
use fingertrain::predictor::{fit, GbdtConfig, Objective};
use fingertrain::toy::toy_molecules;
use fingertrain::vocab::{build_vocabulary, tokenize};
use fingertrain::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn fingerprints(c: &mut Criterion) {
    let mols = toy_molecules(400, 1);
    let fc = filter_fingerprint_config();
    let mut group = c.benchmark_group("folded_batch");
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| folded_batch(black_box(&mols), &fc, exec).unwrap()));
    }
    group.finish();
}

fn clustering(c: &mut Criterion) {
    let mols = toy_molecules(300, 2);
    let fps = folded_batch(&mols, &filter_fingerprint_config(), Exec::Sequential).unwrap();
    let mut group = c.benchmark_group("butina_cluster");
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| butina_cluster(black_box(&fps), 0.65, exec)));
    }
    group.finish();
}

fn boosting(c: &mut Criterion) {
    let mols = toy_molecules(300, 3);
    let fps = folded_batch(&mols, &filter_fingerprint_config(), Exec::Sequential).unwrap();
    let x: Vec<Vec<f64>> = fps.iter().map(|f| f.to_dense().into_iter().take(256).collect()).collect();
    let y: Vec<f64> = mols.iter().map(|m| m.atom_count() as f64).collect();
    let cfg = GbdtConfig { n_estimators: 20, ..GbdtConfig::default() };
    let mut group = c.benchmark_group("gbdt_fit");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| fit(black_box(&x), &y, Objective::SquaredError, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn featurising(c: &mut Criterion) {
    let mols = toy_molecules(200, 4);
    let fc = filter_fingerprint_config();
    let vocab = build_vocabulary(&mols, &fc, 256, Exec::Sequential).unwrap();
    let graphs: Vec<_> = mols.iter().map(|m| tokenize(m, &vocab)).collect();
    let model = GinModel::new(
        GinConfig { hidden_dim: 128, embed_dim: 128, vocab_size: vocab.size(), r_max: fc.radius, output_dim: 64, ..GinConfig::default() },
        7,
    )
    .unwrap();
    let mut group = c.benchmark_group("gin_featurise");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| model.featurise(black_box(&graphs), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, fingerprints, clustering, boosting, featurising);
criterion_main!(benches);
