//! Rayon pool vs single-thread execution on the crate's hot paths. The
//! same binary serves both arms: the sequential arm runs inside a
//! one-worker pool, which matches the `parallel`-feature-off fallback up
//! to scheduling overhead (results are bit-identical either way).

use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use ctxad_core::diff::ops::rbf_mmd;
use ctxad_core::diff::Tensor;
use ctxad_core::exec::{map_indexed_par, map_indexed_seq};
use ctxad_core::model::CwaeModel;
use ctxad_core::select::{probe_model_config, probe_train_config, select_context};
use ctxad_core::synth::{planted_raw, PlantedSpec};
use ctxad_core::tabular::{encode_table, infer_schema, split_dataset, EncodedTable, VocabSource};
use ctxad_core::train::{train, validation_nll};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::ThreadPoolBuilder;

fn one_worker() -> rayon::ThreadPool {
    ThreadPoolBuilder::new().num_threads(1).build().unwrap()
}

fn planted_table(seed: u64) -> EncodedTable {
    let raw = planted_raw(&PlantedSpec { content_values: 5, noise: 0.2, seed, ..Default::default() });
    let schema = infer_schema(&raw, 20, "label", None).unwrap();
    let mut table = encode_table(&raw, &schema, VocabSource::Fit, "1").unwrap();
    split_dataset(&mut table, 0.2, 0.1, seed).unwrap();
    table
}

fn bench_exec_map(c: &mut Criterion) {
    let work = |i: usize| {
        let mut acc = i as f64;
        for k in 1..200 {
            acc = (acc + k as f64).sqrt().sin() + acc * 0.5;
        }
        acc
    };
    let mut g = c.benchmark_group("exec_map_4096");
    g.sample_size(20).measurement_time(Duration::from_secs(2));
    g.bench_function("sequential", |b| {
        b.iter(|| map_indexed_seq(4096, work))
    });
    g.bench_function("parallel", |b| b.iter(|| map_indexed_par(4096, work)));
    g.finish();
}

fn bench_mmd(c: &mut Criterion) {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let mut filled = |shape: &[usize]| {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };
    let z = filled(&[256, 8]);
    let p = filled(&[256, 8]);
    let pool = one_worker();
    let mut g = c.benchmark_group("rbf_mmd_256x8");
    g.sample_size(20).measurement_time(Duration::from_secs(2));
    g.bench_function("one_worker", |b| b.iter(|| pool.install(|| rbf_mmd(&z, &p, 1.0))));
    g.bench_function("pool", |b| b.iter(|| rbf_mmd(&z, &p, 1.0)));
    g.finish();
}

fn bench_scoring(c: &mut Criterion) {
    let table = planted_table(7);
    let mut cfg = probe_model_config(&table).unwrap();
    cfg.seed = 7;
    let mut model = CwaeModel::new(cfg, &table.schema).unwrap();
    train(&mut model, &table, &probe_train_config()).unwrap();
    let pool = one_worker();
    let mut g = c.benchmark_group("validation_nll_200rows");
    g.sample_size(20).measurement_time(Duration::from_secs(2));
    g.bench_function("one_worker", |b| {
        b.iter(|| pool.install(|| validation_nll(&model, &table).unwrap()))
    });
    g.bench_function("pool", |b| b.iter(|| validation_nll(&model, &table).unwrap()));
    g.finish();
}

fn bench_candidate_sweep(c: &mut Criterion) {
    let table = planted_table(11);
    let names = table.schema.candidate_context_columns.clone();
    let template = probe_model_config(&table).unwrap();
    let tcfg = probe_train_config();
    let pool = one_worker();
    let mut g = c.benchmark_group("candidate_sweep_5arms");
    g.sample_size(10).measurement_time(Duration::from_secs(5));
    g.bench_function("one_worker", |b| {
        b.iter(|| pool.install(|| select_context(&table, &names, &template, &tcfg, true, 11).unwrap()))
    });
    g.bench_function("pool", |b| {
        b.iter(|| select_context(&table, &names, &template, &tcfg, true, 11).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench_exec_map, bench_mmd, bench_scoring, bench_candidate_sweep);
criterion_main!(benches);
