use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use setgnn::data::generate_synthetic;
use setgnn::eval::{auc, ScoredExample};
use setgnn::nn::NormMode;
use setgnn::{CompatModel, ModelConfig, SetGraph, Tape, Tensor, Variant};

fn filled(rows: usize, cols: usize, phase: f64) -> Tensor {
    let data = (0..rows * cols).map(|i| (i as f64 * 0.37 + phase).sin()).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [16, 64, 128] {
        let (a, b) = (filled(n, n, 0.1), filled(n, n, 0.7));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| {
                let mut tape = Tape::new();
                let (x, y) = (tape.leaf(a.clone()), tape.leaf(b.clone()));
                let z = tape.matmul(x, y).unwrap();
                let s = tape.sum(z);
                black_box(tape.backward(s).unwrap());
            })
        });
    }
    group.finish();
}

fn batch(labelled: usize) -> Vec<SetGraph> {
    let table = generate_synthetic(4, 50, 16, 0.05, 0).unwrap();
    let ids: Vec<&str> = table.items().iter().map(|i| i.id.as_str()).collect();
    (0..labelled)
        .map(|g| {
            let len = 3 + g % 4;
            let members: Vec<&str> = (0..len).map(|k| ids[(g * 7 + k * 13) % ids.len()]).collect();
            table.graph(&format!("g{g}"), &members, Some((g % 2) as u8)).unwrap()
        })
        .collect()
}

fn propagate(c: &mut Criterion) {
    let graphs = batch(32);
    let refs: Vec<&SetGraph> = graphs.iter().collect();
    let mut group = c.benchmark_group("forward_backward");
    group.sample_size(20);
    for variant in [Variant::Centroid, Variant::Learned] {
        let model = CompatModel::new(ModelConfig::new(variant, 16), 0).unwrap();
        group.bench_function(format!("model_{variant}_batch32"), |bench| {
            bench.iter(|| black_box(model.batch_gradients(&refs, NormMode::Train, None).unwrap()))
        });
        group.bench_function(format!("model_{variant}_score32"), |bench| {
            bench.iter(|| black_box(model.score_all(&graphs, None).unwrap()))
        });
    }
    group.finish();
}

fn auc_bench(c: &mut Criterion) {
    let examples: Vec<ScoredExample> = (0..10_000)
        .map(|i| ScoredExample::new((i as f64 * 0.61).sin(), (i % 3 == 0) as u8))
        .collect();
    c.bench_function("auc_10k", |bench| bench.iter(|| black_box(auc(&examples).unwrap())));
}

criterion_group!(benches, matmul, propagate, auc_bench);
criterion_main!(benches);
