//! Parallel against sequential execution of the data-parallel kernels.
//! Each group runs the same workload twice, toggling `par::set_sequential`.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use edgeamc::datagen::{build_dataset, Split};
use edgeamc::nettrim;
use edgeamc::par;
use edgeamc::pq::{self, PqConfig};
use edgeamc::rng;
use edgeamc::tensor::{SparseMatrix, Tape, Tensor};
use edgeamc::trainer;
use edgeamc::zoo::Architecture;
use rand::Rng;

const MODES: [(&str, bool); 2] = [("parallel", false), ("sequential", true)];

fn gaussian_like(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, &[]);
    (0..len).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn datagen(c: &mut Criterion) {
    let mut g = c.benchmark_group("build_dataset");
    g.sample_size(10);
    for (name, seq) in MODES {
        g.bench_function(name, |b| {
            par::set_sequential(seq);
            b.iter(|| black_box(build_dataset(5, 1).unwrap()));
        });
    }
    par::set_sequential(false);
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let d = build_dataset(4, 2).unwrap();
    let m = Architecture::Vtcnn2.build(1.0, 3).unwrap();
    let mut g = c.benchmark_group("evaluate_vtcnn2");
    g.sample_size(10);
    for (name, seq) in MODES {
        g.bench_function(name, |b| {
            par::set_sequential(seq);
            b.iter(|| black_box(trainer::evaluate(&m, &d, Split::Test).unwrap()));
        });
    }
    par::set_sequential(false);
    g.finish();
}

fn conv_forward_backward(c: &mut Criterion) {
    let x = Tensor::new(vec![64, 1, 2, 128], gaussian_like(64 * 256, 4)).unwrap();
    let k = Tensor::new(vec![64, 1, 1, 3], gaussian_like(192, 5)).unwrap();
    let mut g = c.benchmark_group("conv2d");
    for (name, seq) in MODES {
        g.bench_function(name, |b| {
            par::set_sequential(seq);
            b.iter(|| {
                let mut t = Tape::new();
                let xv = t.constant(x.clone());
                let kv = t.leaf(k.clone().with_requires_grad(true));
                let y = t.conv2d(xv, kv, None, [0, 2]).unwrap();
                let s = t.sum(y);
                t.backward(s).unwrap();
                black_box(t.grad(kv).unwrap()[0])
            });
        });
    }
    par::set_sequential(false);
    g.finish();
}

fn sparse_forward(c: &mut Criterion) {
    let (rows, cols, batch) = (4096, 256, 64);
    let mut w = gaussian_like(rows * cols, 6);
    w.iter_mut().enumerate().filter(|(i, _)| i % 20 != 0).for_each(|(_, v)| *v = 0.0);
    let sp = SparseMatrix::from_dense(rows, cols, &w).unwrap();
    let x = gaussian_like(batch * rows, 7);
    let mut g = c.benchmark_group("csr_forward");
    for (name, seq) in MODES {
        g.bench_function(name, |b| {
            par::set_sequential(seq);
            b.iter(|| black_box(sp.left_mul(&x, batch)));
        });
    }
    par::set_sequential(false);
    g.finish();
}

fn kmeans(c: &mut Criterion) {
    let (m, n) = (2048, 64);
    let w = Tensor::new(vec![m, n], gaussian_like(m * n, 8)).unwrap();
    let mut g = c.benchmark_group("pq_quantize");
    g.sample_size(10);
    for p in [2, 8] {
        for (name, seq) in MODES {
            g.bench_with_input(BenchmarkId::new(name, p), &p, |b, &p| {
                par::set_sequential(seq);
                let cfg = PqConfig {
                    kmeans_max_iter: 10,
                    ..PqConfig::new(p, 64, 9)
                };
                b.iter(|| black_box(pq::quantize(&w, &cfg).unwrap()));
            });
        }
    }
    par::set_sequential(false);
    g.finish();
}

fn activations(c: &mut Criterion) {
    let d = build_dataset(4, 10).unwrap();
    let m = Architecture::Vtcnn2.build(1.0, 11).unwrap();
    let mut g = c.benchmark_group("collect_activations");
    g.sample_size(10);
    for (name, seq) in MODES {
        g.bench_function(name, |b| {
            par::set_sequential(seq);
            b.iter(|| black_box(nettrim::collect_activations(&m, &d, 256, 12).unwrap()));
        });
    }
    par::set_sequential(false);
    g.finish();
}

criterion_group!(benches, datagen, evaluation, conv_forward_backward, sparse_forward, kmeans, activations);
criterion_main!(benches);
