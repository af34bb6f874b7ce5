use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hmsf_bench::{block_graph, dense, split};
use hmsf_core::cpf::{cpf_forward, CpfConfig, CpfContext, CpfParams};
use hmsf_core::graphdata::build_neighborhoods;
use hmsf_core::models::{GcnParams, GraphInputs};
use hmsf_core::tensorcore::{cross_entropy, gcn_normalize, h2gcn_normalize, Mode, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SIZES: [usize; 2] = [1_000, 5_000];

fn spmm(c: &mut Criterion) {
    let mut group = c.benchmark_group("spmm");
    for n in SIZES {
        let g = block_graph(n, 8.0);
        let a = gcn_normalize(&g);
        let x = dense(n, 64);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| black_box(a.matmul_dense(&x).unwrap()))
        });
    }
    group.finish();
}

fn operators(c: &mut Criterion) {
    let mut group = c.benchmark_group("operators");
    for n in SIZES {
        let g = block_graph(n, 8.0);
        group.bench_with_input(BenchmarkId::new("gcn", n), &g, |b, g| {
            b.iter(|| black_box(gcn_normalize(g)))
        });
        group.bench_with_input(BenchmarkId::new("two_hop", n), &g, |b, g| {
            b.iter(|| {
                let hoods = build_neighborhoods(g);
                black_box(h2gcn_normalize(&hoods, 2))
            })
        });
    }
    group.finish();
}

fn gcn_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("gcn_forward_backward");
    for n in SIZES {
        let g = block_graph(n, 8.0);
        let s = split(&g);
        let inputs = GraphInputs::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = GcnParams::init(g.num_features(), 64, g.num_classes(), &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                let mut tape = Tape::new();
                let mut drop = ChaCha8Rng::seed_from_u64(1);
                let fwd = params
                    .forward(
                        &mut tape,
                        inputs.gcn_operator(),
                        inputs.features(),
                        0.5,
                        Mode::Train,
                        &mut drop,
                    )
                    .unwrap();
                let (_, seed) =
                    cross_entropy(tape.value(fwd.output), g.labels(), &s.train).unwrap();
                black_box(tape.backward(fwd.output, seed).unwrap())
            })
        });
    }
    group.finish();
}

fn cpf_student(c: &mut Criterion) {
    let n = 2_000;
    let g = block_graph(n, 8.0);
    let s = split(&g);
    let inputs = GraphInputs::new(&g);
    let ctx = CpfContext::new(&inputs, &s).unwrap();
    let cfg = CpfConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = CpfParams::init(n, g.num_features(), cfg.hidden, g.num_classes(), &mut rng);
    c.bench_function("cpf_forward_2000", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let (mut r1, mut r2) = (ChaCha8Rng::seed_from_u64(1), ChaCha8Rng::seed_from_u64(2));
            black_box(
                cpf_forward(
                    &params,
                    &inputs,
                    &ctx,
                    &cfg,
                    &mut tape,
                    Mode::Train,
                    &mut r1,
                    &mut r2,
                )
                .unwrap(),
            )
        })
    });
}

criterion_group!(benches, spmm, operators, gcn_step, cpf_student);
criterion_main!(benches);
