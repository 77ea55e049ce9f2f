//! Whole handshakes. `simulate` parallelizes across trials with the default
//! features; compare against `--no-default-features` for the sequential path.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use lsrp_core::harness::{run_trial, simulate, SimulationConfig};
use lsrp_core::params::ProtocolParams;
use lsrp_core::sampler::{GaussianTable, StreamExpander};
use lsrp_core::srp::ProtocolContext;

fn handshake(c: &mut Criterion) {
    let ctx = Arc::new(ProtocolContext::new(ProtocolParams::default()).unwrap());
    let mut group = c.benchmark_group("handshake");
    group.sample_size(20);
    let mut i = 0u64;
    group.bench_function("single", |b| {
        b.iter(|| {
            i += 1;
            let mut s = StreamExpander::new(b"bench", &i.to_be_bytes());
            run_trial(&ctx, &mut s, false, false).unwrap()
        })
    });
    let mode = if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "sequential"
    };
    group.bench_function(format!("simulate_16_{mode}"), |b| {
        b.iter(|| simulate(&ctx, &SimulationConfig::new(16, [0; 32])).unwrap())
    });
    group.finish();

    let table = GaussianTable::for_params(ctx.params());
    c.bench_function("gaussian_matrix_128", |b| {
        let mut s = StreamExpander::new(b"bench", b"gauss");
        b.iter(|| table.matrix(128, 65537, &mut s))
    });
}

criterion_group!(benches, handshake);
criterion_main!(benches);
