use std::hint::black_box;

use bkd_bench::{key_blocks, rng, store};
use bkd_core::{derive_session, mac_compute, SuiteId};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn bench_derive(c: &mut Criterion) {
    let mut rng = rng();
    let blocks = key_blocks(&mut rng, 1);
    let block = blocks.get(1).unwrap();
    let pulse = store(&mut rng, 1).latest().unwrap();

    let mut group = c.benchmark_group("derive_session");
    for suite in SuiteId::ALL {
        group.bench_function(suite.name(), |b| {
            b.iter(|| derive_session(suite, black_box(block), black_box(&pulse)).unwrap())
        });
    }
    group.finish();
}

fn bench_mac(c: &mut Criterion) {
    let mut rng = rng();
    let blocks = key_blocks(&mut rng, 1);
    let auth = blocks.auth_block();

    let mut group = c.benchmark_group("mac_compute");
    for len in [64usize, 256, 4096] {
        let transcript = vec![0x5a; len];
        group.throughput(Throughput::Bytes(len as u64));
        group.bench_with_input(BenchmarkId::from_parameter(len), &transcript, |b, t| {
            b.iter(|| mac_compute(auth, black_box(t)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_derive, bench_mac);
criterion_main!(benches);
