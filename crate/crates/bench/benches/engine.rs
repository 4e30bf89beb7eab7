use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use dqcnet::{allocate, fidelity_perfect, k_shortest_paths, max_intermediate_repeaters};
use dqcnet::{NodeId, OperationQuality, Policy};
use dqcnet_bench::{random_network, workload};

fn fidelity(c: &mut Criterion) {
    c.bench_function("fidelity_perfect", |b| {
        b.iter(|| fidelity_perfect(black_box(0.95), black_box(12)))
    });
    c.bench_function("max_intermediate_repeaters", |b| {
        b.iter(|| max_intermediate_repeaters(black_box(0.97), black_box(0.7)))
    });
}

fn routing(c: &mut Criterion) {
    let net = random_network(1, 100);
    let nodes: Vec<NodeId> = net.nodes().map(|n| n.id).collect();
    let (src, dst) = (nodes[0], nodes[nodes.len() - 1]);
    let mut group = c.benchmark_group("k_shortest_paths");
    for k in [1usize, 4, 16] {
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| k_shortest_paths(&net, src, dst, k).unwrap())
        });
    }
    group.finish();
}

fn allocation(c: &mut Criterion) {
    let net = random_network(2, 60);
    let apps = workload(3, &net, 40);
    let mut group = c.benchmark_group("allocate");
    for policy in Policy::ALL {
        group.bench_with_input(BenchmarkId::from_parameter(policy), &policy, |b, &p| {
            b.iter(|| allocate(&net, &apps, p, &OperationQuality::PERFECT, 4).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, fidelity, routing, allocation);
criterion_main!(benches);
