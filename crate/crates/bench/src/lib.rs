//! Fixtures shared by the benchmarks.

use dqcnet::topology::RandomSpec;
use dqcnet::traffic::{PatternKind, WorkloadSpec};
use dqcnet::{generate_workload, App, Network};

/// Connected random network with `nodes` nodes and mean degree around 4.
pub fn random_network(seed: u64, nodes: u32) -> Network {
    RandomSpec {
        nodes,
        edge_prob: (4.0 / nodes as f64).min(1.0),
        capacity_range: [5.0, 50.0],
        fidelity_range: [0.93, 0.995],
    }
    .generate(seed)
    .expect("valid random spec")
}

/// Mixed point-to-point / DQC workload over `net`.
pub fn workload(seed: u64, net: &Network, n_apps: u32) -> Vec<App> {
    let spec = WorkloadSpec {
        n_apps,
        class_mix: 0.3,
        dqc_size_range: [3, 4],
        fidelity_floor_range: [0.6, 0.8],
        dqc_pattern: PatternKind::AllPairs,
        rate_demand: None,
    };
    generate_workload(seed, net, &spec).expect("enough endpoints")
}
