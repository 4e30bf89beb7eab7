//! Flow-level resource allocation for quantum networks that serve both
//! point-to-point entanglement flows and distributed quantum computing
//! (DQC) applications.
//!
//! - [`topology`]: network graph, generators and the JSON network format.
//! - [`fidelity`]: end-to-end fidelity of entanglement-swapping chains.
//! - [`traffic`]: traffic classes and workload generation.
//! - [`routing`]: k-shortest candidate paths and fidelity filtering.
//! - [`allocation`]: rate allocation policies, verification and an exact
//!   LP oracle for small instances.
//! - [`harness`]: seeded simulation campaigns with CSV output.

pub mod allocation;
pub mod fidelity;
pub mod harness;
pub mod routing;
pub mod topology;
pub mod traffic;

pub use allocation::{allocate, verify_allocation, Allocation, AllocationError, Policy};
pub use fidelity::{
    fidelity_generic, fidelity_perfect, max_intermediate_repeaters, path_fidelity, werner_weight,
    FidelityError, OperationQuality, RepeaterBound, SwapChainParams,
};
pub use harness::{jain_index, run_experiment, ExperimentConfig, HarnessError, RunMetrics};
pub use routing::{feasible_paths, k_shortest_paths, Path, RoutingError};
pub use topology::{
    build_grid, generate_random, load_network, save_network, Network, NodeId, NodeKind,
    TopologyError,
};
pub use traffic::{expand_app, generate_workload, App, AppId, PairDemand, TrafficError};
