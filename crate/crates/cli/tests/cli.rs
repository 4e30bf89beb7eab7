use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dqcnet::allocation::AllocationDoc;
use dqcnet::traffic::load_apps;
use dqcnet::{load_network, verify_allocation};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn dqcnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dqcnet"))
        .args(args)
        .output()
        .expect("spawn dqcnet")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn grid_generation_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.json");
    let o = dqcnet(&[
        "--output",
        out.to_str().unwrap(),
        "topo",
        "generate",
        "--grid",
        "3x3",
        "--seed",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let net = load_network(&read(&out)).unwrap();
    assert_eq!(net.node_count(), 9);
    assert_eq!(net.link_count(), 12);

    let o = dqcnet(&["topo", "validate", "--input", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn random_generation_is_seeded() {
    let args = [
        "topo",
        "generate",
        "--random",
        "12",
        "--edge-prob",
        "0.3",
        "--seed",
        "5",
    ];
    let a = dqcnet(&args);
    let b = dqcnet(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn degenerate_grid_is_a_usage_error() {
    let o = dqcnet(&["topo", "generate", "--grid", "0x3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
}

#[test]
fn self_loop_fails_validation() {
    let o = dqcnet(&[
        "topo",
        "validate",
        "--input",
        fixture("self_loop.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("links[0]"), "{}", stderr(&o));
}

#[test]
fn fidelity_queries() {
    let o = dqcnet(&["fidelity", "--fbar", "0.95", "--L", "0"]);
    assert_eq!(stdout(&o).trim(), "0.95");

    let o = dqcnet(&["fidelity", "--fbar", "0.95", "--L", "2"]);
    let f: f64 = stdout(&o).trim().parse().unwrap();
    assert!((f - 0.8598).abs() < 1e-4);

    let o = dqcnet(&["fidelity", "--fbar", "0.95", "--fmin", "0.8", "--invert"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "3");
}

#[test]
fn fidelity_out_of_domain() {
    let o = dqcnet(&["fidelity", "--fbar", "1.5", "--L", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn allocate_shares_one_link() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("alloc.json");
    let o = dqcnet(&[
        "--output",
        out.to_str().unwrap(),
        "allocate",
        "--network",
        fixture("single_link.json").to_str().unwrap(),
        "--apps",
        fixture("two_flows.json").to_str().unwrap(),
        "--policy",
        "max_min",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let net = load_network(&read(fixture("single_link.json"))).unwrap();
    let apps = load_apps(&read(fixture("two_flows.json"))).unwrap();
    let doc: AllocationDoc = serde_json::from_str(&read(&out)).unwrap();
    let alloc = doc.into_allocation(&net).unwrap();
    let rates: Vec<f64> = alloc.assignments.iter().map(|a| a.rate).collect();
    assert_eq!(rates, vec![5.0, 5.0]);
    assert!(verify_allocation(&net, &apps, &alloc).is_empty());
}

#[test]
fn unknown_policy_lists_choices() {
    let o = dqcnet(&[
        "allocate",
        "--network",
        fixture("single_link.json").to_str().unwrap(),
        "--apps",
        fixture("two_flows.json").to_str().unwrap(),
        "--policy",
        "fastest",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for p in ["greedy_shortest", "max_min", "weighted_max_min"] {
        assert!(err.contains(p), "{err}");
    }
}

#[test]
fn app_with_unknown_node() {
    let o = dqcnet(&[
        "allocate",
        "--network",
        fixture("single_link.json").to_str().unwrap(),
        "--apps",
        fixture("missing_node.json").to_str().unwrap(),
        "--policy",
        "greedy_shortest",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("app 7"), "{}", stderr(&o));
}

#[test]
fn simulate_is_reproducible() {
    let cfg = fixture("campaign.json");
    let cfg = cfg.to_str().unwrap();
    let a = dqcnet(&["simulate", "--config", cfg]);
    let b = dqcnet(&["simulate", "--config", cfg]);
    let c = dqcnet(&["simulate", "--config", cfg, "--jobs", "4"]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    // header plus 3 policies x 4 replications
    assert_eq!(stdout(&a).lines().count(), 13);
}

#[test]
fn simulate_refuses_json() {
    let o = dqcnet(&[
        "--format",
        "json",
        "simulate",
        "--config",
        fixture("campaign.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_with_file_topology() {
    let o = dqcnet(&[
        "simulate",
        "--config",
        fixture("file_topology.json").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn zero_replications_rejected() {
    let o = dqcnet(&[
        "simulate",
        "--config",
        fixture("zero_replications.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("replications"));
}
