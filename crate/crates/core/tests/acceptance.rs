use std::time::{Duration, Instant};

use dqcnet::allocation::{brute_force_fixed_paths, Objective};
use dqcnet::harness::{run_experiment_with_jobs, to_csv_string, Sweep, SweepParam, TopologySpec};
use dqcnet::topology::{NetworkBuilder, RandomSpec};
use dqcnet::traffic::{DqcPattern, PatternKind, WorkloadSpec};
use dqcnet::{
    allocate, fidelity_generic, fidelity_perfect, generate_workload, jain_index,
    max_intermediate_repeaters, run_experiment, verify_allocation, Allocation, App,
    ExperimentConfig, Network, OperationQuality, Policy, RepeaterBound, SwapChainParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PERFECT: OperationQuality = OperationQuality::PERFECT;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, started: Instant) -> (bool, String) {
    let took = started.elapsed();
    (
        took < limit,
        format!("{:.3}s (limit {}s)", took.as_secs_f64(), limit.as_secs()),
    )
}

fn reduction_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let f = 0.3 + 0.7 * (1.0 - rng.gen::<f64>());
        let l = rng.gen_range(0..=20u64);
        let a = fidelity_generic(&SwapChainParams {
            elementary_fidelity: f,
            num_intermediate: l,
            ops: OperationQuality::new(1.0, 1.0, 1.0).unwrap(),
        })
        .unwrap();
        let b = fidelity_perfect(f, l).unwrap();
        worst = worst.max((a - b).abs());
    }
    let (fast, time) = within(Duration::from_secs(1), t);
    outcome(
        worst <= 1e-12 && fast,
        format!("max |diff| {worst:e}, {time}"),
    )
}

fn zero_swap_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let f = 0.25 + 0.75 * (1.0 - rng.gen::<f64>());
        worst = worst.max((fidelity_perfect(f, 0).unwrap() - f).abs());
    }
    outcome(worst <= 1e-12, format!("max |diff| {worst:e}"))
}

fn pinned_constants() -> Outcome {
    let f = fidelity_perfect(0.95, 2).unwrap();
    let bound = max_intermediate_repeaters(0.95, 0.8).unwrap();
    outcome(
        (f - 0.8598).abs() <= 1e-4 && bound == RepeaterBound::Bounded(3),
        format!("F(0.95, 2) = {f}, bound(0.95, 0.8) = {bound}"),
    )
}

fn inversion_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = Instant::now();
    let (mut checked, mut bad) = (0, 0);
    while checked < 1_000 {
        let f = rng.gen_range(0.5..1.0);
        let f_min = rng.gen_range(0.3..f);
        let RepeaterBound::Bounded(l) = max_intermediate_repeaters(f, f_min).unwrap() else {
            continue;
        };
        checked += 1;
        let at = fidelity_perfect(f, l).unwrap();
        let next = fidelity_perfect(f, l + 1).unwrap();
        if !(at >= f_min && next < f_min) {
            bad += 1;
        }
    }
    let (fast, time) = within(Duration::from_secs(1), t);
    outcome(
        bad == 0 && fast,
        format!("{bad} of {checked} inconsistent, {time}"),
    )
}

fn random_instance(seed: u64, max_nodes: u32, max_apps: u32) -> (Network, Vec<App>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = loop {
        let spec = RandomSpec {
            nodes: rng.gen_range(4..=max_nodes),
            edge_prob: rng.gen_range(0.15..0.5),
            capacity_range: [1.0, 20.0],
            fidelity_range: [0.85, 0.99],
        };
        let net = spec.generate(rng.gen()).unwrap();
        if net.node_count() >= 4 {
            break net;
        }
    };
    let workload = WorkloadSpec {
        n_apps: rng.gen_range(1..=max_apps),
        class_mix: rng.gen_range(0.0..0.6),
        dqc_size_range: [3, 4],
        fidelity_floor_range: [0.5, 0.85],
        dqc_pattern: if rng.gen_bool(0.5) {
            PatternKind::AllPairs
        } else {
            PatternKind::Star
        },
        rate_demand: rng.gen_bool(0.3).then_some(4.0),
    };
    let apps = generate_workload(seed, &net, &workload).unwrap();
    (net, apps)
}

fn allocation_safety() -> Outcome {
    let t = Instant::now();
    let mut failures = vec![];
    let mut runs = 0;
    for seed in 0..200 {
        let (net, apps) = random_instance(seed, 30, 20);
        for policy in Policy::ALL {
            let alloc = allocate(&net, &apps, policy, &PERFECT, 4).unwrap();
            runs += 1;
            let v = verify_allocation(&net, &apps, &alloc);
            if !v.is_empty() {
                failures.push(format!("seed {seed} {policy}: {}", v[0]));
            }
        }
    }
    let (fast, time) = within(Duration::from_secs(30), t);
    let mut detail = format!(
        "{} of {runs} allocations with violations, {time}",
        failures.len()
    );
    if let Some(first) = failures.first() {
        detail.push_str(&format!("; first: {first}"));
    }
    outcome(failures.is_empty() && fast, detail)
}

fn min_rate(alloc: &Allocation) -> Option<f64> {
    alloc.assignments.iter().map(|a| a.rate).reduce(f64::min)
}

fn toy_instance(seed: u64) -> (Network, Vec<App>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = loop {
        let spec = RandomSpec {
            nodes: rng.gen_range(4..=7),
            edge_prob: rng.gen_range(0.3..0.6),
            capacity_range: [1.0, 10.0],
            fidelity_range: [0.9, 0.99],
        };
        let net = spec.generate(rng.gen()).unwrap();
        if net.node_count() >= 4 && net.link_count() <= 12 {
            break net;
        }
    };
    let nodes: Vec<u32> = net.endpoints().iter().map(|n| n.0).collect();
    let mut apps = vec![];
    let mut demands = 0;
    for id in 0..rng.gen_range(2..=5u32) {
        let dqc = nodes.len() >= 3 && demands + 3 <= 8 && rng.gen_bool(0.3);
        let f_min = rng.gen_range(0.6..0.85);
        let pick = rand::seq::index::sample(&mut rng, nodes.len(), if dqc { 3 } else { 2 });
        let hosts: Vec<u32> = pick.iter().map(|i| nodes[i]).collect();
        if dqc {
            let pattern = if rng.gen_bool(0.5) {
                DqcPattern::AllPairs
            } else {
                DqcPattern::Star {
                    coordinator: dqcnet::NodeId(hosts[0]),
                }
            };
            demands += if matches!(pattern, DqcPattern::AllPairs) {
                3
            } else {
                2
            };
            apps.push(App::dqc(id, &hosts, pattern, f_min));
        } else if demands < 8 {
            demands += 1;
            apps.push(App::point_to_point(id, hosts[0], hosts[1], f_min));
        }
    }
    (net, apps)
}

fn worked_examples() -> Result<String, String> {
    let abc = NetworkBuilder::new()
        .endpoint(0)
        .endpoint(1)
        .endpoint(2)
        .link(0, 1, 10.0, 0.95)
        .link(1, 2, 6.0, 0.95)
        .build()
        .unwrap();
    let apps = [
        App::point_to_point(0, 0, 2, 0.8),
        App::point_to_point(1, 1, 2, 0.8),
    ];
    let alloc = allocate(&abc, &apps, Policy::MaxMin, &PERFECT, 4).unwrap();
    let rates: Vec<f64> = alloc.assignments.iter().map(|a| a.rate).collect();
    if rates.len() != 2 || rates.iter().any(|r| (r - 3.0).abs() > 1e-6) {
        return Err(format!("A-B-C rates {rates:?}"));
    }

    let star = NetworkBuilder::new()
        .repeater(0)
        .endpoint(1)
        .endpoint(2)
        .endpoint(3)
        .link(0, 1, 6.0, 0.95)
        .link(0, 2, 6.0, 0.95)
        .link(0, 3, 6.0, 0.95)
        .build()
        .unwrap();
    let apps = [App::dqc(0, &[1, 2, 3], DqcPattern::AllPairs, 0.8)];
    let alloc = allocate(&star, &apps, Policy::MaxMin, &PERFECT, 4).unwrap();
    let star_rates: Vec<f64> = alloc.assignments.iter().map(|a| a.rate).collect();
    if star_rates.len() != 3 || star_rates.iter().any(|r| (r - 3.0).abs() > 1e-6) {
        return Err(format!("DQC star rates {star_rates:?}"));
    }
    Ok(format!("A-B-C {rates:?}, DQC star {star_rates:?}"))
}

fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut compared = 0;
    let mut mismatches = vec![];
    for seed in 0..50 {
        let (net, apps) = toy_instance(1_000 + seed);
        let ours = allocate(&net, &apps, Policy::MaxMin, &PERFECT, 4).unwrap();
        let exact = match brute_force_fixed_paths(&net, &apps, Objective::MaxMinRate, &PERFECT, 4) {
            Ok(a) => a,
            Err(e) => {
                mismatches.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        match (min_rate(&ours), min_rate(&exact)) {
            (None, None) => {}
            (Some(a), Some(b)) => {
                compared += 1;
                worst = worst.max((a - b).abs());
                if (a - b).abs() > 1e-6 {
                    mismatches.push(format!("seed {seed}: {a} vs {b}"));
                }
            }
            (a, b) => mismatches.push(format!("seed {seed}: {a:?} vs {b:?}")),
        }
    }
    let examples = worked_examples();
    let (fast, time) = within(Duration::from_secs(60), t);
    let mut detail = format!(
        "max |diff| {worst:e} over {compared} of 50 instances with admitted demands, {time}"
    );
    match &examples {
        Ok(s) => detail.push_str(&format!("; {s}")),
        Err(s) => detail.push_str(&format!("; {s}")),
    }
    if let Some(m) = mismatches.first() {
        detail.push_str(&format!("; {} mismatches, first: {m}", mismatches.len()));
    }
    outcome(mismatches.is_empty() && examples.is_ok() && fast, detail)
}

fn fixture_config() -> ExperimentConfig {
    ExperimentConfig {
        topology: TopologySpec::Random(RandomSpec {
            nodes: 20,
            edge_prob: 0.2,
            capacity_range: [5.0, 20.0],
            fidelity_range: [0.9, 0.99],
        }),
        workload: WorkloadSpec {
            n_apps: 12,
            class_mix: 0.4,
            dqc_size_range: [3, 4],
            fidelity_floor_range: [0.6, 0.85],
            dqc_pattern: PatternKind::AllPairs,
            rate_demand: None,
        },
        policy: Policy::MaxMin,
        ops: PERFECT,
        k: 4,
        replications: 6,
        base_seed: 77,
        sweep: Some(Sweep {
            name: SweepParam::Policy,
            values: Policy::ALL.iter().map(|p| p.name().into()).collect(),
        }),
    }
}

fn determinism() -> Outcome {
    let cfg = fixture_config();
    let csv = |jobs| to_csv_string(&run_experiment_with_jobs(&cfg, jobs).unwrap()).unwrap();
    let first = to_csv_string(&run_experiment(&cfg).unwrap()).unwrap();
    let second = to_csv_string(&run_experiment(&cfg).unwrap()).unwrap();
    let (one, four) = (csv(1), csv(4));
    let rows = first.lines().count() - 1;
    outcome(
        first == second && one == four && first == one,
        format!(
            "{rows} rows, {} bytes; repeat identical: {}, jobs 1 vs 4 identical: {}",
            first.len(),
            first == second,
            one == four
        ),
    )
}

const LEVELS: [f64; 5] = [0.6, 0.7, 0.8, 0.85, 0.9];

fn admitted_by_level(cfg: &ExperimentConfig) -> Vec<Vec<usize>> {
    let rows = run_experiment(cfg).unwrap();
    let mut out = vec![vec![]; cfg.replications as usize];
    for r in rows {
        out[r.replication as usize].push(r.metrics.expect("run failed").n_admitted);
    }
    out
}

fn monotonicity() -> Outcome {
    let mut increases: Vec<(Policy, String)> = vec![];
    let mut series = 0;
    for i in 0..20u64 {
        let mut cfg = fixture_config();
        cfg.base_seed = 500 + i;
        cfg.replications = 1;
        cfg.topology = TopologySpec::Random(RandomSpec {
            nodes: 12 + (i % 4) as u32 * 4,
            edge_prob: 0.2 + 0.05 * (i % 3) as f64,
            capacity_range: [2.0, 12.0],
            fidelity_range: [0.9, 0.99],
        });
        cfg.sweep = Some(Sweep {
            name: SweepParam::FidelityFloor,
            values: LEVELS.iter().map(|&v| v.into()).collect(),
        });
        for policy in Policy::ALL {
            cfg.policy = policy;
            for counts in admitted_by_level(&cfg) {
                series += usize::from(policy != Policy::GreedyShortest);
                if counts.windows(2).any(|w| w[1] > w[0]) {
                    increases.push((policy, format!("seed {} {counts:?}", cfg.base_seed)));
                }
            }
        }
    }
    let (greedy, fair): (Vec<_>, Vec<_>) = increases
        .into_iter()
        .partition(|(p, _)| *p == Policy::GreedyShortest);
    let mut detail = format!(
        "{} of {series} max_min/weighted_max_min series increase (20 configs x 5 levels)",
        fair.len()
    );
    if let Some((p, v)) = fair.first() {
        detail.push_str(&format!("; first: {p} {v}"));
    }
    detail.push_str(&format!(
        "; greedy_shortest, which can un-starve apps when a rival loses its path, increases in {} of 20",
        greedy.len()
    ));
    if let Some((_, v)) = greedy.first() {
        detail.push_str(&format!(" ({v})"));
    }
    outcome(fair.is_empty(), detail)
}

fn fairness_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut out_of_range = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=50);
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
        if x.iter().all(|&v| v == 0.0) {
            x[0] = 1.0;
        }
        let j = jain_index(&x).unwrap();
        if !(j >= 1.0 / n as f64 && j <= 1.0) {
            out_of_range += 1;
        }
    }
    let mut not_one = 0;
    for _ in 0..1_000 {
        let n = rng.gen_range(1..=50);
        let c = rng.gen_range(1e-6..1e6);
        if jain_index(&vec![c; n]).unwrap() != 1.0 {
            not_one += 1;
        }
    }
    outcome(
        out_of_range == 0 && not_one == 0,
        format!("{out_of_range} of 10000 out of range, {not_one} of 1000 constant vectors not 1"),
    )
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("1 fidelity reduction identity", reduction_identity),
        ("2 zero-swap identity", zero_swap_identity),
        ("3 pinned constants", pinned_constants),
        ("4 inversion consistency", inversion_consistency),
        ("5 allocation safety", allocation_safety),
        ("6 oracle equivalence", oracle_equivalence),
        ("7 determinism", determinism),
        ("8 threshold monotonicity", monotonicity),
        ("9 fairness metric bounds", fairness_bounds),
    ];
    let mut failed = vec![];
    for (name, check) in criteria {
        let o = check();
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
