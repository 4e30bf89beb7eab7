//! Seeded Monte Carlo campaigns: topology + workload + allocation per
//! replication, summarized as one CSV row each.
//!
//! # Seeds
//!
//! Replication `i` (0-based) of a campaign with base seed `b` uses
//!
//! ```text
//! seed      = splitmix64(b + 0x9E3779B97F4A7C15 * (i + 1))     (wrapping)
//! topo_seed = splitmix64(seed ^ 0x746F706F)
//! work_seed = splitmix64(seed ^ 0x776F726B)
//! ```
//!
//! The seed depends on neither the sweep value nor the other replications, so
//! sweep points share random topologies and workloads and replications can
//! run in any order.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{allocate, Allocation, Policy};
use crate::fidelity::OperationQuality;
use crate::routing::DEFAULT_K;
use crate::topology::{load_network, GridSpec, Network, RandomSpec};
use crate::traffic::{generate_workload, App, TrafficClass, WorkloadSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("jain index: {0}")]
    Jain(&'static str),
    #[error("cannot write output: {0}")]
    Output(String),
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

/// `splitmix64` finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `replication` (0-based).
pub fn replication_seed(base_seed: u64, replication: u32) -> u64 {
    splitmix64(
        base_seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(replication as u64 + 1)),
    )
}

fn topology_seed(seed: u64) -> u64 {
    splitmix64(seed ^ 0x746F_706F)
}

fn workload_seed(seed: u64) -> u64 {
    splitmix64(seed ^ 0x776F_726B)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    Grid(GridSpec),
    Random(RandomSpec),
    /// A network document; relative paths are resolved by
    /// [`ExperimentConfig::resolve_paths`].
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Policy,
    K,
    NApps,
    ClassMix,
    /// Sets every app threshold to the value (`fidelity_floor_range = [v, v]`).
    FidelityFloor,
    EdgeProb,
    P1,
    P2,
    Eta,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Policy => "policy",
            SweepParam::K => "k",
            SweepParam::NApps => "n_apps",
            SweepParam::ClassMix => "class_mix",
            SweepParam::FidelityFloor => "fidelity_floor",
            SweepParam::EdgeProb => "edge_prob",
            SweepParam::P1 => "p1",
            SweepParam::P2 => "p2",
            SweepParam::Eta => "eta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub name: SweepParam,
    pub values: Vec<serde_json::Value>,
}

fn default_policy() -> Policy {
    Policy::MaxMin
}

fn default_k() -> usize {
    DEFAULT_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologySpec,
    pub workload: WorkloadSpec,
    #[serde(default = "default_policy")]
    pub policy: Policy,
    #[serde(default)]
    pub ops: OperationQuality,
    #[serde(default = "default_k")]
    pub k: usize,
    pub replications: u32,
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    /// Makes a relative topology file path relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let TopologySpec::File { path } = &mut self.topology {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    fn check(&self) -> Result<(), HarnessError> {
        if self.k == 0 {
            return Err(config_err("k must be at least 1"));
        }
        self.ops.validate().map_err(|e| config_err(e.to_string()))?;
        self.workload
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        match &self.topology {
            TopologySpec::Grid(g) => {
                g.build()
                    .map_err(|e| config_err(format!("topology: {e}")))?;
            }
            TopologySpec::Random(r) => r
                .validate()
                .map_err(|e| config_err(format!("topology: {e}")))?,
            TopologySpec::File { .. } => {}
        }
        Ok(())
    }

    /// The config with the swept parameter set to `value`.
    pub fn with_sweep_value(
        &self,
        param: SweepParam,
        value: &serde_json::Value,
    ) -> Result<Self, HarnessError> {
        let mut cfg = self.clone();
        let bad = || config_err(format!("sweep value {value} does not fit {}", param.name()));
        let num = || value.as_f64().ok_or_else(bad);
        let int = || value.as_u64().ok_or_else(bad);
        match param {
            SweepParam::Policy => {
                cfg.policy =
                    value.as_str().ok_or_else(bad)?.parse().map_err(
                        |e: crate::allocation::AllocationError| config_err(e.to_string()),
                    )?
            }
            SweepParam::K => cfg.k = int()? as usize,
            SweepParam::NApps => cfg.workload.n_apps = u32::try_from(int()?).map_err(|_| bad())?,
            SweepParam::ClassMix => cfg.workload.class_mix = num()?,
            SweepParam::FidelityFloor => {
                let f = num()?;
                cfg.workload.fidelity_floor_range = [f, f];
            }
            SweepParam::EdgeProb => match &mut cfg.topology {
                TopologySpec::Random(r) => r.edge_prob = num()?,
                _ => return Err(config_err("edge_prob sweep needs a random topology")),
            },
            SweepParam::P1 => cfg.ops.p1 = num()?,
            SweepParam::P2 => cfg.ops.p2 = num()?,
            SweepParam::Eta => cfg.ops.eta = num()?,
        }
        cfg.sweep = None;
        Ok(cfg)
    }

    /// Checks the config and every sweep point; returns the concrete configs
    /// with their sweep labels.
    pub fn expand(&self) -> Result<Vec<(String, Self)>, HarnessError> {
        if self.replications == 0 {
            return Err(config_err("replications must be at least 1"));
        }
        let points = match &self.sweep {
            None => vec![(String::new(), self.clone())],
            Some(sweep) => {
                if sweep.values.is_empty() {
                    return Err(config_err("sweep has no values"));
                }
                sweep
                    .values
                    .iter()
                    .map(|v| {
                        let label = match v {
                            serde_json::Value::String(s) => s.clone(),
                            other => other.to_string(),
                        };
                        Ok((label, self.with_sweep_value(sweep.name, v)?))
                    })
                    .collect::<Result<Vec<_>, HarnessError>>()?
            }
        };
        for (label, cfg) in &points {
            cfg.check().map_err(|e| match label.is_empty() {
                true => e,
                false => config_err(format!("sweep value {label}: {e}")),
            })?;
        }
        Ok(points)
    }
}

/// Metrics of one successful replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_apps: usize,
    pub n_admitted: usize,
    pub admission_ratio: Option<f64>,
    pub total_rate: f64,
    /// Smallest per-app rate (0 when an app is not admitted).
    pub min_rate: Option<f64>,
    pub jain_index: Option<f64>,
    pub mean_hop_count: Option<f64>,
    pub p2p_admission_ratio: Option<f64>,
    pub dqc_admission_ratio: Option<f64>,
    pub p2p_total_rate: f64,
    pub dqc_total_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub sweep_name: String,
    pub sweep_value: String,
    pub replication: u32,
    pub seed: u64,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

/// Jain's fairness index `(sum x)^2 / (n sum x^2)`.
pub fn jain_index(rates: &[f64]) -> Result<f64, HarnessError> {
    if rates.is_empty() {
        return Err(HarnessError::Jain("empty input"));
    }
    if rates.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(HarnessError::Jain("rates must be finite and nonnegative"));
    }
    let max = rates.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(HarnessError::Jain("all rates are zero"));
    }
    // Scaling by the maximum makes constant vectors exact.
    let n = rates.len() as f64;
    let sum: f64 = rates.iter().map(|x| x / max).sum();
    let sq: f64 = rates.iter().map(|x| (x / max) * (x / max)).sum();
    Ok((sum * sum / (n * sq)).clamp(1.0 / n, 1.0))
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Summarizes an allocation of `apps`.
pub fn compute_metrics(apps: &[App], alloc: &Allocation) -> Metrics {
    let app_rates = alloc.app_rates(apps);
    let class_of = |id| apps.iter().find(|a| a.id == id).map(App::class);
    let mut count = [0usize; 2];
    let mut admitted = [0usize; 2];
    for (app, r) in apps.iter().zip(&app_rates) {
        let c = (app.class() == TrafficClass::Dqc) as usize;
        count[c] += 1;
        admitted[c] += (*r > 0.0) as usize;
    }
    let mut class_rate = [0.0; 2];
    for a in &alloc.assignments {
        let c = (class_of(a.demand.app_id) == Some(TrafficClass::Dqc)) as usize;
        class_rate[c] += a.rate;
    }
    let hops: Vec<usize> = alloc
        .assignments
        .iter()
        .map(|a| a.path.hop_count())
        .collect();
    Metrics {
        n_apps: apps.len(),
        n_admitted: admitted[0] + admitted[1],
        admission_ratio: ratio(admitted[0] + admitted[1], apps.len()),
        total_rate: class_rate[0] + class_rate[1],
        min_rate: app_rates.iter().copied().reduce(f64::min),
        jain_index: jain_index(&app_rates).ok(),
        mean_hop_count: (!hops.is_empty())
            .then(|| hops.iter().sum::<usize>() as f64 / hops.len() as f64),
        p2p_admission_ratio: ratio(admitted[0], count[0]),
        dqc_admission_ratio: ratio(admitted[1], count[1]),
        p2p_total_rate: class_rate[0],
        dqc_total_rate: class_rate[1],
    }
}

fn build_topology(spec: &TopologySpec, seed: u64) -> Result<Network, String> {
    match spec {
        TopologySpec::Grid(g) => g.build().map_err(|e| e.to_string()),
        TopologySpec::Random(r) => r.generate(topology_seed(seed)).map_err(|e| e.to_string()),
        TopologySpec::File { path } => {
            let text =
                std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            load_network(&text).map_err(|e| e.to_string())
        }
    }
}

/// One replication of one concrete config.
pub fn run_replication(cfg: &ExperimentConfig, seed: u64) -> Result<Metrics, String> {
    let net = build_topology(&cfg.topology, seed)?;
    let apps =
        generate_workload(workload_seed(seed), &net, &cfg.workload).map_err(|e| e.to_string())?;
    let alloc = allocate(&net, &apps, cfg.policy, &cfg.ops, cfg.k).map_err(|e| e.to_string())?;
    Ok(compute_metrics(&apps, &alloc))
}

/// Runs the campaign on the current thread.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunMetrics>, HarnessError> {
    run_experiment_with_jobs(config, 1)
}

/// Runs the campaign on `jobs` worker threads. Rows come back sweep-major,
/// replication-minor whatever the thread count.
pub fn run_experiment_with_jobs(
    config: &ExperimentConfig,
    jobs: usize,
) -> Result<Vec<RunMetrics>, HarnessError> {
    let points = config.expand()?;
    let sweep_name = config
        .sweep
        .as_ref()
        .map(|s| s.name.name().to_string())
        .unwrap_or_default();
    let tasks: Vec<(&str, &ExperimentConfig, u32)> = points
        .iter()
        .flat_map(|(label, cfg)| (0..config.replications).map(move |r| (label.as_str(), cfg, r)))
        .collect();
    let run = |&(label, cfg, rep): &(&str, &ExperimentConfig, u32)| {
        let seed = replication_seed(config.base_seed, rep);
        let (metrics, error) = match run_replication(cfg, seed) {
            Ok(m) => (Some(m), None),
            Err(e) => (None, Some(e)),
        };
        RunMetrics {
            sweep_name: sweep_name.clone(),
            sweep_value: label.to_string(),
            replication: rep,
            seed,
            metrics,
            error,
        }
    };
    if jobs <= 1 {
        return Ok(tasks.iter().map(run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| config_err(format!("thread pool: {e}")))?;
    Ok(pool.install(|| tasks.par_iter().map(run).collect()))
}

pub const CSV_COLUMNS: [&str; 16] = [
    "sweep_name",
    "sweep_value",
    "replication",
    "seed",
    "n_apps",
    "n_admitted",
    "admission_ratio",
    "total_rate",
    "min_rate",
    "jain_index",
    "mean_hop_count",
    "p2p_admission_ratio",
    "dqc_admission_ratio",
    "p2p_total_rate",
    "dqc_total_rate",
    "error",
];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl RunMetrics {
    fn record(&self) -> Vec<String> {
        let mut row = vec![
            self.sweep_name.clone(),
            self.sweep_value.clone(),
            self.replication.to_string(),
            self.seed.to_string(),
        ];
        match &self.metrics {
            Some(m) => row.extend([
                m.n_apps.to_string(),
                m.n_admitted.to_string(),
                opt(m.admission_ratio),
                m.total_rate.to_string(),
                opt(m.min_rate),
                opt(m.jain_index),
                opt(m.mean_hop_count),
                opt(m.p2p_admission_ratio),
                opt(m.dqc_admission_ratio),
                m.p2p_total_rate.to_string(),
                m.dqc_total_rate.to_string(),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), 11)),
        }
        row.push(self.error.clone().unwrap_or_default());
        row
    }
}

/// Writes the campaign CSV. Floats use the shortest representation that
/// round-trips, undefined metrics are empty fields.
pub fn write_csv<W: Write>(rows: &[RunMetrics], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let err = |e: csv::Error| HarnessError::Output(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(err)?;
    for row in rows {
        w.write_record(row.record()).map_err(err)?;
    }
    w.flush().map_err(|e| HarnessError::Output(e.to_string()))
}

pub fn to_csv_string(rows: &[RunMetrics]) -> Result<String, HarnessError> {
    let mut buf = vec![];
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}
