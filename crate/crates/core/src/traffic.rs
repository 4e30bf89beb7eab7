//! Application traffic: point-to-point flows and multi-host distributed
//! quantum computing (DQC) applications, and their expansion into pairwise
//! entanglement demands.

use std::collections::BTreeSet;

use rand::{seq::index::sample, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fidelity::WERNER_FLOOR;
use crate::topology::{draw_in, Network, NodeId, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AppId(pub u32);

impl std::fmt::Display for AppId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficClass {
    #[serde(rename = "p2p")]
    PointToPoint,
    Dqc,
}

/// Which host pairs of a DQC application need entanglement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DqcPattern {
    AllPairs,
    Star { coordinator: NodeId },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Endpoints {
    PointToPoint {
        src: NodeId,
        dst: NodeId,
    },
    Dqc {
        hosts: Vec<NodeId>,
        pattern: DqcPattern,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AppDoc", into = "AppDoc")]
pub struct App {
    pub id: AppId,
    pub endpoints: Endpoints,
    pub min_fidelity: f64,
    /// Allocation priority, > 0.
    pub weight: f64,
    /// Rate cap in EPR pairs/s; `None` is an elastic application.
    pub rate_demand: Option<f64>,
}

/// Unit of allocation: one host pair of one application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDemand {
    pub app_id: AppId,
    /// Position of this pair in the application's expansion.
    pub index: usize,
    pub pair: (NodeId, NodeId),
    pub min_fidelity: f64,
    pub weight: f64,
    pub rate_demand: Option<f64>,
    /// Set for DQC applications: all demands of a group get the same rate.
    pub coupling_group: Option<AppId>,
}

impl PairDemand {
    pub fn key(&self) -> DemandKey {
        DemandKey {
            app_id: self.app_id,
            index: self.index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DemandKey {
    pub app_id: AppId,
    pub index: usize,
}

impl std::fmt::Display for DemandKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.app_id, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrafficError {
    #[error("app {app}: {msg}")]
    InvalidApp { app: AppId, msg: String },
    #[error("workload: {0}")]
    Config(String),
    #[error("malformed app document: {0}")]
    Parse(String),
}

impl App {
    pub fn point_to_point(id: u32, src: u32, dst: u32, min_fidelity: f64) -> Self {
        Self {
            id: AppId(id),
            endpoints: Endpoints::PointToPoint {
                src: NodeId(src),
                dst: NodeId(dst),
            },
            min_fidelity,
            weight: 1.0,
            rate_demand: None,
        }
    }

    pub fn dqc(id: u32, hosts: &[u32], pattern: DqcPattern, min_fidelity: f64) -> Self {
        Self {
            id: AppId(id),
            endpoints: Endpoints::Dqc {
                hosts: hosts.iter().copied().map(NodeId).collect(),
                pattern,
            },
            min_fidelity,
            weight: 1.0,
            rate_demand: None,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_rate_demand(mut self, rate: f64) -> Self {
        self.rate_demand = Some(rate);
        self
    }

    pub fn class(&self) -> TrafficClass {
        match self.endpoints {
            Endpoints::PointToPoint { .. } => TrafficClass::PointToPoint,
            Endpoints::Dqc { .. } => TrafficClass::Dqc,
        }
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        match &self.endpoints {
            Endpoints::PointToPoint { src, dst } => vec![*src, *dst],
            Endpoints::Dqc { hosts, .. } => hosts.clone(),
        }
    }

    fn invalid(&self, msg: impl Into<String>) -> TrafficError {
        TrafficError::InvalidApp {
            app: self.id,
            msg: msg.into(),
        }
    }

    /// Checks the application on its own, without a network.
    pub fn check(&self) -> Result<(), TrafficError> {
        if !(self.min_fidelity > WERNER_FLOOR && self.min_fidelity <= 1.0) {
            return Err(self.invalid(format!(
                "min_fidelity {} outside (0.25, 1]",
                self.min_fidelity
            )));
        }
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(self.invalid(format!("weight {} must be > 0", self.weight)));
        }
        if let Some(r) = self.rate_demand {
            if !(r.is_finite() && r > 0.0) {
                return Err(self.invalid(format!("rate_demand {r} must be > 0")));
            }
        }
        match &self.endpoints {
            Endpoints::PointToPoint { src, dst } => {
                if src == dst {
                    return Err(self.invalid(format!("src and dst are both node {src}")));
                }
            }
            Endpoints::Dqc { hosts, pattern } => {
                let distinct: BTreeSet<_> = hosts.iter().collect();
                if distinct.len() != hosts.len() {
                    return Err(self.invalid("repeated host"));
                }
                if hosts.len() < 2 {
                    return Err(self.invalid("a DQC app needs at least 2 hosts"));
                }
                if let DqcPattern::Star { coordinator } = pattern {
                    if !distinct.contains(coordinator) {
                        return Err(self.invalid(format!(
                            "coordinator {coordinator} is not one of the hosts"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks the application against `net`.
    pub fn validate(&self, net: &Network) -> Result<(), TrafficError> {
        self.check()?;
        for n in self.nodes() {
            match net.node(n) {
                None => return Err(self.invalid(format!("unknown node {n}"))),
                Some(node) if node.kind != NodeKind::Endpoint => {
                    return Err(self.invalid(format!("node {n} is a repeater")))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// Validates a list of applications, including id uniqueness.
pub fn validate_apps(net: &Network, apps: &[App]) -> Result<(), TrafficError> {
    let mut ids = BTreeSet::new();
    for app in apps {
        app.validate(net)?;
        if !ids.insert(app.id) {
            return Err(app.invalid("duplicate app id"));
        }
    }
    Ok(())
}

/// Expands an application into its pair demands.
pub fn expand_app(app: &App) -> Result<Vec<PairDemand>, TrafficError> {
    app.check()?;
    let pairs: Vec<(NodeId, NodeId)> = match &app.endpoints {
        Endpoints::PointToPoint { src, dst } => vec![(*src, *dst)],
        Endpoints::Dqc {
            hosts,
            pattern: DqcPattern::AllPairs,
        } => hosts
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| hosts[i + 1..].iter().map(move |&b| (a, b)))
            .collect(),
        Endpoints::Dqc {
            hosts,
            pattern: DqcPattern::Star { coordinator },
        } => hosts
            .iter()
            .filter(|&h| h != coordinator)
            .map(|&h| (*coordinator, h))
            .collect(),
    };
    let group = (app.class() == TrafficClass::Dqc).then_some(app.id);
    Ok(pairs
        .into_iter()
        .enumerate()
        .map(|(index, pair)| PairDemand {
            app_id: app.id,
            index,
            pair,
            min_fidelity: app.min_fidelity,
            weight: app.weight,
            rate_demand: app.rate_demand,
            coupling_group: group,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    AllPairs,
    /// The first sampled host is the coordinator.
    Star,
}

/// Parameters of a random workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub n_apps: u32,
    /// Probability that an application is DQC rather than point-to-point.
    pub class_mix: f64,
    /// Inclusive range of DQC host counts.
    pub dqc_size_range: [u32; 2],
    pub fidelity_floor_range: [f64; 2],
    #[serde(default = "default_pattern")]
    pub dqc_pattern: PatternKind,
    #[serde(default)]
    pub rate_demand: Option<f64>,
}

fn default_pattern() -> PatternKind {
    PatternKind::AllPairs
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let cfg = |m: String| Err(TrafficError::Config(m));
        if !(0.0..=1.0).contains(&self.class_mix) {
            return cfg(format!("class_mix {} outside [0, 1]", self.class_mix));
        }
        let [lo, hi] = self.dqc_size_range;
        if lo < 2 || lo > hi {
            return cfg(format!("dqc_size_range [{lo}, {hi}] needs 2 <= lo <= hi"));
        }
        let [flo, fhi] = self.fidelity_floor_range;
        for f in [flo, fhi] {
            if !(f > WERNER_FLOOR && f <= 1.0) {
                return cfg(format!("fidelity_floor_range bound {f} outside (0.25, 1]"));
            }
        }
        if flo > fhi {
            return cfg("fidelity_floor_range lower bound above upper bound".into());
        }
        if let Some(r) = self.rate_demand {
            if !(r.is_finite() && r > 0.0) {
                return cfg(format!("rate_demand {r} must be > 0"));
            }
        }
        Ok(())
    }
}

/// Draws `spec.n_apps` applications over the endpoints of `net`.
///
/// Per application the generator consumes, in order: one class draw, one
/// DQC size draw (DQC only), the host sample, and one threshold draw. The
/// threshold draw always consumes one value, so narrowing the fidelity range
/// leaves classes and hosts unchanged.
pub fn generate_workload(
    seed: u64,
    net: &Network,
    spec: &WorkloadSpec,
) -> Result<Vec<App>, TrafficError> {
    spec.validate()?;
    let endpoints = net.endpoints();
    let needed = if spec.class_mix > 0.0 {
        spec.dqc_size_range[1].max(2)
    } else {
        2
    };
    if spec.n_apps > 0 && (endpoints.len() as u32) < needed {
        return Err(TrafficError::Config(format!(
            "network has {} endpoints, workload needs {needed}",
            endpoints.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut apps = Vec::with_capacity(spec.n_apps as usize);
    for id in 0..spec.n_apps {
        let is_dqc = rng.gen::<f64>() < spec.class_mix;
        let size = if is_dqc {
            let [lo, hi] = spec.dqc_size_range;
            rng.gen_range(lo..=hi) as usize
        } else {
            2
        };
        let hosts: Vec<NodeId> = sample(&mut rng, endpoints.len(), size)
            .into_iter()
            .map(|i| endpoints[i])
            .collect();
        let min_fidelity = draw_in(&mut rng, spec.fidelity_floor_range);
        let endpoints = if is_dqc {
            let pattern = match spec.dqc_pattern {
                PatternKind::AllPairs => DqcPattern::AllPairs,
                PatternKind::Star => DqcPattern::Star {
                    coordinator: hosts[0],
                },
            };
            Endpoints::Dqc { hosts, pattern }
        } else {
            Endpoints::PointToPoint {
                src: hosts[0],
                dst: hosts[1],
            }
        };
        apps.push(App {
            id: AppId(id),
            endpoints,
            min_fidelity,
            weight: 1.0,
            rate_demand: spec.rate_demand,
        });
    }
    Ok(apps)
}

/// Flat wire form of an [`App`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AppDoc {
    id: AppId,
    class: TrafficClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    src: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dst: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hosts: Option<Vec<NodeId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pattern: Option<PatternKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coordinator: Option<NodeId>,
    min_fidelity: f64,
    #[serde(default = "one")]
    weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rate_demand: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<AppDoc> for App {
    type Error = String;

    fn try_from(doc: AppDoc) -> Result<Self, String> {
        let id = doc.id;
        let endpoints = match doc.class {
            TrafficClass::PointToPoint => {
                if doc.hosts.is_some() || doc.pattern.is_some() || doc.coordinator.is_some() {
                    return Err(format!("app {id}: p2p apps take src/dst only"));
                }
                match (doc.src, doc.dst) {
                    (Some(src), Some(dst)) => Endpoints::PointToPoint { src, dst },
                    _ => return Err(format!("app {id}: p2p app needs src and dst")),
                }
            }
            TrafficClass::Dqc => {
                if doc.src.is_some() || doc.dst.is_some() {
                    return Err(format!("app {id}: dqc apps take hosts, not src/dst"));
                }
                let hosts = doc
                    .hosts
                    .ok_or_else(|| format!("app {id}: dqc app needs hosts"))?;
                let pattern = match (
                    doc.pattern.unwrap_or(PatternKind::AllPairs),
                    doc.coordinator,
                ) {
                    (PatternKind::AllPairs, None) => DqcPattern::AllPairs,
                    (PatternKind::AllPairs, Some(_)) => {
                        return Err(format!("app {id}: coordinator given for all_pairs pattern"))
                    }
                    (PatternKind::Star, Some(coordinator)) => DqcPattern::Star { coordinator },
                    (PatternKind::Star, None) => {
                        return Err(format!("app {id}: star pattern needs a coordinator"))
                    }
                };
                Endpoints::Dqc { hosts, pattern }
            }
        };
        Ok(App {
            id,
            endpoints,
            min_fidelity: doc.min_fidelity,
            weight: doc.weight,
            rate_demand: doc.rate_demand,
        })
    }
}

impl From<App> for AppDoc {
    fn from(app: App) -> Self {
        let mut doc = AppDoc {
            id: app.id,
            class: app.class(),
            src: None,
            dst: None,
            hosts: None,
            pattern: None,
            coordinator: None,
            min_fidelity: app.min_fidelity,
            weight: app.weight,
            rate_demand: app.rate_demand,
        };
        match app.endpoints {
            Endpoints::PointToPoint { src, dst } => {
                doc.src = Some(src);
                doc.dst = Some(dst);
            }
            Endpoints::Dqc { hosts, pattern } => {
                doc.hosts = Some(hosts);
                match pattern {
                    DqcPattern::AllPairs => doc.pattern = Some(PatternKind::AllPairs),
                    DqcPattern::Star { coordinator } => {
                        doc.pattern = Some(PatternKind::Star);
                        doc.coordinator = Some(coordinator);
                    }
                }
            }
        }
        doc
    }
}

/// Parses a JSON array of applications.
pub fn load_apps(text: &str) -> Result<Vec<App>, TrafficError> {
    serde_json::from_str(text).map_err(|e| TrafficError::Parse(e.to_string()))
}

pub fn save_apps(apps: &[App]) -> String {
    serde_json::to_string_pretty(apps).expect("app serialization cannot fail")
}
