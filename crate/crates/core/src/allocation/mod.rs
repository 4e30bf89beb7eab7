//! Entanglement-rate allocation.
//!
//! Every application becomes one *flow*: a point-to-point app is a single
//! demand, a DQC app is the group of its pair demands, which share a common
//! rate. A flow at rate `r` consumes `r` EPR pairs/s on every link of every
//! member path, so a link crossed by two member paths of the same flow is
//! charged `2r`.

mod oracle;
mod verify;

pub use oracle::{brute_force_fixed_paths, brute_force_optimal, Objective, OracleError};
pub use verify::{verify_allocation, Violation, ViolationKind};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fidelity::{FidelityError, OperationQuality};
use crate::routing::{feasible_paths, FeasiblePath, Path, RoutingError};
use crate::topology::{LinkIdx, Network, NodeId};
use crate::traffic::{expand_app, validate_apps, App, AppId, DemandKey, PairDemand, TrafficError};

/// Absolute tolerance for capacity and coupling checks.
pub const RATE_TOLERANCE: f64 = 1e-9;
/// A link is saturated once its residual drops below this fraction of its
/// capacity.
pub const SATURATION_FRACTION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Apps in order of descending weight take the bottleneck of their first
    /// feasible path.
    GreedyShortest,
    /// Progressive filling, all flows growing at the same speed.
    MaxMin,
    /// Progressive filling, each flow growing at the speed of its weight.
    WeightedMaxMin,
}

impl Policy {
    pub const ALL: [Policy; 3] = [
        Policy::GreedyShortest,
        Policy::MaxMin,
        Policy::WeightedMaxMin,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::GreedyShortest => "greedy_shortest",
            Policy::MaxMin => "max_min",
            Policy::WeightedMaxMin => "weighted_max_min",
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Policy {
    type Err = AllocationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| AllocationError::UnknownPolicy(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AllocationError {
    #[error("unknown policy {0:?} (valid: greedy_shortest, max_min, weighted_max_min)")]
    UnknownPolicy(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Fidelity(#[from] FidelityError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub demand: DemandKey,
    pub pair: (NodeId, NodeId),
    pub path: Path,
    pub fidelity: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NoFeasiblePath,
    Starved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub demand: DemandKey,
    pub pair: (NodeId, NodeId),
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Operation quality the path fidelities were computed with.
    pub ops: OperationQuality,
    pub assignments: Vec<Assignment>,
    /// Remaining capacity, indexed like [`Network::links`].
    pub residual: Vec<f64>,
    pub rejected: Vec<Rejection>,
}

impl Allocation {
    pub fn empty(net: &Network, ops: OperationQuality) -> Self {
        Self {
            ops,
            assignments: vec![],
            residual: net.links().iter().map(|l| l.capacity).collect(),
            rejected: vec![],
        }
    }

    /// Total rate assigned to each demand.
    pub fn demand_rates(&self) -> BTreeMap<DemandKey, f64> {
        let mut out = BTreeMap::new();
        for a in &self.assignments {
            *out.entry(a.demand).or_insert(0.0) += a.rate;
        }
        out
    }

    /// Rate of every application: the common rate of its demands when all of
    /// them are served, 0 otherwise.
    pub fn app_rates(&self, apps: &[App]) -> Vec<f64> {
        let rates = self.demand_rates();
        apps.iter()
            .map(|app| {
                let n = expand_app(app).map(|d| d.len()).unwrap_or(0);
                let mine: Vec<f64> = (0..n)
                    .map(|index| {
                        rates
                            .get(&DemandKey {
                                app_id: app.id,
                                index,
                            })
                            .copied()
                            .unwrap_or(0.0)
                    })
                    .collect();
                if mine.iter().all(|&r| r > 0.0) {
                    mine.iter().copied().fold(f64::INFINITY, f64::min)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Applications with a positive rate on every demand.
    pub fn admitted(&self, apps: &[App]) -> Vec<AppId> {
        apps.iter()
            .zip(self.app_rates(apps))
            .filter(|(_, r)| *r > 0.0)
            .map(|(a, _)| a.id)
            .collect()
    }

    pub fn to_doc(&self, net: &Network) -> AllocationDoc {
        AllocationDoc {
            ops: self.ops,
            assignments: self
                .assignments
                .iter()
                .map(|a| AssignmentDoc {
                    app_id: a.demand.app_id,
                    demand_index: a.demand.index,
                    pair: [a.pair.0, a.pair.1],
                    path: a.path.nodes().to_vec(),
                    fidelity: a.fidelity,
                    rate: a.rate,
                })
                .collect(),
            residual: net
                .links()
                .iter()
                .zip(&self.residual)
                .map(|(l, r)| (l.label(), *r))
                .collect(),
            rejected: self
                .rejected
                .iter()
                .map(|r| RejectionDoc {
                    app_id: r.demand.app_id,
                    demand_index: r.demand.index,
                    pair: [r.pair.0, r.pair.1],
                    reason: r.reason,
                })
                .collect(),
        }
    }

    pub fn to_json(&self, net: &Network) -> String {
        serde_json::to_string_pretty(&self.to_doc(net))
            .expect("allocation serialization cannot fail")
    }
}

/// Wire form of an [`Allocation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationDoc {
    pub ops: OperationQuality,
    pub assignments: Vec<AssignmentDoc>,
    /// Residual capacity keyed by `"u-v"`.
    pub residual: BTreeMap<String, f64>,
    pub rejected: Vec<RejectionDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentDoc {
    pub app_id: AppId,
    pub demand_index: usize,
    pub pair: [NodeId; 2],
    pub path: Vec<NodeId>,
    pub fidelity: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RejectionDoc {
    pub app_id: AppId,
    pub demand_index: usize,
    pub pair: [NodeId; 2],
    pub reason: RejectReason,
}

impl AllocationDoc {
    /// Resolves paths and residual keys against `net`.
    pub fn into_allocation(self, net: &Network) -> Result<Allocation, String> {
        let assignments = self
            .assignments
            .into_iter()
            .enumerate()
            .map(|(i, a)| {
                let path = Path::from_nodes(net, a.path)
                    .map_err(|e| format!("assignments[{i}].path: {e}"))?;
                Ok(Assignment {
                    demand: DemandKey {
                        app_id: a.app_id,
                        index: a.demand_index,
                    },
                    pair: (a.pair[0], a.pair[1]),
                    path,
                    fidelity: a.fidelity,
                    rate: a.rate,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        let mut residual = Vec::with_capacity(net.link_count());
        for l in net.links() {
            let r = self
                .residual
                .get(&l.label())
                .ok_or_else(|| format!("residual: missing link {}", l.label()))?;
            residual.push(*r);
        }
        if self.residual.len() != net.link_count() {
            return Err("residual: keys do not match the network links".into());
        }
        Ok(Allocation {
            ops: self.ops,
            assignments,
            residual,
            rejected: self
                .rejected
                .into_iter()
                .map(|r| Rejection {
                    demand: DemandKey {
                        app_id: r.app_id,
                        index: r.demand_index,
                    },
                    pair: (r.pair[0], r.pair[1]),
                    reason: r.reason,
                })
                .collect(),
        })
    }
}

/// An application's demands with their feasible candidate paths.
#[derive(Debug, Clone)]
pub(crate) struct RoutedApp {
    pub(crate) demands: Vec<PairDemand>,
    pub(crate) candidates: Vec<Vec<FeasiblePath>>,
    pub(crate) weight: f64,
    pub(crate) cap: Option<f64>,
}

impl RoutedApp {
    /// Whether every demand has at least one feasible path. A DQC app is
    /// served in full or not at all.
    pub(crate) fn routable(&self) -> bool {
        self.candidates.iter().all(|c| !c.is_empty())
    }
}

/// Validates the inputs and computes feasible candidates for every demand.
pub(crate) fn route_apps(
    net: &Network,
    apps: &[App],
    ops: &OperationQuality,
    k: usize,
) -> Result<Vec<RoutedApp>, AllocationError> {
    if k == 0 {
        return Err(AllocationError::ZeroK);
    }
    ops.validate()?;
    validate_apps(net, apps)?;
    apps.iter()
        .map(|app| {
            let demands = expand_app(app)?;
            let candidates = demands
                .iter()
                .map(|d| feasible_paths(net, d, k, ops))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(RoutedApp {
                demands,
                candidates,
                weight: app.weight,
                cap: app.rate_demand,
            })
        })
        .collect()
}

/// Per-link usage count of a flow whose demands follow `paths`.
pub(crate) fn link_usage(paths: &[&Path]) -> BTreeMap<LinkIdx, f64> {
    let mut usage = BTreeMap::new();
    for p in paths {
        for &l in p.links() {
            *usage.entry(l).or_insert(0.0) += 1.0;
        }
    }
    usage
}

/// Assembles an [`Allocation`] from a path choice and one rate per app.
///
/// `choice[a]` holds the chosen candidate index of each demand of app `a`
/// (ignored for unroutable apps), `rates[a]` its common rate.
pub(crate) fn assemble(
    net: &Network,
    ops: OperationQuality,
    routed: &[RoutedApp],
    choice: &[Vec<usize>],
    rates: &[f64],
) -> Allocation {
    let mut alloc = Allocation::empty(net, ops);
    let mut load = vec![0.0; net.link_count()];
    for (a, app) in routed.iter().enumerate() {
        let reason = if !app.routable() {
            Some(RejectReason::NoFeasiblePath)
        } else if rates[a].is_nan() || rates[a] <= 0.0 {
            Some(RejectReason::Starved)
        } else {
            None
        };
        for (d, demand) in app.demands.iter().enumerate() {
            match reason {
                Some(reason) => alloc.rejected.push(Rejection {
                    demand: demand.key(),
                    pair: demand.pair,
                    reason,
                }),
                None => {
                    let fp = &app.candidates[d][choice[a][d]];
                    for &l in fp.path.links() {
                        load[l] += rates[a];
                    }
                    alloc.assignments.push(Assignment {
                        demand: demand.key(),
                        pair: demand.pair,
                        path: fp.path.clone(),
                        fidelity: fp.fidelity,
                        rate: rates[a],
                    });
                }
            }
        }
    }
    for (l, link) in net.links().iter().enumerate() {
        alloc.residual[l] = link.capacity - load[l];
    }
    alloc
}

/// Allocates link entanglement rates to `apps` under `policy`, routing each
/// demand on its first feasible path among the `k` shortest.
pub fn allocate(
    net: &Network,
    apps: &[App],
    policy: Policy,
    ops: &OperationQuality,
    k: usize,
) -> Result<Allocation, AllocationError> {
    let routed = route_apps(net, apps, ops, k)?;
    let choice: Vec<Vec<usize>> = routed.iter().map(|r| vec![0; r.demands.len()]).collect();
    let rates = match policy {
        Policy::GreedyShortest => greedy(net, &routed),
        Policy::MaxMin => progressive_filling(net, &routed, false),
        Policy::WeightedMaxMin => progressive_filling(net, &routed, true),
    };
    Ok(assemble(net, *ops, &routed, &choice, &rates))
}

fn first_paths(app: &RoutedApp) -> Vec<&Path> {
    app.candidates.iter().map(|c| &c[0].path).collect()
}

fn greedy(net: &Network, routed: &[RoutedApp]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..routed.len())
        .filter(|&a| routed[a].routable())
        .collect();
    order.sort_by(|&x, &y| {
        routed[y].weight.total_cmp(&routed[x].weight).then(
            routed[x].demands[0]
                .app_id
                .cmp(&routed[y].demands[0].app_id),
        )
    });
    let mut residual: Vec<f64> = net.links().iter().map(|l| l.capacity).collect();
    let mut rates = vec![0.0; routed.len()];
    for a in order {
        let usage = link_usage(&first_paths(&routed[a]));
        let bottleneck = usage
            .iter()
            .map(|(&l, &n)| residual[l].max(0.0) / n)
            .fold(f64::INFINITY, f64::min);
        let rate = routed[a].cap.map_or(bottleneck, |c| c.min(bottleneck));
        let smallest_cap = usage
            .keys()
            .map(|&l| net.link(l).capacity)
            .fold(f64::INFINITY, f64::min);
        if rate <= SATURATION_FRACTION * smallest_cap {
            continue;
        }
        rates[a] = rate;
        for (&l, &n) in &usage {
            residual[l] -= n * rate;
        }
    }
    rates
}

/// Progressive filling: all unfrozen flows grow together (at the speed of
/// their weight when `weighted`) until a link saturates or a cap is hit;
/// flows crossing a saturated link and capped flows freeze.
fn progressive_filling(net: &Network, routed: &[RoutedApp], weighted: bool) -> Vec<f64> {
    let mut rates = vec![0.0; routed.len()];
    let usage: Vec<BTreeMap<LinkIdx, f64>> = routed
        .iter()
        .map(|r| {
            if r.routable() {
                link_usage(&first_paths(r))
            } else {
                BTreeMap::new()
            }
        })
        .collect();
    let speed: Vec<f64> = routed
        .iter()
        .map(|r| if weighted { r.weight } else { 1.0 })
        .collect();
    let capacity: Vec<f64> = net.links().iter().map(|l| l.capacity).collect();
    let mut residual = capacity.clone();
    let mut saturated = vec![false; capacity.len()];
    let mut active: Vec<usize> = (0..routed.len())
        .filter(|&a| routed[a].routable())
        .collect();

    while !active.is_empty() {
        let mut load = vec![0.0; capacity.len()];
        for &a in &active {
            for (&l, &n) in &usage[a] {
                load[l] += n * speed[a];
            }
        }
        let mut step = f64::INFINITY;
        for (l, &demand) in load.iter().enumerate() {
            if demand > 0.0 {
                step = step.min(residual[l].max(0.0) / demand);
            }
        }
        for &a in &active {
            if let Some(cap) = routed[a].cap {
                step = step.min(((cap - rates[a]) / speed[a]).max(0.0));
            }
        }
        debug_assert!(step.is_finite());

        for &a in &active {
            rates[a] += speed[a] * step;
        }
        for (l, &demand) in load.iter().enumerate() {
            if demand > 0.0 {
                residual[l] -= demand * step;
                if residual[l] < SATURATION_FRACTION * capacity[l] {
                    saturated[l] = true;
                }
            }
        }
        let before = active.len();
        active.retain(|&a| {
            let capped = routed[a]
                .cap
                .is_some_and(|c| c - rates[a] <= SATURATION_FRACTION * c);
            if capped {
                rates[a] = routed[a].cap.unwrap();
            }
            !capped && !usage[a].keys().any(|&l| saturated[l])
        });
        if active.len() == before {
            // Rounding left the bottleneck a hair above the threshold.
            let tightest = (0..load.len())
                .filter(|&l| load[l] > 0.0)
                .min_by(|&x, &y| (residual[x] / load[x]).total_cmp(&(residual[y] / load[y])))
                .unwrap();
            saturated[tightest] = true;
            active.retain(|&a| !usage[a].contains_key(&tightest));
        }
    }
    rates
}
