use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Allocation, RATE_TOLERANCE};
use crate::routing::Path;
use crate::topology::Network;
use crate::traffic::{expand_app, App, AppId, DemandKey, PairDemand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    CapacityExceeded,
    CouplingViolated,
    FidelityBelowThreshold,
    InvalidPath,
    NegativeRate,
    RateAboveDemand,
    ResidualMismatch,
    UnknownDemand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Link key (`"u-v"`), demand key (`"app#index"`) or app id.
    pub subject: String,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} at {}: {}", self.kind, self.subject, self.detail)
    }
}

/// Checks every invariant of an allocation; an empty result means the
/// allocation is consistent with `net` and `apps`.
pub fn verify_allocation(net: &Network, apps: &[App], alloc: &Allocation) -> Vec<Violation> {
    let mut out = vec![];
    let mut push = |kind, subject: String, detail: String| {
        out.push(Violation {
            kind,
            subject,
            detail,
        })
    };

    let mut demands: BTreeMap<DemandKey, PairDemand> = BTreeMap::new();
    let mut groups: BTreeMap<AppId, Vec<DemandKey>> = BTreeMap::new();
    for app in apps {
        for d in expand_app(app).unwrap_or_default() {
            if let Some(g) = d.coupling_group {
                groups.entry(g).or_default().push(d.key());
            }
            demands.insert(d.key(), d);
        }
    }

    let mut load = vec![0.0; net.link_count()];
    let mut per_demand: BTreeMap<DemandKey, f64> = BTreeMap::new();
    for a in &alloc.assignments {
        let subject = a.demand.to_string();
        if a.rate.is_nan() || a.rate < 0.0 {
            push(
                ViolationKind::NegativeRate,
                subject.clone(),
                format!("rate {}", a.rate),
            );
        }
        let Some(demand) = demands.get(&a.demand) else {
            push(
                ViolationKind::UnknownDemand,
                subject,
                "no such demand in the workload".into(),
            );
            continue;
        };
        *per_demand.entry(a.demand).or_insert(0.0) += a.rate;

        // Re-derive the path from its nodes so that stale link indices are
        // caught as well.
        let path = match Path::from_nodes(net, a.path.nodes().to_vec()) {
            Ok(p) if p.links() == a.path.links() => p,
            Ok(_) => {
                push(
                    ViolationKind::InvalidPath,
                    subject,
                    "link sequence does not match nodes".into(),
                );
                continue;
            }
            Err(e) => {
                push(ViolationKind::InvalidPath, subject, e.to_string());
                continue;
            }
        };
        let (s, t) = (path.source(), path.destination());
        let (a0, b0) = demand.pair;
        if !((s == a0 && t == b0) || (s == b0 && t == a0)) {
            push(
                ViolationKind::InvalidPath,
                subject.clone(),
                format!("path joins {s}-{t}, demand is {a0}-{b0}"),
            );
        }
        match path.fidelity(net, &alloc.ops) {
            Ok(f) if f >= demand.min_fidelity => {}
            Ok(f) => push(
                ViolationKind::FidelityBelowThreshold,
                subject.clone(),
                format!("fidelity {f} < {}", demand.min_fidelity),
            ),
            Err(e) => push(
                ViolationKind::FidelityBelowThreshold,
                subject.clone(),
                e.to_string(),
            ),
        }
        for &l in path.links() {
            load[l] += a.rate;
        }
    }

    for (key, &rate) in &per_demand {
        if let Some(cap) = demands[key].rate_demand {
            if rate > cap + RATE_TOLERANCE {
                push(
                    ViolationKind::RateAboveDemand,
                    key.to_string(),
                    format!("rate {rate} > demand {cap}"),
                );
            }
        }
    }

    for (l, link) in net.links().iter().enumerate() {
        if load[l] > link.capacity + RATE_TOLERANCE {
            push(
                ViolationKind::CapacityExceeded,
                link.label(),
                format!("load {} > capacity {}", load[l], link.capacity),
            );
        }
        match alloc.residual.get(l) {
            Some(r) if (r - (link.capacity - load[l])).abs() <= RATE_TOLERANCE => {}
            Some(r) => push(
                ViolationKind::ResidualMismatch,
                link.label(),
                format!("residual {r}, expected {}", link.capacity - load[l]),
            ),
            None => push(
                ViolationKind::ResidualMismatch,
                link.label(),
                "missing residual".into(),
            ),
        }
    }
    if alloc.residual.len() > net.link_count() {
        push(
            ViolationKind::ResidualMismatch,
            "residual".into(),
            format!(
                "{} entries for {} links",
                alloc.residual.len(),
                net.link_count()
            ),
        );
    }

    for (group, keys) in &groups {
        let served: Vec<f64> = keys
            .iter()
            .filter_map(|k| per_demand.get(k).copied())
            .collect();
        if served.is_empty() {
            continue;
        }
        let lo = served.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = served.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if served.len() != keys.len() {
            push(
                ViolationKind::CouplingViolated,
                group.to_string(),
                format!("{} of {} demands served", served.len(), keys.len()),
            );
        } else if hi - lo > RATE_TOLERANCE {
            push(
                ViolationKind::CouplingViolated,
                group.to_string(),
                format!("rates span [{lo}, {hi}]"),
            );
        }
    }
    out
}
