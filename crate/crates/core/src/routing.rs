//! Candidate path enumeration and fidelity-based path filtering.
//!
//! Paths are ranked by hop count, ties broken by the lexicographic order of
//! their node sequences, so that the `k` candidates of a node pair are fully
//! determined by the network.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::fidelity::{path_fidelity, werner_weight, FidelityError, OperationQuality};
use crate::topology::{LinkIdx, Network, NodeId};
use crate::traffic::PairDemand;

/// Number of candidate paths considered per demand unless configured.
pub const DEFAULT_K: usize = 4;

/// Loop-free path through the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    nodes: Vec<NodeId>,
    links: Vec<LinkIdx>,
}

impl Path {
    /// Builds a path from its node sequence, checking that it is simple and
    /// that consecutive nodes are adjacent.
    pub fn from_nodes(net: &Network, nodes: Vec<NodeId>) -> Result<Self, RoutingError> {
        if nodes.len() < 2 {
            return Err(RoutingError::InvalidPath("fewer than 2 nodes".into()));
        }
        let distinct: BTreeSet<_> = nodes.iter().collect();
        if distinct.len() != nodes.len() {
            return Err(RoutingError::InvalidPath("repeated node".into()));
        }
        let links = nodes
            .windows(2)
            .map(|w| {
                net.find_link(w[0], w[1]).ok_or_else(|| {
                    RoutingError::InvalidPath(format!("no link between {} and {}", w[0], w[1]))
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { nodes, links })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkIdx] {
        &self.links
    }

    pub fn hop_count(&self) -> usize {
        self.links.len()
    }

    /// Number of swapping repeaters along the path.
    pub fn num_intermediate(&self) -> usize {
        self.links.len() - 1
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn destination(&self) -> NodeId {
        self.nodes[self.nodes.len() - 1]
    }

    /// End-to-end fidelity of entanglement swapped along this path.
    pub fn fidelity(&self, net: &Network, ops: &OperationQuality) -> Result<f64, FidelityError> {
        let weights = self
            .links
            .iter()
            .map(|&l| werner_weight(net.link(l).elementary_fidelity))
            .collect::<Result<Vec<_>, _>>()?;
        path_fidelity(&weights, ops)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RoutingError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("source and destination are both node {0}")]
    SameEndpoints(NodeId),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error(transparent)]
    Fidelity(#[from] FidelityError),
}

/// Lexicographically smallest among the minimum-hop paths from `src` to
/// `dst` that avoid `banned_nodes` and `banned_links`.
fn shortest_path(
    net: &Network,
    src: NodeId,
    dst: NodeId,
    banned_nodes: &BTreeSet<NodeId>,
    banned_links: &BTreeSet<LinkIdx>,
) -> Option<Vec<NodeId>> {
    let mut dist: BTreeMap<NodeId, usize> = BTreeMap::from([(dst, 0)]);
    let mut queue = VecDeque::from([dst]);
    while let Some(n) = queue.pop_front() {
        if n == src {
            break;
        }
        let d = dist[&n];
        for &(m, l) in net.neighbors(n) {
            if banned_nodes.contains(&m) || banned_links.contains(&l) || dist.contains_key(&m) {
                continue;
            }
            dist.insert(m, d + 1);
            queue.push_back(m);
        }
    }
    let mut remaining = *dist.get(&src)?;
    let mut path = vec![src];
    let mut at = src;
    while at != dst {
        // Neighbours are sorted by id, so the first match is the smallest.
        let (next, _) =
            net.neighbors(at).iter().copied().find(|&(m, l)| {
                !banned_links.contains(&l) && dist.get(&m) == Some(&(remaining - 1))
            })?;
        path.push(next);
        at = next;
        remaining -= 1;
    }
    Some(path)
}

/// Up to `k` loop-free paths from `src` to `dst` (Yen's algorithm over hop
/// count). An empty list means the nodes are disconnected.
pub fn k_shortest_paths(
    net: &Network,
    src: NodeId,
    dst: NodeId,
    k: usize,
) -> Result<Vec<Path>, RoutingError> {
    for n in [src, dst] {
        if !net.contains(n) {
            return Err(RoutingError::UnknownNode(n));
        }
    }
    if src == dst {
        return Err(RoutingError::SameEndpoints(src));
    }
    if k == 0 {
        return Err(RoutingError::ZeroK);
    }
    let Some(first) = shortest_path(net, src, dst, &BTreeSet::new(), &BTreeSet::new()) else {
        return Ok(vec![]);
    };
    let mut accepted: Vec<Vec<NodeId>> = vec![first];
    let mut candidates: BTreeSet<(usize, Vec<NodeId>)> = BTreeSet::new();
    while accepted.len() < k {
        let prev = accepted.last().unwrap().clone();
        for i in 0..prev.len() - 1 {
            let root = &prev[..=i];
            let banned_links: BTreeSet<LinkIdx> = accepted
                .iter()
                .filter(|p| p.len() > i + 1 && &p[..=i] == root)
                .filter_map(|p| net.find_link(p[i], p[i + 1]))
                .collect();
            let banned_nodes: BTreeSet<NodeId> = root[..i].iter().copied().collect();
            if let Some(spur) = shortest_path(net, prev[i], dst, &banned_nodes, &banned_links) {
                let mut total = root[..i].to_vec();
                total.extend(spur);
                if !accepted.contains(&total) {
                    candidates.insert((total.len(), total));
                }
            }
        }
        match candidates.pop_first() {
            Some((_, p)) => accepted.push(p),
            None => break,
        }
    }
    accepted
        .into_iter()
        .map(|nodes| Path::from_nodes(net, nodes))
        .collect()
}

/// A candidate path that meets its demand's fidelity threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasiblePath {
    pub path: Path,
    pub fidelity: f64,
}

/// The `k` shortest paths of `demand` whose end-to-end fidelity reaches the
/// demand threshold, in ranking order.
pub fn feasible_paths(
    net: &Network,
    demand: &PairDemand,
    k: usize,
    ops: &OperationQuality,
) -> Result<Vec<FeasiblePath>, RoutingError> {
    let (src, dst) = demand.pair;
    let mut out = vec![];
    for path in k_shortest_paths(net, src, dst, k)? {
        let fidelity = path.fidelity(net, ops)?;
        if fidelity >= demand.min_fidelity {
            out.push(FeasiblePath { path, fidelity });
        }
    }
    Ok(out)
}
