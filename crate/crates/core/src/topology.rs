//! Quantum network graph: endpoints and repeaters joined by undirected
//! entanglement-generating links.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fidelity::WERNER_FLOOR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a link inside [`Network::links`].
pub type LinkIdx = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    /// Quantum computer: may source and sink application demands.
    Endpoint,
    /// Swapping repeater: forwards entanglement only.
    Repeater,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Undirected link, stored with `u < v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub u: NodeId,
    pub v: NodeId,
    /// EPR pairs per second.
    #[serde(rename = "capacity_eprps")]
    pub capacity: f64,
    /// Elementary fidelity of the pairs generated on this link.
    #[serde(rename = "fidelity")]
    pub elementary_fidelity: f64,
}

impl Link {
    pub fn key(&self) -> (NodeId, NodeId) {
        (self.u, self.v)
    }

    /// The endpoint opposite to `n`.
    pub fn other(&self, n: NodeId) -> NodeId {
        if n == self.u {
            self.v
        } else {
            self.u
        }
    }

    /// `"u-v"` key used in serialized residual maps.
    pub fn label(&self) -> String {
        format!("{}-{}", self.u, self.v)
    }
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
    #[error("malformed network document: {0}")]
    Parse(String),
}

impl TopologyError {
    fn at(path: impl Into<String>, msg: impl Into<String>) -> Self {
        TopologyError::Invalid {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

fn check_capacity(path: &str, capacity: f64) -> Result<(), TopologyError> {
    if capacity.is_finite() && capacity > 0.0 {
        Ok(())
    } else {
        Err(TopologyError::at(
            path,
            format!("capacity {capacity} must be finite and > 0"),
        ))
    }
}

fn check_fidelity(path: &str, fidelity: f64) -> Result<(), TopologyError> {
    if fidelity > WERNER_FLOOR && fidelity <= 1.0 {
        Ok(())
    } else {
        Err(TopologyError::at(
            path,
            format!("fidelity {fidelity} outside (0.25, 1]"),
        ))
    }
}

/// Immutable network graph.
///
/// Links are kept sorted by `(u, v)`, and the adjacency list of every node is
/// sorted by neighbour id so that traversals are deterministic.
#[derive(Debug, Clone)]
pub struct Network {
    nodes: BTreeMap<NodeId, Node>,
    links: Vec<Link>,
    link_index: BTreeMap<(NodeId, NodeId), LinkIdx>,
    adjacency: BTreeMap<NodeId, Vec<(NodeId, LinkIdx)>>,
    metadata: BTreeMap<String, String>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.links == other.links && self.metadata == other.metadata
    }
}

impl Network {
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, idx: LinkIdx) -> &Link {
        &self.links[idx]
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn find_link(&self, a: NodeId, b: NodeId) -> Option<LinkIdx> {
        self.link_index.get(&ordered(a, b)).copied()
    }

    /// Neighbours of `n` with the connecting link, in ascending neighbour id.
    pub fn neighbors(&self, n: NodeId) -> &[(NodeId, LinkIdx)] {
        self.adjacency.get(&n).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn endpoints(&self) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.kind == NodeKind::Endpoint)
            .map(|n| n.id)
            .collect()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<(), TopologyError> {
        for (id, node) in &self.nodes {
            if *id != node.id {
                return Err(TopologyError::at(
                    format!("nodes[{id}]"),
                    "node indexed under a different id",
                ));
            }
        }
        let mut seen = BTreeSet::new();
        for (i, link) in self.links.iter().enumerate() {
            let path = format!("links[{i}]");
            if link.u == link.v {
                return Err(TopologyError::at(
                    path,
                    format!("self-loop on node {}", link.u),
                ));
            }
            if link.u > link.v {
                return Err(TopologyError::at(path, "endpoints not normalized (u > v)"));
            }
            for end in [link.u, link.v] {
                if !self.nodes.contains_key(&end) {
                    return Err(TopologyError::at(
                        path,
                        format!("link {} references unknown node {end}", link.label()),
                    ));
                }
            }
            if !seen.insert(link.key()) {
                return Err(TopologyError::at(
                    path,
                    format!("duplicate link {}", link.label()),
                ));
            }
            check_capacity(&format!("{path}.capacity_eprps"), link.capacity)?;
            check_fidelity(&format!("{path}.fidelity"), link.elementary_fidelity)?;
            if self.link_index.get(&link.key()) != Some(&i) {
                return Err(TopologyError::at(path, "link index out of sync"));
            }
        }
        for (n, adj) in &self.adjacency {
            for &(m, l) in adj {
                let back = self.neighbors(m).iter().any(|&(x, y)| x == *n && y == l);
                if !back {
                    return Err(TopologyError::at(
                        format!("adjacency[{n}]"),
                        format!("asymmetric adjacency with {m}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Subnetwork induced by `keep`.
    fn induced(&self, keep: &BTreeSet<NodeId>) -> NetworkBuilder {
        let mut b = NetworkBuilder::new();
        for id in keep {
            b.add_node(self.nodes[id].clone());
        }
        for link in &self.links {
            if keep.contains(&link.u) && keep.contains(&link.v) {
                b.push_link(link.clone());
            }
        }
        b.metadata = self.metadata.clone();
        b
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<BTreeSet<NodeId>> {
        let mut seen = BTreeSet::new();
        let mut out = vec![];
        for &start in self.nodes.keys() {
            if !seen.insert(start) {
                continue;
            }
            let mut comp = BTreeSet::from([start]);
            let mut queue = VecDeque::from([start]);
            while let Some(n) = queue.pop_front() {
                for &(m, _) in self.neighbors(n) {
                    if seen.insert(m) {
                        comp.insert(m);
                        queue.push_back(m);
                    }
                }
            }
            out.push(comp);
        }
        out
    }
}

/// Incremental construction of a [`Network`].
///
/// Parallel links between the same node pair are merged: capacities add up
/// and the lower of the two fidelities is kept.
#[derive(Debug, Clone, Default)]
pub struct NetworkBuilder {
    nodes: Vec<Node>,
    links: Vec<Link>,
    metadata: BTreeMap<String, String>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: Node) -> &mut Self {
        self.nodes.push(node);
        self
    }

    pub fn endpoint(&mut self, id: u32) -> &mut Self {
        self.add_node(Node {
            id: NodeId(id),
            kind: NodeKind::Endpoint,
            label: None,
        })
    }

    pub fn repeater(&mut self, id: u32) -> &mut Self {
        self.add_node(Node {
            id: NodeId(id),
            kind: NodeKind::Repeater,
            label: None,
        })
    }

    pub fn link(&mut self, u: u32, v: u32, capacity: f64, fidelity: f64) -> &mut Self {
        self.push_link(Link {
            u: NodeId(u),
            v: NodeId(v),
            capacity,
            elementary_fidelity: fidelity,
        })
    }

    pub fn push_link(&mut self, link: Link) -> &mut Self {
        self.links.push(link);
        self
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn build(&self) -> Result<Network, TopologyError> {
        let mut nodes = BTreeMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if nodes.insert(node.id, node.clone()).is_some() {
                return Err(TopologyError::at(
                    format!("nodes[{i}].id"),
                    format!("duplicate node id {}", node.id),
                ));
            }
        }
        let mut merged: BTreeMap<(NodeId, NodeId), Link> = BTreeMap::new();
        for (i, link) in self.links.iter().enumerate() {
            let path = format!("links[{i}]");
            if link.u == link.v {
                return Err(TopologyError::at(
                    path,
                    format!("self-loop on node {}", link.u),
                ));
            }
            for (field, end) in [("u", link.u), ("v", link.v)] {
                if !nodes.contains_key(&end) {
                    return Err(TopologyError::at(
                        format!("{path}.{field}"),
                        format!("unknown node {end}"),
                    ));
                }
            }
            check_capacity(&format!("{path}.capacity_eprps"), link.capacity)?;
            check_fidelity(&format!("{path}.fidelity"), link.elementary_fidelity)?;
            let (u, v) = ordered(link.u, link.v);
            merged
                .entry((u, v))
                .and_modify(|l| {
                    l.capacity += link.capacity;
                    l.elementary_fidelity = l.elementary_fidelity.min(link.elementary_fidelity);
                })
                .or_insert_with(|| Link {
                    u,
                    v,
                    capacity: link.capacity,
                    elementary_fidelity: link.elementary_fidelity,
                });
        }
        let links: Vec<Link> = merged.into_values().collect();
        let mut link_index = BTreeMap::new();
        let mut adjacency: BTreeMap<NodeId, Vec<(NodeId, LinkIdx)>> =
            nodes.keys().map(|&id| (id, vec![])).collect();
        for (i, link) in links.iter().enumerate() {
            link_index.insert(link.key(), i);
            adjacency.get_mut(&link.u).unwrap().push((link.v, i));
            adjacency.get_mut(&link.v).unwrap().push((link.u, i));
        }
        for adj in adjacency.values_mut() {
            adj.sort_unstable();
        }
        let net = Network {
            nodes,
            links,
            link_index,
            adjacency,
            metadata: self.metadata.clone(),
        };
        net.validate()?;
        Ok(net)
    }
}

/// Lattice generator options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: u32,
    pub cols: u32,
    pub capacity: f64,
    pub fidelity: f64,
    /// Mark nodes not on the border as repeaters.
    #[serde(default)]
    pub interior_repeaters: bool,
}

/// `rows x cols` lattice with node `r * cols + c` at row `r`, column `c`.
pub fn build_grid(
    rows: u32,
    cols: u32,
    capacity: f64,
    elementary_fidelity: f64,
) -> Result<Network, TopologyError> {
    GridSpec {
        rows,
        cols,
        capacity,
        fidelity: elementary_fidelity,
        interior_repeaters: false,
    }
    .build()
}

impl GridSpec {
    pub fn build(&self) -> Result<Network, TopologyError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(TopologyError::at(
                "grid",
                format!(
                    "dimensions {}x{} must be at least 1x1",
                    self.rows, self.cols
                ),
            ));
        }
        self.rows
            .checked_mul(self.cols)
            .ok_or_else(|| TopologyError::at("grid", "too many nodes"))?;
        check_capacity("capacity", self.capacity)?;
        check_fidelity("fidelity", self.fidelity)?;

        let id = |r: u32, c: u32| r * self.cols + c;
        let mut b = NetworkBuilder::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let border = r == 0 || c == 0 || r + 1 == self.rows || c + 1 == self.cols;
                if self.interior_repeaters && !border {
                    b.repeater(id(r, c));
                } else {
                    b.endpoint(id(r, c));
                }
            }
        }
        for r in 0..self.rows {
            for c in 0..self.cols {
                if c + 1 < self.cols {
                    b.link(id(r, c), id(r, c + 1), self.capacity, self.fidelity);
                }
                if r + 1 < self.rows {
                    b.link(id(r, c), id(r + 1, c), self.capacity, self.fidelity);
                }
            }
        }
        b.meta("generator", "grid")
            .meta("rows", self.rows)
            .meta("cols", self.cols);
        b.build()
    }
}

/// Erdős–Rényi generator options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub nodes: u32,
    pub edge_prob: f64,
    pub capacity_range: [f64; 2],
    pub fidelity_range: [f64; 2],
}

/// Uniform draw in `[lo, hi]`; always consumes exactly one value from `rng`.
pub(crate) fn draw_in(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    let u: f64 = rng.gen();
    lo + (hi - lo) * u
}

/// Random graph over nodes `0..n`; each pair is linked with probability
/// `edge_prob`. Only the largest connected component is kept (ties go to
/// the component holding the smallest node id).
pub fn generate_random(
    seed: u64,
    n: u32,
    edge_prob: f64,
    capacity_range: [f64; 2],
    fidelity_range: [f64; 2],
) -> Result<Network, TopologyError> {
    RandomSpec {
        nodes: n,
        edge_prob,
        capacity_range,
        fidelity_range,
    }
    .generate(seed)
}

impl RandomSpec {
    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.nodes < 2 {
            return Err(TopologyError::at(
                "nodes",
                format!("need at least 2 nodes, got {}", self.nodes),
            ));
        }
        if !(self.edge_prob > 0.0 && self.edge_prob <= 1.0) {
            return Err(TopologyError::at(
                "edge_prob",
                format!("{} outside (0, 1]", self.edge_prob),
            ));
        }
        let [clo, chi] = self.capacity_range;
        check_capacity("capacity_range[0]", clo)?;
        check_capacity("capacity_range[1]", chi)?;
        let [flo, fhi] = self.fidelity_range;
        check_fidelity("fidelity_range[0]", flo)?;
        check_fidelity("fidelity_range[1]", fhi)?;
        if clo > chi {
            return Err(TopologyError::at(
                "capacity_range",
                "lower bound above upper bound",
            ));
        }
        if flo > fhi {
            return Err(TopologyError::at(
                "fidelity_range",
                "lower bound above upper bound",
            ));
        }
        Ok(())
    }

    pub fn generate(&self, seed: u64) -> Result<Network, TopologyError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = NetworkBuilder::new();
        for i in 0..self.nodes {
            b.endpoint(i);
        }
        for i in 0..self.nodes {
            for j in i + 1..self.nodes {
                let coin: f64 = rng.gen();
                if coin < self.edge_prob {
                    let capacity = draw_in(&mut rng, self.capacity_range);
                    let fidelity = draw_in(&mut rng, self.fidelity_range);
                    b.link(i, j, capacity, fidelity);
                }
            }
        }
        let full = b.build()?;
        let comps = full.components();
        let largest = comps
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
            .map(|(_, c)| c.clone())
            .unwrap_or_default();
        let mut b = full.induced(&largest);
        b.meta("generator", "random")
            .meta("seed", seed)
            .meta("components", comps.len())
            .meta("kept_component_size", largest.len())
            .meta(
                "kept_component_min_id",
                largest.first().map(|n| n.0).unwrap_or_default(),
            );
        b.build()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    nodes: Vec<Node>,
    links: Vec<Link>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metadata: BTreeMap<String, String>,
}

/// Parses a network document.
pub fn load_network(text: &str) -> Result<Network, TopologyError> {
    let doc: NetworkDoc =
        serde_json::from_str(text).map_err(|e| TopologyError::Parse(e.to_string()))?;
    let mut b = NetworkBuilder::new();
    for node in doc.nodes {
        b.add_node(node);
    }
    for link in doc.links {
        b.push_link(link);
    }
    b.metadata = doc.metadata;
    b.build()
}

/// Serializes a network document.
pub fn save_network(net: &Network) -> String {
    let doc = NetworkDoc {
        nodes: net.nodes.values().cloned().collect(),
        links: net.links.clone(),
        metadata: net.metadata.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("network serialization cannot fail")
}
