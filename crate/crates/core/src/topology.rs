//! Network infrastructure: weighted undirected graphs, GraphML input and
//! all-pairs shortest-path distances.
//!
//! Nodes are stored sorted by [`NodeId`], so a node's dense index doubles as
//! its rank in the global tie-breaking order used by every algorithm in this
//! crate.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    #[serde(default)]
    pub label: String,
    #[serde(default = "default_weight")]
    pub priority: f64,
}

impl Node {
    pub fn new(id: impl Into<String>) -> Self {
        Node { id: NodeId::new(id), label: String::new(), priority: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

impl Edge {
    pub fn new(a: impl Into<String>, b: impl Into<String>, weight: f64) -> Self {
        Edge { a: NodeId::new(a), b: NodeId::new(b), weight }
    }
}

/// Canonical serialized form: nodes sorted by id, edges with `a < b` sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TopologyDump {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

/// Connected, weighted, undirected infrastructure graph.
#[derive(Clone, Debug)]
pub struct Topology {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    index: HashMap<NodeId, usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl PartialEq for Topology {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Topology {
    /// Validates and canonicalizes a graph.
    ///
    /// Parallel edges between the same pair (in either direction) collapse
    /// into one edge carrying the largest weight.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyTopology);
        }
        let mut nodes = nodes;
        nodes.sort_by(|x, y| x.id.cmp(&y.id));
        for pair in nodes.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::DuplicateNode(pair[0].id.to_string()));
            }
        }
        for n in &nodes {
            if !(n.priority > 0.0 && n.priority.is_finite()) {
                return Err(Error::NonPositivePriority { node: n.id.to_string(), priority: n.priority });
            }
        }
        let index: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();

        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for e in edges {
            let a = *index.get(&e.a).ok_or_else(|| Error::UnknownNode(e.a.to_string()))?;
            let b = *index.get(&e.b).ok_or_else(|| Error::UnknownNode(e.b.to_string()))?;
            if a == b {
                return Err(Error::SelfLoop(e.a.to_string()));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(Error::NonPositiveWeight { a: e.a.to_string(), b: e.b.to_string(), weight: e.weight });
            }
            let key = (a.min(b), a.max(b));
            let w = merged.entry(key).or_insert(e.weight);
            *w = w.max(e.weight);
        }

        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut canonical = Vec::with_capacity(merged.len());
        for (&(a, b), &w) in &merged {
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
            canonical.push(Edge { a: nodes[a].id.clone(), b: nodes[b].id.clone(), weight: w });
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|&(n, _)| n);
        }

        let topo = Topology { nodes, edges: canonical, index, adjacency };
        let components = topo.component_count();
        if components > 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(topo)
    }

    fn component_count(&self) -> usize {
        let mut seen = vec![false; self.nodes.len()];
        let mut components = 0;
        for start in 0..self.nodes.len() {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &(w, _) in &self.adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        components
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &NodeId) -> Result<usize> {
        self.index_of(id).ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn id(&self, index: usize) -> &NodeId {
        &self.nodes[index].id
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    /// Nodes sharing an edge with `id`, in id order.
    pub fn neighbors(&self, id: &NodeId) -> Result<Vec<&NodeId>> {
        let i = self.require(id)?;
        Ok(self.adjacency[i].iter().map(|&(n, _)| &self.nodes[n].id).collect())
    }

    /// Neighbor indices of node `index`, ascending.
    pub fn neighbor_indices(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[index].iter().map(|&(n, _)| n)
    }

    pub fn to_json(&self) -> Result<String> {
        let dump = TopologyDump { nodes: self.nodes.clone(), edges: self.edges.clone() };
        Ok(serde_json::to_string_pretty(&dump)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dump: TopologyDump = serde_json::from_str(text)?;
        Topology::new(dump.nodes, dump.edges)
    }

    /// Random connected graph with unit weights: a random spanning tree plus
    /// extra random edges until `edge_count` distinct edges exist.
    ///
    /// Node ids are `n000`, `n001`, ... zero-padded to a common width.
    pub fn random_connected(node_count: usize, edge_count: usize, seed: u64) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::EmptyTopology);
        }
        let max_edges = node_count * (node_count - 1) / 2;
        if edge_count + 1 < node_count || edge_count > max_edges {
            return Err(Error::Config(format!(
                "cannot build a connected simple graph with {node_count} nodes and {edge_count} edges"
            )));
        }
        let width = node_count.saturating_sub(1).to_string().len().max(3);
        let name = |i: usize| format!("n{i:0width$}");
        let mut rng = SeededRng::new(seed);
        let mut pairs = std::collections::BTreeSet::new();
        for v in 1..node_count {
            let u = rng.below(v);
            pairs.insert((u, v));
        }
        while pairs.len() < edge_count {
            let u = rng.below(node_count);
            let v = rng.below(node_count);
            if u != v {
                pairs.insert((u.min(v), u.max(v)));
            }
        }
        let nodes = (0..node_count).map(|i| Node::new(name(i))).collect();
        let edges = pairs.into_iter().map(|(u, v)| Edge::new(name(u), name(v), 1.0)).collect();
        Topology::new(nodes, edges)
    }
}

impl Serialize for Topology {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        TopologyDump { nodes: self.nodes.clone(), edges: self.edges.clone() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Topology {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let dump = TopologyDump::deserialize(deserializer)?;
        Topology::new(dump.nodes, dump.edges).map_err(serde::de::Error::custom)
    }
}

/// Attribute names consulted while reading GraphML `<data>` elements.
///
/// A name matches either a `<key>`'s `attr.name` or its `id`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphmlOptions {
    pub weight_key: Option<String>,
    pub priority_key: Option<String>,
    pub label_key: String,
}

impl Default for GraphmlOptions {
    fn default() -> Self {
        GraphmlOptions {
            weight_key: Some("weight".into()),
            priority_key: Some("priority".into()),
            label_key: "label".into(),
        }
    }
}

/// Cleanups applied while reading a GraphML file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GraphmlReport {
    pub self_loops_dropped: usize,
    pub parallel_edges_merged: usize,
}

pub fn parse_graphml(bytes: &[u8], options: &GraphmlOptions) -> Result<Topology> {
    parse_graphml_with_report(bytes, options).map(|(t, _)| t)
}

pub fn parse_graphml_with_report(bytes: &[u8], options: &GraphmlOptions) -> Result<(Topology, GraphmlReport)> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Graphml(e.to_string()))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::Graphml(e.to_string()))?;

    // key id -> attr.name
    let mut key_names: HashMap<&str, &str> = HashMap::new();
    for key in doc.descendants().filter(|n| n.has_tag_name("key")) {
        if let Some(id) = key.attribute("id") {
            key_names.insert(id, key.attribute("attr.name").unwrap_or(id));
        }
    }
    let matches = |key: &str, wanted: &str| key == wanted || key_names.get(key).is_some_and(|name| *name == wanted);
    let data_value = |el: roxmltree::Node<'_, '_>, wanted: &str| -> Option<String> {
        el.children()
            .filter(|c| c.has_tag_name("data"))
            .find(|c| c.attribute("key").is_some_and(|k| matches(k, wanted)))
            .map(|c| c.text().unwrap_or("").trim().to_owned())
    };

    let graph = doc
        .descendants()
        .find(|n| n.has_tag_name("graph"))
        .ok_or_else(|| Error::Graphml("no <graph> element".into()))?;

    let mut nodes = Vec::new();
    for el in graph.children().filter(|n| n.has_tag_name("node")) {
        let id = el.attribute("id").ok_or_else(|| Error::Graphml("<node> without id".into()))?;
        let label = data_value(el, &options.label_key).unwrap_or_default();
        let priority = match options.priority_key.as_deref().and_then(|k| data_value(el, k)) {
            Some(v) => parse_number(&v, "priority", id)?,
            None => 1.0,
        };
        nodes.push(Node { id: NodeId::new(id), label, priority });
    }

    let mut report = GraphmlReport::default();
    let mut edges = Vec::new();
    let mut pairs = std::collections::HashSet::new();
    for el in graph.children().filter(|n| n.has_tag_name("edge")) {
        let (Some(a), Some(b)) = (el.attribute("source"), el.attribute("target")) else {
            return Err(Error::Graphml("<edge> without source/target".into()));
        };
        if a == b {
            report.self_loops_dropped += 1;
            continue;
        }
        let weight = match options.weight_key.as_deref().and_then(|k| data_value(el, k)) {
            Some(v) => parse_number(&v, "weight", &format!("{a}-{b}"))?,
            None => 1.0,
        };
        let key = if a < b { (a, b) } else { (b, a) };
        if !pairs.insert(key) {
            report.parallel_edges_merged += 1;
        }
        edges.push(Edge::new(a, b, weight));
    }

    Ok((Topology::new(nodes, edges)?, report))
}

fn parse_number(text: &str, what: &str, owner: &str) -> Result<f64> {
    text.parse::<f64>().map_err(|_| Error::Graphml(format!("{what} `{text}` on `{owner}` is not a number")))
}

/// Dense symmetric matrix of shortest-path distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<NodeId>,
    dist: Vec<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.ids.len() + b]
    }

    pub fn between(&self, a: &NodeId, b: &NodeId) -> Option<f64> {
        let i = self.ids.binary_search(a).ok()?;
        let j = self.ids.binary_search(b).ok()?;
        Some(self.get(i, j))
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.ids.binary_search(id).ok()
    }

    pub fn row(&self, a: usize) -> &[f64] {
        let n = self.ids.len();
        &self.dist[a * n..(a + 1) * n]
    }
}

/// Exact weighted distances from a Dijkstra run out of every node.
pub fn all_pairs_shortest_paths(topology: &Topology) -> DistanceMatrix {
    let n = topology.node_count();
    let mut graph = UnGraph::<(), f64>::with_capacity(n, topology.edge_count());
    let handles: Vec<NodeIndex> = (0..n).map(|_| graph.add_node(())).collect();
    for (a, adj) in topology.adjacency.iter().enumerate() {
        for &(b, w) in adj {
            if a < b {
                graph.add_edge(handles[a], handles[b], w);
            }
        }
    }
    let mut dist = vec![f64::INFINITY; n * n];
    for source in 0..n {
        let reached = dijkstra(&graph, handles[source], None, |e| *e.weight());
        for (target, d) in reached {
            dist[source * n + target.index()] = d;
        }
    }
    // Symmetrize so (a, b) and (b, a) hold bit-identical values.
    for a in 0..n {
        for b in (a + 1)..n {
            let d = dist[a * n + b].min(dist[b * n + a]);
            dist[a * n + b] = d;
            dist[b * n + a] = d;
        }
    }
    DistanceMatrix { ids: topology.nodes.iter().map(|n| n.id.clone()).collect(), dist }
}
