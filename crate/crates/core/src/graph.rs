//! Network topology: validation, closed neighbourhoods and the self-inclusive
//! adjacency matrix.
//!
//! Nodes are dense ids `0..N`. Edges are undirected and stored as `(min, max)`
//! pairs. Self-loops are rejected on input: every node already belongs to its
//! own closed neighbourhood, so an explicit loop would count it twice.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{PolyaError, Result};

/// Ball count used when a network document omits the initial urn contents.
pub const DEFAULT_INITIAL_BALLS: f64 = 10.0;

/// An undirected, connected, unweighted graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    // Sorted closed neighbourhoods, {i} included.
    closed: Vec<Vec<usize>>,
}

impl Network {
    /// Builds and validates a network. Fails on out-of-range ids, self-loops,
    /// duplicate edges or a disconnected graph.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let net = Self::build(node_count, edges)?;
        let reached = net.reachable_from(0);
        if reached != node_count {
            return Err(PolyaError::Disconnected {
                reached,
                nodes: node_count,
            });
        }
        Ok(net)
    }

    /// Same as [`Network::new`] without the connectivity requirement.
    ///
    /// The contagion model assumes a connected graph; this constructor exists
    /// for harnesses that need an isolated node, e.g. to check that a
    /// coordinate with no influence has a zero gradient.
    pub fn new_allow_disconnected(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::build(node_count, edges)
    }

    fn build(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return Err(PolyaError::Empty);
        }
        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            for id in [a, b] {
                if id >= node_count {
                    return Err(PolyaError::NodeOutOfRange {
                        id,
                        nodes: node_count,
                    });
                }
            }
            if a == b {
                return Err(PolyaError::SelfLoop(a));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(PolyaError::DuplicateEdge(e.0, e.1));
            }
            normalized.push(e);
        }

        let mut closed: Vec<Vec<usize>> = (0..node_count).map(|i| vec![i]).collect();
        for &(a, b) in &normalized {
            closed[a].push(b);
            closed[b].push(a);
        }
        for nb in &mut closed {
            nb.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges: normalized,
            closed,
        })
    }

    /// Canonical line, star and circle topologies.
    pub fn builtin(kind: BuiltinKind, n: usize) -> Result<Self> {
        let min = kind.min_nodes();
        if n < min {
            return Err(PolyaError::TooFewNodes {
                kind: kind.name(),
                min,
                got: n,
            });
        }
        let edges: Vec<(usize, usize)> = match kind {
            BuiltinKind::Line => (1..n).map(|i| (i - 1, i)).collect(),
            BuiltinKind::Star => (1..n).map(|i| (0, i)).collect(),
            BuiltinKind::Circle => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        };
        Self::new(n, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Edges as `(min, max)` pairs in input order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// `{i} ∪ neighbours(i)`, sorted ascending.
    pub fn closed_neighborhood(&self, i: usize) -> Result<&[usize]> {
        self.closed
            .get(i)
            .map(Vec::as_slice)
            .ok_or(PolyaError::NodeOutOfRange {
                id: i,
                nodes: self.node_count,
            })
    }

    /// Closed neighbourhoods of every node, indexed by node id.
    pub fn closed_neighborhoods(&self) -> &[Vec<usize>] {
        &self.closed
    }

    pub fn self_adjacency(&self) -> SelfAdjacency {
        let n = self.node_count;
        let mut entries = vec![0u8; n * n];
        for (i, nb) in self.closed.iter().enumerate() {
            for &j in nb {
                entries[i * n + j] = 1;
            }
        }
        SelfAdjacency { n, entries }
    }

    /// Number of nodes reached by breadth-first search from `start`.
    pub fn reachable_from(&self, start: usize) -> usize {
        let mut visited = vec![false; self.node_count];
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        let mut count = 0;
        while let Some(u) = queue.pop_front() {
            count += 1;
            for &v in &self.closed[u] {
                if !visited[v] {
                    visited[v] = true;
                    queue.push_back(v);
                }
            }
        }
        count
    }
}

/// The `N×N` 0/1 matrix with `A[i][j] = 1` iff `j` is in the closed
/// neighbourhood of `i`. Symmetric with a unit diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelfAdjacency {
    n: usize,
    entries: Vec<u8>,
}

impl SelfAdjacency {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinKind {
    Line,
    Star,
    Circle,
}

impl BuiltinKind {
    pub const ALL: [BuiltinKind; 3] = [BuiltinKind::Line, BuiltinKind::Star, BuiltinKind::Circle];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinKind::Line => "line",
            BuiltinKind::Star => "star",
            BuiltinKind::Circle => "circle",
        }
    }

    pub fn min_nodes(self) -> usize {
        match self {
            BuiltinKind::Line => 1,
            BuiltinKind::Star => 2,
            BuiltinKind::Circle => 3,
        }
    }
}

impl fmt::Display for BuiltinKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinKind {
    type Err = PolyaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(BuiltinKind::Line),
            "star" => Ok(BuiltinKind::Star),
            "circle" => Ok(BuiltinKind::Circle),
            other => Err(PolyaError::InvalidArgument(format!(
                "unknown builtin network '{other}' (expected line, star or circle)"
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Counts {
    Uniform(f64),
    PerNode(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    nodes: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default)]
    initial_red: Option<Counts>,
    #[serde(default)]
    initial_black: Option<Counts>,
}

/// A parsed network document: the topology plus initial per-node ball counts.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDocument {
    pub network: Network,
    pub initial_red: Vec<f64>,
    pub initial_black: Vec<f64>,
}

impl NetworkDocument {
    /// Parses the JSON network document
    /// `{"nodes": N, "edges": [[a,b],...], "initial_red": .., "initial_black": ..}`.
    /// Counts may be a scalar (uniform) or a per-node array and default to 10.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawDocument =
            serde_json::from_str(text).map_err(|e| PolyaError::Malformed(e.to_string()))?;
        let edges: Vec<(usize, usize)> = raw.edges.iter().map(|e| (e[0], e[1])).collect();
        let network = Network::new(raw.nodes, &edges)?;
        let initial_red = expand_counts("initial_red", raw.initial_red, raw.nodes)?;
        let initial_black = expand_counts("initial_black", raw.initial_black, raw.nodes)?;
        Ok(Self {
            network,
            initial_red,
            initial_black,
        })
    }

    pub fn uniform(network: Network, red: f64, black: f64) -> Self {
        let n = network.node_count();
        Self {
            network,
            initial_red: vec![red; n],
            initial_black: vec![black; n],
        }
    }

    pub fn to_json(&self) -> String {
        let edges: Vec<[usize; 2]> = self.network.edges().iter().map(|&(a, b)| [a, b]).collect();
        serde_json::json!({
            "nodes": self.network.node_count(),
            "edges": edges,
            "initial_red": self.initial_red,
            "initial_black": self.initial_black,
        })
        .to_string()
    }
}

fn expand_counts(field: &str, counts: Option<Counts>, n: usize) -> Result<Vec<f64>> {
    let values = match counts {
        None => vec![DEFAULT_INITIAL_BALLS; n],
        Some(Counts::Uniform(v)) => vec![v; n],
        Some(Counts::PerNode(v)) => {
            if v.len() != n {
                return Err(PolyaError::Malformed(format!(
                    "{field} has {} entries, expected {n}",
                    v.len()
                )));
            }
            v
        }
    };
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(PolyaError::Malformed(format!(
            "{field}[{i}] = {v}; initial ball counts must be positive"
        )));
    }
    Ok(values)
}

/// Parses a network document and returns only its topology.
pub fn parse_network(text: &str) -> Result<Network> {
    NetworkDocument::parse(text).map(|doc| doc.network)
}
