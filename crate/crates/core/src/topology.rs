//! The four K-PPDR network families.
//!
//! Nodes are addressed as `(set, pos)` with both coordinates starting at 1.
//! Layer `j` joins set `j` to set `j + 1`; in the cyclic families layer `K`
//! joins set `K` back to set 1. Every edge carries the index of its layer,
//! and the layer index is also the edge-orbit label.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Symmetric,
    SemiSymmetric,
    Cycle,
    SemiCycle,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Symmetric, Family::SemiSymmetric, Family::Cycle, Family::SemiCycle];

    /// Cycle-like families close the chain of sets with a layer `K -> 1`.
    pub fn is_cyclic(self) -> bool {
        matches!(self, Family::Cycle | Family::SemiCycle)
    }

    /// Semi families mix full and strait layers.
    pub fn is_semi(self) -> bool {
        matches!(self, Family::SemiSymmetric | Family::SemiCycle)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Symmetric => "symmetric",
            Family::SemiSymmetric => "semi-symmetric",
            Family::Cycle => "cycle",
            Family::SemiCycle => "semi-cycle",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String =
            s.chars().filter(|c| !matches!(c, '-' | '_' | ' ')).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "symmetric" | "path" => Ok(Family::Symmetric),
            "semisymmetric" => Ok(Family::SemiSymmetric),
            "cycle" => Ok(Family::Cycle),
            "semicycle" => Ok(Family::SemiCycle),
            _ => Err(Error::InvalidSpec(format!("unknown family '{s}'"))),
        }
    }
}

/// Connectivity of one layer between neighbouring sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    /// Complete bipartite: `n²` edges.
    Full,
    /// Position-aligned perfect matching: `n` edges.
    Strait,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Full => "full",
            LayerKind::Strait => "strait",
        })
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" | "f" => Ok(LayerKind::Full),
            "strait" | "s" => Ok(LayerKind::Strait),
            _ => Err(Error::InvalidSpec(format!("unknown layer kind '{s}'"))),
        }
    }
}

/// Family, number of sets `k`, nodes per set `n`, and an optional layer
/// pattern overriding the family default.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub family: Family,
    pub k: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<Vec<LayerKind>>,
}

impl TopologySpec {
    pub fn new(family: Family, k: usize, n: usize) -> Self {
        Self { family, k, n, pattern: None }
    }

    pub fn with_pattern(mut self, pattern: Vec<LayerKind>) -> Self {
        self.pattern = Some(pattern);
        self
    }

    /// Number of layers, which is also the number of edge orbits.
    pub fn layer_count(&self) -> usize {
        if self.family.is_cyclic() {
            self.k
        } else {
            self.k.saturating_sub(1)
        }
    }

    pub fn node_count(&self) -> usize {
        self.k * self.n
    }

    /// Validates the spec and returns the effective layer pattern.
    pub fn layers(&self) -> Result<Vec<LayerKind>> {
        let min_k = match self.family {
            Family::Symmetric => 2,
            _ => 3,
        };
        if self.k < min_k {
            return Err(Error::InvalidSpec(format!(
                "{} family needs K >= {min_k}, got K = {}",
                self.family, self.k
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidSpec("n must be at least 1".into()));
        }
        if self.family == Family::SemiCycle && !self.k.is_multiple_of(2) {
            return Err(Error::InvalidSpec(format!("semi-cycle family needs an even K, got K = {}", self.k)));
        }
        let layers = match &self.pattern {
            Some(p) => p.clone(),
            None => return default_pattern(self.family, self.k),
        };
        let expected = self.layer_count();
        if layers.len() != expected {
            return Err(Error::InvalidSpec(format!(
                "pattern has {} layers, expected {expected}",
                layers.len()
            )));
        }
        if !self.family.is_semi() {
            if let Some(j) = layers.iter().position(|&l| l != LayerKind::Full) {
                return Err(Error::InvalidSpec(format!(
                    "{} family requires full layers only (layer {} is strait)",
                    self.family,
                    j + 1
                )));
            }
            return Ok(layers);
        }
        let pairs = if self.family.is_cyclic() { expected } else { expected - 1 };
        for j in 0..pairs {
            let next = (j + 1) % expected;
            if layers[j] == LayerKind::Strait && layers[next] == LayerKind::Strait {
                return Err(Error::InvalidSpec(format!(
                    "strait layers {} and {} are adjacent",
                    j + 1,
                    next + 1
                )));
            }
        }
        Ok(layers)
    }
}

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} K={} n={}", self.family, self.k, self.n)
    }
}

/// Default layer pattern of a family.
///
/// Semi families alternate full and strait layers starting with a full layer.
pub fn default_pattern(family: Family, k: usize) -> Result<Vec<LayerKind>> {
    if k < 2 {
        return Err(Error::InvalidSpec(format!("K must be at least 2, got {k}")));
    }
    if family == Family::SemiCycle && !k.is_multiple_of(2) {
        return Err(Error::InvalidSpec(format!("semi-cycle family needs an even K, got K = {k}")));
    }
    let layers = if family.is_cyclic() { k } else { k - 1 };
    Ok((0..layers)
        .map(|j| if family.is_semi() && j % 2 == 1 { LayerKind::Strait } else { LayerKind::Full })
        .collect())
}

/// A node `(set, pos)`, both 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Node {
    pub set: usize,
    pub pos: usize,
}

impl Node {
    pub fn new(set: usize, pos: usize) -> Self {
        Self { set, pos }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.set, self.pos)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub a: Node,
    pub b: Node,
    /// 1-based layer index; doubles as the orbit label.
    pub layer: usize,
    pub kind: LayerKind,
}

#[derive(Clone, Debug, Serialize)]
pub struct Graph {
    spec: TopologySpec,
    layers: Vec<LayerKind>,
    edges: Vec<Edge>,
}

/// Builds the graph of a spec, emitting edges layer by layer.
pub fn build_graph(spec: &TopologySpec) -> Result<Graph> {
    let layers = spec.layers()?;
    let (k, n) = (spec.k, spec.n);
    let mut edges = Vec::new();
    for (j, &kind) in layers.iter().enumerate() {
        let from = j + 1;
        let to = (j + 1) % k + 1;
        for mu in 1..=n {
            match kind {
                LayerKind::Full => {
                    for rho in 1..=n {
                        edges.push(Edge {
                            a: Node::new(from, mu),
                            b: Node::new(to, rho),
                            layer: j + 1,
                            kind,
                        });
                    }
                }
                LayerKind::Strait => {
                    edges.push(Edge { a: Node::new(from, mu), b: Node::new(to, mu), layer: j + 1, kind })
                }
            }
        }
    }
    Ok(Graph { spec: spec.clone(), layers, edges })
}

impl Graph {
    pub fn spec(&self) -> &TopologySpec {
        &self.spec
    }

    pub fn layers(&self) -> &[LayerKind] {
        &self.layers
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.spec.node_count()
    }

    pub fn orbit_count(&self) -> usize {
        self.layers.len()
    }

    /// Edges grouped by orbit, in layer order.
    pub fn orbits(&self) -> Vec<Vec<&Edge>> {
        let mut out = vec![Vec::new(); self.layers.len()];
        for e in &self.edges {
            out[e.layer - 1].push(e);
        }
        out
    }

    /// Dense row-major index of a node.
    pub fn index(&self, node: Node) -> Result<usize> {
        if node.set == 0 || node.set > self.spec.k || node.pos == 0 || node.pos > self.spec.n {
            return Err(Error::NodeOutOfRange { set: node.set, pos: node.pos });
        }
        Ok((node.set - 1) * self.spec.n + node.pos - 1)
    }

    pub fn node_at(&self, index: usize) -> Node {
        Node::new(index / self.spec.n + 1, index % self.spec.n + 1)
    }

    /// Layers touching the given set, as 0-based layer indices.
    pub(crate) fn incident_layers(&self, set: usize) -> impl Iterator<Item = usize> + '_ {
        let count = self.layers.len();
        // layer j (0-based) joins set j+1 and set (j+1)%k+1
        let before = if set == 1 {
            if self.spec.family.is_cyclic() {
                Some(count - 1)
            } else {
                None
            }
        } else {
            Some(set - 2)
        };
        let after = if set <= count { Some(set - 1) } else { None };
        before.into_iter().chain(after)
    }

    fn layer_degree(&self, layer: usize) -> usize {
        match self.layers[layer] {
            LayerKind::Full => self.spec.n,
            LayerKind::Strait => 1,
        }
    }

    pub fn degree(&self, node: Node) -> Result<usize> {
        self.index(node)?;
        Ok(self.incident_layers(node.set).map(|l| self.layer_degree(l)).sum())
    }

    /// Degrees of all nodes in index order.
    pub fn degrees(&self) -> Vec<usize> {
        (0..self.node_count())
            .map(|i| {
                let node = self.node_at(i);
                self.incident_layers(node.set).map(|l| self.layer_degree(l)).sum()
            })
            .collect()
    }

    /// One line per edge: `set,pos  set,pos  layer  kind`.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(&format!("{}  {}  {}  {}\n", e.a, e.b, e.layer, e.kind));
        }
        out
    }
}
