//! Transition matrices built from one probability per edge orbit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues_symmetric, slem_of_spectrum, Spectrum, SymmetricMatrix, DEFAULT_TOL};
use crate::topology::{build_graph, Graph, LayerKind, TopologySpec};

/// Holdings in `[-FEASIBILITY_TOL, 0)` are rounding noise and are set to 0.
pub const FEASIBILITY_TOL: f64 = 1e-12;
/// Allowed deviation of each row sum from 1.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Transition probability on each edge orbit, indexed by layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrbitProbabilities(Vec<f64>);

impl OrbitProbabilities {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidProbabilities(format!(
                "orbit {} has probability {v}; values must be finite and nonnegative",
                i + 1
            )));
        }
        Ok(Self(values))
    }

    pub fn uniform(len: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parses comma-separated values, e.g. `0.25,0.5,0.25`.
    pub fn parse(text: &str) -> Result<Self> {
        let values = text
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidProbabilities(format!("cannot parse '{t}' as a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }
}

/// Symmetric stochastic matrix on the `nK` nodes of a network, indexed by
/// `(set - 1) * n + (pos - 1)`.
#[derive(Clone, Debug, Serialize)]
pub struct TransitionMatrix {
    spec: TopologySpec,
    probs: OrbitProbabilities,
    matrix: SymmetricMatrix,
}

impl TransitionMatrix {
    pub fn spec(&self) -> &TopologySpec {
        &self.spec
    }

    pub fn probs(&self) -> &OrbitProbabilities {
        &self.probs
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.matrix
    }

    pub fn size(&self) -> usize {
        self.matrix.size()
    }

    pub fn holdings(&self) -> Vec<f64> {
        (0..self.size()).map(|i| self.matrix.get(i, i)).collect()
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        eigenvalues_symmetric(&self.matrix, DEFAULT_TOL)
    }

    /// N rows of N comma-separated values in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.matrix.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// `{spec, probs, matrix}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transition matrix serializes")
    }
}

/// Off-diagonal entries and holding probabilities for arbitrary weights,
/// without any feasibility check. Entries are accumulated in layer order.
pub fn raw_entries(graph: &Graph, probs: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let size = graph.node_count();
    let mut data = vec![0.0; size * size];
    let mut outflow = vec![0.0; size];
    for e in graph.edges() {
        let p = probs[e.layer - 1];
        let i = (e.a.set - 1) * graph.spec().n + e.a.pos - 1;
        let j = (e.b.set - 1) * graph.spec().n + e.b.pos - 1;
        data[i * size + j] += p;
        data[j * size + i] += p;
        outflow[i] += p;
        outflow[j] += p;
    }
    let holdings: Vec<f64> = outflow.iter().map(|o| 1.0 - o).collect();
    for (i, h) in holdings.iter().enumerate() {
        data[i * size + i] = *h;
    }
    (data, holdings)
}

/// Holding probability of every node under `probs` (may be negative).
pub fn holding_probabilities(graph: &Graph, probs: &[f64]) -> Vec<f64> {
    let n = graph.spec().n as f64;
    (0..graph.node_count())
        .map(|i| {
            let outflow: f64 = graph
                .incident_layers(graph.node_at(i).set)
                .map(|l| match graph.layers()[l] {
                    LayerKind::Full => n * probs[l],
                    LayerKind::Strait => probs[l],
                })
                .sum();
            1.0 - outflow
        })
        .collect()
}

pub fn assemble(spec: &TopologySpec, probs: &OrbitProbabilities) -> Result<TransitionMatrix> {
    let graph = build_graph(spec)?;
    assemble_on(&graph, probs)
}

/// Same as [`assemble`] for an already built graph.
pub fn assemble_on(graph: &Graph, probs: &OrbitProbabilities) -> Result<TransitionMatrix> {
    if probs.len() != graph.orbit_count() {
        return Err(Error::InvalidProbabilities(format!(
            "{} values given for {} orbits",
            probs.len(),
            graph.orbit_count()
        )));
    }
    let size = graph.node_count();
    let (mut data, holdings) = raw_entries(graph, probs.values());
    for (i, &h) in holdings.iter().enumerate() {
        if h < -FEASIBILITY_TOL {
            let node = graph.node_at(i);
            return Err(Error::Infeasible { set: node.set, pos: node.pos, holding: h });
        }
        if h < 0.0 {
            data[i * size + i] = 0.0;
        }
    }
    let matrix = SymmetricMatrix::from_fn(size, |i, j| data[i * size + j])?;
    for i in 0..size {
        let sum: f64 = matrix.row(i).iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            let node = graph.node_at(i);
            return Err(Error::InvalidProbabilities(format!("row of node {node} sums to {sum}")));
        }
    }
    Ok(TransitionMatrix { spec: graph.spec().clone(), probs: probs.clone(), matrix })
}

/// Second largest eigenvalue modulus of `p`.
pub fn slem(p: &TransitionMatrix) -> Result<f64> {
    slem_of_spectrum(&p.spectrum()?)
}

/// Metropolis-Hastings weights for the uniform distribution with a uniform
/// neighbour proposal: each edge gets `min(1/d_i, 1/d_j)`.
///
/// Edges of one orbit share their endpoint degrees, so the first edge of each
/// orbit determines its value.
pub fn metropolis_hastings(g: &Graph) -> OrbitProbabilities {
    let degrees = g.degrees();
    let values = g
        .orbits()
        .iter()
        .map(|orbit| {
            let e = orbit[0];
            let di = degrees[g.index(e.a).expect("edge endpoint in range")];
            let dj = degrees[g.index(e.b).expect("edge endpoint in range")];
            1.0 / di.max(dj) as f64
        })
        .collect();
    OrbitProbabilities(values)
}
