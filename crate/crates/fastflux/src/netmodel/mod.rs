//! Network data model, rate assembly, discrete divergence and stationary laws.
//!
//! Conventions used throughout the crate:
//!
//! * `(div A)_x = Σ_{r⁻=x} A_r − Σ_{r⁺=x} A_r`, so `ρ̇ = −div j`.
//! * A [`GeneratorMatrix`] `A` stores the rate of `y → x` in row `y`, column
//!   `x`; rows sum to zero and `Aᵀρ` is the density drift.

mod format;

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::generator_null_vector;
use crate::tolerance::SOLVER_RESIDUAL;

pub use format::{load_network, network_from_json, network_to_json, parse_network, save_network};

/// Node identifier as written in network files.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let ok = !id.is_empty()
            && id
                .chars()
                .all(|c| c.is_alphanumeric() || matches!(c, '_' | '.' | '-'))
            && !id.contains("->");
        if ok {
            Ok(NodeId(id))
        } else {
            Err(Error::InvalidNodeId(id))
        }
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

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speed {
    Slow,
    Fast,
}

impl fmt::Display for Speed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Speed::Slow => "slow",
            Speed::Fast => "fast",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub rate: f64,
    pub speed: Speed,
}

/// A diconnected weighted digraph with slow and fast edges.
#[derive(Clone, Debug)]
pub struct Network {
    nodes: Vec<NodeId>,
    edges: Vec<Edge>,
    index: HashMap<NodeId, usize>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Network {
    /// Build and validate a network. Edges refer to positions in `nodes`.
    pub fn new(nodes: Vec<NodeId>, edges: Vec<Edge>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Empty);
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, id) in nodes.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateNode(id.to_string()));
            }
        }
        let n = nodes.len();
        let mut seen = HashMap::new();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for (r, e) in edges.iter().enumerate() {
            if e.src >= n || e.dst >= n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: e.src.max(e.dst) + 1,
                });
            }
            let label = format!("{}->{}", nodes[e.src], nodes[e.dst]);
            if !(e.rate.is_finite() && e.rate > 0.0) {
                return Err(Error::NonPositiveRate {
                    edge: label,
                    rate: e.rate,
                });
            }
            if e.src == e.dst {
                return Err(Error::SelfLoop(label));
            }
            if seen.insert((e.src, e.dst, e.speed), r).is_some() {
                return Err(Error::DuplicateEdge(label));
            }
            out_edges[e.src].push(r);
            in_edges[e.dst].push(r);
        }
        let net = Network {
            nodes,
            edges,
            index,
            out_edges,
            in_edges,
        };
        let components = net.scc_count();
        if components != 1 {
            return Err(Error::NotDiconnected { components });
        }
        Ok(net)
    }

    fn scc_count(&self) -> usize {
        let mut g = DiGraph::<(), ()>::with_capacity(self.nodes.len(), self.edges.len());
        let ix: Vec<_> = (0..self.nodes.len()).map(|_| g.add_node(())).collect();
        for e in &self.edges {
            g.add_edge(ix[e.src], ix[e.dst], ());
        }
        tarjan_scc(&g).len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, r: usize) -> &Edge {
        &self.edges[r]
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        NodeId::new(id).ok().and_then(|id| self.index.get(&id).copied())
    }

    pub fn out_edges(&self, x: usize) -> &[usize] {
        &self.out_edges[x]
    }

    pub fn in_edges(&self, x: usize) -> &[usize] {
        &self.in_edges[x]
    }

    /// `src->dst`, with an `@speed` suffix when both speeds join the same pair.
    pub fn edge_label(&self, r: usize) -> String {
        let e = &self.edges[r];
        let base = format!("{}->{}", self.nodes[e.src], self.nodes[e.dst]);
        let twin = self
            .edges
            .iter()
            .any(|f| f.src == e.src && f.dst == e.dst && f.speed != e.speed);
        if twin {
            format!("{base}@{}", e.speed)
        } else {
            base
        }
    }

    pub fn edge_index(&self, label: &str) -> Option<usize> {
        (0..self.edges.len()).find(|&r| self.edge_label(r) == label)
    }
}

/// Per-edge rates `κ^ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateVector {
    pub values: Vec<f64>,
    pub epsilon: f64,
}

/// `κ^ε_r = κ_r` on slow edges and `κ_r/ε` on fast edges.
pub fn assemble_rates(net: &Network, eps: f64) -> RateVector {
    let values = net
        .edges()
        .iter()
        .map(|e| match e.speed {
            Speed::Slow => e.rate,
            Speed::Fast => e.rate / eps,
        })
        .collect();
    RateVector {
        values,
        epsilon: eps,
    }
}

/// Discrete divergence of an edge field.
pub fn divergence(net: &Network, values: &[f64]) -> Result<Vec<f64>> {
    if values.len() != net.edge_count() {
        return Err(Error::LengthMismatch {
            expected: net.edge_count(),
            found: values.len(),
        });
    }
    let mut div = vec![0.0; net.node_count()];
    for (e, v) in net.edges().iter().zip(values) {
        div[e.src] += v;
        div[e.dst] -= v;
    }
    Ok(div)
}

/// Edge field `(κ ⊗ ρ)_r = κ_r ρ_{r⁻}`.
pub fn tensor(net: &Network, rates: &[f64], rho: &[f64]) -> Vec<f64> {
    net.edges()
        .iter()
        .zip(rates)
        .map(|(e, k)| k * rho[e.src])
        .collect()
}

/// Normalised stationary vector `π^ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryDist {
    pub pi: Vec<f64>,
    pub epsilon: f64,
}

/// Solve `div(κ^ε ⊗ π^ε) = 0`, `Σπ^ε = 1`.
pub fn stationary_distribution(net: &Network, eps: f64) -> Result<StationaryDist> {
    let rates = assemble_rates(net, eps);
    let gen = GeneratorMatrix::from_rates(net, &rates.values);
    let (v, _) = generator_null_vector(gen.matrix())?;
    let total: f64 = v.iter().sum();
    let pi: Vec<f64> = v.iter().map(|p| p / total).collect();
    let max_rate = rates.values.iter().cloned().fold(0.0, f64::max);
    let div = divergence(net, &tensor(net, &rates.values, &pi))?;
    let residual = div.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let tolerance = SOLVER_RESIDUAL * max_rate.max(1.0);
    if residual > tolerance || pi.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::SingularSolve {
            residual,
            tolerance,
        });
    }
    Ok(StationaryDist { pi, epsilon: eps })
}

/// Markov generator with rows as sources; `Aᵀρ` is the density drift.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMatrix(DMatrix<f64>);

impl GeneratorMatrix {
    /// Validates off-diagonal signs and zero row sums.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Structural("generator must be square".into()));
        }
        let scale = a.amax().max(1.0);
        for i in 0..a.nrows() {
            let row: f64 = a.row(i).iter().sum();
            if row.abs() > 1e-12 * scale {
                return Err(Error::Structural(format!("generator row {i} sums to {row}")));
            }
            for j in 0..a.ncols() {
                if i != j && a[(i, j)] < 0.0 {
                    return Err(Error::Structural(format!(
                        "negative off-diagonal generator entry at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(GeneratorMatrix(a))
    }

    pub fn from_rates(net: &Network, rates: &[f64]) -> Self {
        let n = net.node_count();
        let mut a = DMatrix::zeros(n, n);
        for (e, k) in net.edges().iter().zip(rates) {
            a[(e.src, e.dst)] += k;
            a[(e.src, e.src)] -= k;
        }
        GeneratorMatrix(a)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Density drift matrix `Aᵀ`.
    pub fn drift(&self) -> DMatrix<f64> {
        self.0.transpose()
    }

    fn symmetric_part(&self) -> DMatrix<f64> {
        (&self.0 + self.0.transpose()) * 0.5
    }

    /// True when `vᵀAv ≤ 0` for every `v`.
    pub fn is_dissipative(&self) -> bool {
        let eig = SymmetricEigen::new(self.symmetric_part());
        let top = eig.eigenvalues.max();
        top <= 1e-12 * self.0.amax().max(1.0)
    }
}

/// Largest eigenvalue of the symmetric part of `A` compressed to `Col(A)`.
///
/// The returned `λ < 0` satisfies `vᵀAv ≤ λ|v|²` for every `v ∈ Col(A)`.
pub fn generator_negativity_bound(a: &GeneratorMatrix) -> Result<f64> {
    let m = a.matrix();
    let scale = m.amax();
    if scale == 0.0 {
        return Err(Error::ZeroGenerator);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * scale)
        .collect();
    let basis = u.select_columns(keep.iter());
    let compressed = basis.transpose() * a.symmetric_part() * &basis;
    let eig = SymmetricEigen::new(compressed);
    let lambda = eig.eigenvalues.max();
    if lambda >= -1e-12 * scale {
        return Err(Error::NotContractive(lambda));
    }
    Ok(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node(a: f64, b: f64) -> Network {
        parse_network(&format!(
            "nodes: 1 2\n1 -> 2 rate={a} speed=slow\n2 -> 1 rate={b} speed=slow\n"
        ))
        .unwrap()
    }

    #[test]
    fn rates_scale_only_fast_edges() {
        let net = parse_network(
            "nodes: a b\na -> b rate=2 speed=fast\nb -> a rate=3 speed=slow\n",
        )
        .unwrap();
        let k = assemble_rates(&net, 0.1);
        assert!((k.values[0] - 20.0).abs() < 1e-12);
        assert_eq!(k.values[1], 3.0);
    }

    #[test]
    fn divergence_of_unit_edge_and_cycle() {
        let net = parse_network(
            "nodes: 1 2 3\n1 -> 2 rate=1 speed=slow\n2 -> 3 rate=1 speed=slow\n3 -> 1 rate=1 speed=slow\n",
        )
        .unwrap();
        assert_eq!(divergence(&net, &[1.0, 0.0, 0.0]).unwrap(), vec![1.0, -1.0, 0.0]);
        assert_eq!(divergence(&net, &[0.7, 0.7, 0.7]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert!(divergence(&net, &[1.0]).is_err());
    }

    #[test]
    fn two_node_detailed_balance() {
        let (a, b) = (2.0, 5.0);
        let pi = stationary_distribution(&two_node(a, b), 0.3).unwrap().pi;
        assert!((pi[0] - b / (a + b)).abs() < 1e-14);
        assert!((pi[1] - a / (a + b)).abs() < 1e-14);
    }

    #[test]
    fn symmetric_pair_has_lambda_minus_two() {
        let g = GeneratorMatrix::new(DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0])).unwrap();
        let l = generator_negativity_bound(&g).unwrap();
        assert!((l + 2.0).abs() < 1e-12);
        assert!(g.is_dissipative());
    }

    #[test]
    fn zero_generator_is_rejected() {
        let g = GeneratorMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        assert!(matches!(generator_negativity_bound(&g), Err(Error::ZeroGenerator)));
    }

    #[test]
    fn unbalanced_pair_is_not_dissipative() {
        // vᵀAv = -a v1² + (a+b) v1 v2 - b v2² is indefinite for a ≠ b.
        let g = GeneratorMatrix::new(DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 4.0, -4.0])).unwrap();
        assert!(!g.is_dissipative());
    }

    #[test]
    fn invalid_generators_are_rejected() {
        assert!(GeneratorMatrix::new(DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 1.0, -1.0])).is_err());
        assert!(GeneratorMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, -1.0])).is_err());
    }

    #[test]
    fn edge_labels_disambiguate_twins() {
        let net = parse_network(
            "nodes: a b\na -> b rate=1 speed=slow\na -> b rate=1 speed=fast\nb -> a rate=1 speed=slow\n",
        )
        .unwrap();
        assert_eq!(net.edge_label(0), "a->b@slow");
        assert_eq!(net.edge_label(1), "a->b@fast");
        assert_eq!(net.edge_label(2), "b->a");
        assert_eq!(net.edge_index("a->b@fast"), Some(1));
    }
}
