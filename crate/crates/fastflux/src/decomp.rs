//! Scaling classification of nodes and edges, fast components and damped cycles.
//!
//! Nodes whose stationary mass stays of order one are `V0`; nodes whose mass
//! is of order `ε` are `V1`. `V0` nodes with an outgoing fast edge form fast
//! components (`V0fcyc`), the rest are `V0slow`.

use nalgebra::DMatrix;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::generator_null_vector;
use crate::netmodel::{stationary_distribution, Network, Speed};
use crate::tolerance::{Tolerances, SOLVER_RESIDUAL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeTag {
    V0Slow,
    V0Fcyc,
    V1,
}

impl NodeTag {
    pub fn is_v0(self) -> bool {
        self != NodeTag::V1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeTag {
    Slow,
    FastCycle,
    DampedCycle,
    DampedNoCycle,
}

impl EdgeTag {
    pub fn is_damped(self) -> bool {
        matches!(self, EdgeTag::DampedCycle | EdgeTag::DampedNoCycle)
    }
}

/// Node tags together with the limit weights.
///
/// `pi_limit` is `π_x` on `V0` and zero on `V1`; `pi_tilde` is `π̃_x` on `V1`
/// and zero on `V0`. The weights solve the limit balance equations exactly;
/// `richardson` holds the extrapolated probe values for comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeClass {
    pub tags: Vec<NodeTag>,
    pub exponents: Vec<f64>,
    pub pi_limit: Vec<f64>,
    pub pi_tilde: Vec<f64>,
    pub richardson: Vec<f64>,
}

impl NodeClass {
    /// `π_x` on `V0`, `π̃_x` on `V1`.
    pub fn weight(&self, x: usize) -> f64 {
        match self.tags[x] {
            NodeTag::V1 => self.pi_tilde[x],
            _ => self.pi_limit[x],
        }
    }

    pub fn nodes_with(&self, tag: NodeTag) -> Vec<usize> {
        (0..self.tags.len()).filter(|&x| self.tags[x] == tag).collect()
    }

    /// Largest relative gap between the exact weights and the extrapolation.
    pub fn extrapolation_gap(&self) -> f64 {
        (0..self.tags.len())
            .map(|x| {
                let w = self.weight(x);
                (self.richardson[x] - w).abs() / w
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeClass {
    pub tags: Vec<EdgeTag>,
}

impl EdgeClass {
    pub fn edges_with(&self, tag: EdgeTag) -> Vec<usize> {
        (0..self.tags.len()).filter(|&r| self.tags[r] == tag).collect()
    }

    pub fn damped(&self) -> Vec<usize> {
        (0..self.tags.len()).filter(|&r| self.tags[r].is_damped()).collect()
    }
}

/// Fast components: SCCs of `(V0fcyc, Rfcyc)`.
///
/// `local_eq[c][i]` is the normalised equilibrium of the fast generator on
/// component `c` at node `components[c][i]`, so `π_x = π_c · local_eq`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastComponents {
    pub components: Vec<Vec<usize>>,
    pub pi_c: Vec<f64>,
    pub local_eq: Vec<Vec<f64>>,
    pub component_of: Vec<Option<usize>>,
}

/// Results of the structural checks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StructuralChecks {
    pub fast_cycles: bool,
    pub node_categorisation: bool,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub node_class: NodeClass,
    pub edge_class: EdgeClass,
    pub fast_components: FastComponents,
    pub checks: StructuralChecks,
}

impl Decomposition {
    pub fn has_damped_cycle(&self) -> bool {
        self.edge_class.tags.contains(&EdgeTag::DampedCycle)
    }

    pub fn v0slow(&self) -> Vec<usize> {
        self.node_class.nodes_with(NodeTag::V0Slow)
    }

    pub fn v1(&self) -> Vec<usize> {
        self.node_class.nodes_with(NodeTag::V1)
    }
}

/// Strongly connected components of the subgraph given by `edges`, restricted
/// to `nodes`. Each component is sorted.
fn sccs(net: &Network, nodes: &[usize], edges: &[usize]) -> Vec<Vec<usize>> {
    let mut g = DiGraph::<usize, ()>::new();
    let mut ix = vec![None; net.node_count()];
    for &x in nodes {
        ix[x] = Some(g.add_node(x));
    }
    for &r in edges {
        let e = net.edge(r);
        if let (Some(a), Some(b)) = (ix[e.src], ix[e.dst]) {
            g.add_edge(a, b, ());
        }
    }
    let mut out: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|n| g[n]).collect();
            v.sort_unstable();
            v
        })
        .collect();
    out.sort();
    out
}

fn exponent_tags(net: &Network, tol: &Tolerances) -> Result<(Vec<NodeTag>, Vec<f64>, Vec<f64>)> {
    let (e1, e2) = tol.probe;
    if !(e1 > e2 && e2 > 0.0) {
        return Err(Error::Config(format!("probe pair must satisfy ε₁ > ε₂ > 0, got ({e1}, {e2})")));
    }
    let p1 = stationary_distribution(net, e1)?.pi;
    let p2 = stationary_distribution(net, e2)?.pi;
    let mut tags = Vec::with_capacity(net.node_count());
    let mut exps = Vec::with_capacity(net.node_count());
    let mut extrap = Vec::with_capacity(net.node_count());
    let rich = |a: f64, b: f64| b + (b - a) * e2 / (e1 - e2);
    for x in 0..net.node_count() {
        let k = (p1[x] / p2[x]).ln() / (e1 / e2).ln();
        let rounded = k.round();
        if (k - rounded).abs() > tol.exponent_rounding || !(0.0..=1.0).contains(&rounded) {
            return Err(Error::HigherOrder {
                node: net.nodes()[x].to_string(),
                exponent: k,
            });
        }
        exps.push(k);
        if rounded == 0.0 {
            let fast_out = net
                .out_edges(x)
                .iter()
                .any(|&r| net.edge(r).speed == Speed::Fast);
            tags.push(if fast_out { NodeTag::V0Fcyc } else { NodeTag::V0Slow });
            extrap.push(rich(p1[x], p2[x]));
        } else {
            tags.push(NodeTag::V1);
            extrap.push(rich(p1[x] / e1, p2[x] / e2));
        }
    }
    Ok((tags, exps, extrap))
}

fn fcyc_edges(net: &Network, tags: &[NodeTag]) -> Vec<usize> {
    (0..net.edge_count())
        .filter(|&r| net.edge(r).speed == Speed::Fast && tags[net.edge(r).src].is_v0())
        .collect()
}

/// Components and their local equilibria (base rates of the fast edges).
fn components_with_equilibria(
    net: &Network,
    tags: &[NodeTag],
    fcyc: &[usize],
) -> Result<(Vec<Vec<usize>>, Vec<Vec<f64>>)> {
    let v0fcyc: Vec<usize> = (0..tags.len()).filter(|&x| tags[x] == NodeTag::V0Fcyc).collect();
    let comps = sccs(net, &v0fcyc, fcyc);
    let mut eqs = Vec::with_capacity(comps.len());
    for c in &comps {
        let m = c.len();
        let mut a = DMatrix::zeros(m, m);
        for &r in fcyc {
            let e = net.edge(r);
            if let (Some(i), Some(j)) = (
                c.iter().position(|&x| x == e.src),
                c.iter().position(|&x| x == e.dst),
            ) {
                a[(i, j)] += e.rate;
                a[(i, i)] -= e.rate;
            }
        }
        let (v, _) = generator_null_vector(&a)?;
        let s: f64 = v.iter().sum();
        eqs.push(v.iter().map(|p| p / s).collect());
    }
    Ok((comps, eqs))
}

/// Classify nodes from two stationary probes and solve for the limit weights.
pub fn classify_nodes(net: &Network, tol: &Tolerances) -> Result<NodeClass> {
    let (tags, exponents, richardson) = exponent_tags(net, tol)?;
    let fcyc = fcyc_edges(net, &tags);
    let (comps, eqs) = components_with_equilibria(net, &tags, &fcyc)?;

    // Reduced generator on V0slow ∪ components ∪ V1 with base rates.
    let n = net.node_count();
    let mut slot = vec![0usize; n];
    let mut local = vec![1.0; n];
    let mut count = 0;
    for x in 0..n {
        if tags[x] == NodeTag::V0Slow {
            slot[x] = count;
            count += 1;
        }
    }
    let m0 = count + comps.len();
    for (c, comp) in comps.iter().enumerate() {
        for (i, &x) in comp.iter().enumerate() {
            slot[x] = count + c;
            local[x] = eqs[c][i];
        }
    }
    count = m0;
    for x in 0..n {
        if tags[x] == NodeTag::V1 {
            slot[x] = count;
            count += 1;
        }
    }
    let mut a = DMatrix::zeros(count, count);
    for (r, e) in net.edges().iter().enumerate() {
        if fcyc.contains(&r) {
            continue;
        }
        let (i, j) = (slot[e.src], slot[e.dst]);
        if i != j {
            let k = e.rate * local[e.src];
            a[(i, j)] += k;
            a[(i, i)] -= k;
        }
    }
    let (w, residual) = generator_null_vector(&a)?;
    let tolerance = SOLVER_RESIDUAL * a.amax().max(1.0);
    let v0_mass: f64 = w.iter().take(m0).sum();
    if residual > tolerance || w.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::SingularSolve {
            residual,
            tolerance,
        });
    }
    let mut pi_limit = vec![0.0; n];
    let mut pi_tilde = vec![0.0; n];
    for x in 0..n {
        let v = w[slot[x]] / v0_mass * local[x];
        match tags[x] {
            NodeTag::V1 => pi_tilde[x] = v,
            _ => pi_limit[x] = v,
        }
    }
    Ok(NodeClass {
        tags,
        exponents,
        pi_limit,
        pi_tilde,
        richardson,
    })
}

/// Tag edges; damped edges are split by [`damped_cycle_partition`].
pub fn classify_edges(net: &Network, nodes: &NodeClass) -> Result<EdgeClass> {
    let mut tags = Vec::with_capacity(net.edge_count());
    for (r, e) in net.edges().iter().enumerate() {
        let v0 = nodes.tags[e.src].is_v0();
        tags.push(match (e.speed, v0) {
            (Speed::Fast, true) => EdgeTag::FastCycle,
            (Speed::Fast, false) => EdgeTag::DampedNoCycle,
            (Speed::Slow, true) => EdgeTag::Slow,
            (Speed::Slow, false) => return Err(Error::Leak(net.edge_label(r))),
        });
    }
    Ok(damped_cycle_partition(net, &EdgeClass { tags }))
}

/// Damped edges inside a strongly connected component of the damped subgraph
/// become `DampedCycle`; the others `DampedNoCycle`.
pub fn damped_cycle_partition(net: &Network, edges: &EdgeClass) -> EdgeClass {
    let damped = edges.damped();
    let all: Vec<usize> = (0..net.node_count()).collect();
    let comps = sccs(net, &all, &damped);
    let mut which = vec![0; net.node_count()];
    for (c, comp) in comps.iter().enumerate() {
        for &x in comp {
            which[x] = c;
        }
    }
    let tags = edges
        .tags
        .iter()
        .enumerate()
        .map(|(r, &t)| {
            if t.is_damped() {
                let e = net.edge(r);
                if which[e.src] == which[e.dst] {
                    EdgeTag::DampedCycle
                } else {
                    EdgeTag::DampedNoCycle
                }
            } else {
                t
            }
        })
        .collect();
    EdgeClass { tags }
}

/// SCCs of the fast-cycle subgraph, with reachability symmetry verified.
pub fn fast_components(net: &Network, nodes: &NodeClass, edges: &EdgeClass) -> Result<FastComponents> {
    let fcyc = edges.edges_with(EdgeTag::FastCycle);
    let (components, local_eq) = components_with_equilibria(net, &nodes.tags, &fcyc)?;
    let mut component_of = vec![None; net.node_count()];
    for (c, comp) in components.iter().enumerate() {
        for &x in comp {
            component_of[x] = Some(c);
        }
    }
    for &r in &fcyc {
        let e = net.edge(r);
        if component_of[e.src].is_none() || component_of[e.src] != component_of[e.dst] {
            return Err(Error::Structural(format!(
                "fast-cycle edge {} leaves its component",
                net.edge_label(r)
            )));
        }
    }
    for comp in &components {
        for &x in comp {
            let has = |list: &[usize]| list.iter().any(|r| fcyc.contains(r));
            if !has(net.out_edges(x)) || !has(net.in_edges(x)) {
                return Err(Error::Structural(format!(
                    "node {} lacks fast in- or out-edges inside its component",
                    net.nodes()[x]
                )));
            }
        }
    }
    let pi_c = components
        .iter()
        .map(|c| c.iter().map(|&x| nodes.pi_limit[x]).sum())
        .collect();
    Ok(FastComponents {
        components,
        pi_c,
        local_eq,
        component_of,
    })
}

fn categorisation_violations(net: &Network, nodes: &NodeClass, edges: &EdgeClass) -> Vec<String> {
    let mut out = Vec::new();
    for x in 0..net.node_count() {
        let name = &net.nodes()[x];
        let outs = net.out_edges(x);
        match nodes.tags[x] {
            NodeTag::V0Slow => {
                if outs.iter().any(|&r| net.edge(r).speed == Speed::Fast) {
                    out.push(format!("V0slow node {name} has an outgoing fast edge"));
                }
            }
            NodeTag::V1 => {
                if net.in_edges(x).iter().any(|&r| edges.tags[r] == EdgeTag::FastCycle) {
                    out.push(format!("V1 node {name} has an incoming fast-cycle edge"));
                }
                if outs.iter().any(|&r| net.edge(r).speed == Speed::Slow) {
                    out.push(format!("V1 node {name} has an outgoing slow edge"));
                }
            }
            NodeTag::V0Fcyc => {
                if outs
                    .iter()
                    .any(|&r| !matches!(edges.tags[r], EdgeTag::Slow | EdgeTag::FastCycle))
                {
                    out.push(format!("V0fcyc node {name} has an outgoing damped edge"));
                }
            }
        }
    }
    out
}

/// Full decomposition with the structural checks.
pub fn decompose(net: &Network, tol: &Tolerances) -> Result<Decomposition> {
    let node_class = classify_nodes(net, tol)?;
    let edge_class = classify_edges(net, &node_class)?;
    let fast_components = fast_components(net, &node_class, &edge_class)?;
    let violations = categorisation_violations(net, &node_class, &edge_class);
    let checks = StructuralChecks {
        fast_cycles: true,
        node_categorisation: violations.is_empty(),
        violations,
    };
    if !checks.node_categorisation {
        return Err(Error::Structural(checks.violations.join("; ")));
    }
    Ok(Decomposition {
        node_class,
        edge_class,
        fast_components,
        checks,
    })
}

#[derive(Serialize)]
struct NodeEntry<'a> {
    id: &'a str,
    class: NodeTag,
    exponent: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pi_tilde: Option<f64>,
    extrapolated: f64,
}

#[derive(Serialize)]
struct EdgeEntry {
    edge: String,
    class: EdgeTag,
}

#[derive(Serialize)]
struct ComponentEntry<'a> {
    nodes: Vec<&'a str>,
    pi: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    nodes: Vec<NodeEntry<'a>>,
    edges: Vec<EdgeEntry>,
    components: Vec<ComponentEntry<'a>>,
    damped_cycle: bool,
    extrapolation_gap: f64,
    checks: &'a StructuralChecks,
}

/// JSON report used by `fastflux analyze`.
pub fn decomposition_report(net: &Network, d: &Decomposition) -> serde_json::Value {
    let nc = &d.node_class;
    let report = Report {
        nodes: (0..net.node_count())
            .map(|x| NodeEntry {
                id: net.nodes()[x].as_str(),
                class: nc.tags[x],
                exponent: nc.exponents[x],
                pi: nc.tags[x].is_v0().then(|| nc.pi_limit[x]),
                pi_tilde: (!nc.tags[x].is_v0()).then(|| nc.pi_tilde[x]),
                extrapolated: nc.richardson[x],
            })
            .collect(),
        edges: (0..net.edge_count())
            .map(|r| EdgeEntry {
                edge: net.edge_label(r),
                class: d.edge_class.tags[r],
            })
            .collect(),
        components: d
            .fast_components
            .components
            .iter()
            .zip(&d.fast_components.pi_c)
            .map(|(c, &pi)| ComponentEntry {
                nodes: c.iter().map(|&x| net.nodes()[x].as_str()).collect(),
                pi,
            })
            .collect(),
        damped_cycle: d.has_damped_cycle(),
        extrapolation_gap: nc.extrapolation_gap(),
        checks: &d.checks,
    };
    serde_json::to_value(report).expect("report serialises")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::parse_network;

    const FAST_TRIANGLE: &str = "nodes: 1 2 3 4 5
1 -> 2 rate=1 speed=fast
2 -> 3 rate=1 speed=fast
3 -> 1 rate=1 speed=fast
5 -> 4 rate=1 speed=fast
4 -> 1 rate=1 speed=slow
2 -> 5 rate=1 speed=slow
4 -> 5 rate=1 speed=slow
";

    const DAMPED_CYCLE: &str = "nodes: 1 2 3 4
1 -> 2 rate=1 speed=fast
2 -> 3 rate=1 speed=fast
3 -> 1 rate=1 speed=fast
2 -> 4 rate=1 speed=fast
4 -> 1 rate=1 speed=slow
";

    #[test]
    fn fast_triangle_classes() {
        let net = parse_network(FAST_TRIANGLE).unwrap();
        let d = decompose(&net, &Tolerances::default()).unwrap();
        use NodeTag::*;
        assert_eq!(d.node_class.tags, vec![V0Fcyc, V0Fcyc, V0Fcyc, V0Slow, V1]);
        use EdgeTag::*;
        assert_eq!(
            d.edge_class.tags,
            vec![FastCycle, FastCycle, FastCycle, DampedNoCycle, Slow, Slow, Slow]
        );
        assert_eq!(d.fast_components.components, vec![vec![0, 1, 2]]);
        assert!(!d.has_damped_cycle());
    }

    #[test]
    fn fast_triangle_limit_weights_by_hand() {
        // Component mass m, node 4 mass p, node 5 weight q:
        // q = m/3 + p (V1 balance), 2p = q (node 4), m + p = 1: m = 3/4, p = 1/4.
        let net = parse_network(FAST_TRIANGLE).unwrap();
        let nc = classify_nodes(&net, &Tolerances::default()).unwrap();
        let (m, p) = (0.75, 0.25);
        for x in 0..3 {
            assert!((nc.pi_limit[x] - m / 3.0).abs() < 1e-12);
        }
        assert!((nc.pi_limit[3] - p).abs() < 1e-12);
        assert!((nc.pi_tilde[4] - 0.5).abs() < 1e-12);
        assert!(nc.extrapolation_gap() < 1e-6);
    }

    #[test]
    fn damped_cycle_network() {
        let net = parse_network(DAMPED_CYCLE).unwrap();
        let d = decompose(&net, &Tolerances::default()).unwrap();
        use NodeTag::*;
        assert_eq!(d.node_class.tags, vec![V1, V1, V1, V0Slow]);
        use EdgeTag::*;
        assert_eq!(
            d.edge_class.tags,
            vec![DampedCycle, DampedCycle, DampedCycle, DampedNoCycle, Slow]
        );
        assert!(d.fast_components.components.is_empty());
        assert!((d.node_class.pi_limit[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn leak_edge_is_reported() {
        let text = format!("{FAST_TRIANGLE}5 -> 1 rate=1 speed=slow\n");
        let net = parse_network(&text).unwrap();
        match decompose(&net, &Tolerances::default()) {
            Err(Error::Leak(e)) => assert_eq!(e, "5->1"),
            other => panic!("expected leak, got {other:?}"),
        }
    }

    #[test]
    fn all_slow_network() {
        let net = parse_network("nodes: 1 2\n1 -> 2 rate=1 speed=slow\n2 -> 1 rate=3 speed=slow\n").unwrap();
        let d = decompose(&net, &Tolerances::default()).unwrap();
        assert!(d.node_class.tags.iter().all(|&t| t == NodeTag::V0Slow));
        assert!(d.edge_class.tags.iter().all(|&t| t == EdgeTag::Slow));
        assert!((d.node_class.pi_limit[0] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn two_fast_pairs_give_two_components() {
        let net = parse_network(
            "nodes: a b c d
a -> b rate=1 speed=fast
b -> a rate=2 speed=fast
c -> d rate=1 speed=fast
d -> c rate=1 speed=fast
b -> c rate=1 speed=slow
d -> a rate=1 speed=slow
",
        )
        .unwrap();
        let d = decompose(&net, &Tolerances::default()).unwrap();
        assert_eq!(d.fast_components.components, vec![vec![0, 1], vec![2, 3]]);
        let total: f64 = d.fast_components.pi_c.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dangling_fast_edge_makes_source_v1() {
        // a -> b fast with no fast way back: a carries O(ε) mass.
        let net = parse_network("nodes: a b\na -> b rate=1 speed=fast\nb -> a rate=1 speed=slow\n").unwrap();
        let d = decompose(&net, &Tolerances::default()).unwrap();
        assert_eq!(d.node_class.tags, vec![NodeTag::V1, NodeTag::V0Slow]);
        assert!((d.node_class.pi_tilde[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn second_order_mass_is_rejected() {
        // b is fed slowly from the O(ε) node a and drains fast: O(ε²).
        let net = parse_network(
            "nodes: c a b
c -> a rate=1 speed=slow
a -> c rate=1 speed=fast
a -> b rate=1 speed=slow
b -> c rate=1 speed=fast
",
        )
        .unwrap();
        match decompose(&net, &Tolerances::default()) {
            Err(Error::HigherOrder { node, exponent }) => {
                assert_eq!(node, "b");
                assert!((exponent - 2.0).abs() < 0.1);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn report_lists_every_node_and_edge() {
        let net = parse_network(FAST_TRIANGLE).unwrap();
        let d = decompose(&net, &Tolerances::default()).unwrap();
        let v = decomposition_report(&net, &d);
        assert_eq!(v["nodes"].as_array().unwrap().len(), 5);
        assert_eq!(v["edges"].as_array().unwrap().len(), 7);
        assert_eq!(v["edges"][3]["class"], "DampedNoCycle");
    }
}
