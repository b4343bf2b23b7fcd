use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{Frame, Trajectory};
use crate::decomp::{Decomposition, EdgeTag, NodeTag};
use crate::error::{Error, Result};
use crate::linalg::{uniform_grid, AffinePropagator};
use crate::netmodel::Network;
use crate::tolerance::{PIVOT, WELL_PREPARED};

/// A reduced coordinate: a `V0slow` node or a fast component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Coord {
    Node(usize),
    Component(usize),
}

/// The limit dynamics as a DAE in `(u₀, u₁)` with `u₀` on `V0slow ∪ ℭ`:
///
/// ```text
/// u̇₀ = A00 u₀ + A10 u₁
///  0 = A01 u₀ + A11 u₁
/// ```
///
/// Rows are divided by `π` (for `u₀`) and `π̃` (for `u₁`).
#[derive(Clone, Debug)]
pub struct EffectiveSystem {
    pub coords: Vec<Coord>,
    pub weights: Vec<f64>,
    pub v1: Vec<usize>,
    pub a00: DMatrix<f64>,
    pub a10: DMatrix<f64>,
    pub a01: DMatrix<f64>,
    pub a11: DMatrix<f64>,
    /// `u₁ = reconstruct · u₀`
    pub reconstruct: DMatrix<f64>,
    /// `A00 + A10 · reconstruct`
    pub reduced: DMatrix<f64>,
    pub min_pivot: f64,
    pub condition: f64,
    /// Reduced coordinate of each `V0` node, position in `v1` of each `V1` node.
    slot: Vec<usize>,
}

impl EffectiveSystem {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Reduced coordinates of a per-node vector (component value from any member).
    pub fn reduce(&self, d: &Decomposition, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.coords.iter().map(|c| match *c {
                Coord::Node(x) => u[x],
                Coord::Component(c) => u[d.fast_components.components[c][0]],
            }),
        )
    }

    /// Per-node vector from reduced and `V1` values.
    pub fn expand(&self, d: &Decomposition, u0: &DVector<f64>, u1: &DVector<f64>) -> Vec<f64> {
        (0..self.slot.len())
            .map(|x| match d.node_class.tags[x] {
                NodeTag::V1 => u1[self.slot[x]],
                _ => u0[self.slot[x]],
            })
            .collect()
    }

    /// JSON dump of the blocks.
    pub fn to_json(&self, net: &Network, d: &Decomposition) -> serde_json::Value {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        let names: Vec<String> = self
            .coords
            .iter()
            .map(|c| match *c {
                Coord::Node(x) => net.nodes()[x].to_string(),
                Coord::Component(c) => {
                    let ids: Vec<&str> = d.fast_components.components[c]
                        .iter()
                        .map(|&x| net.nodes()[x].as_str())
                        .collect();
                    format!("{{{}}}", ids.join(","))
                }
            })
            .collect();
        let v1: Vec<&str> = self.v1.iter().map(|&x| net.nodes()[x].as_str()).collect();
        serde_json::json!({
            "reduced_coordinates": names,
            "reduced_weights": self.weights,
            "v1_nodes": v1,
            "v1_weights": self.v1.iter().map(|&x| d.node_class.pi_tilde[x]).collect::<Vec<_>>(),
            "A00": rows(&self.a00),
            "A10": rows(&self.a10),
            "A01": rows(&self.a01),
            "A11": rows(&self.a11),
            "reconstruct_V1": rows(&self.reconstruct),
            "reduced_drift": rows(&self.reduced),
            "A11_min_pivot": self.min_pivot,
            "A11_condition": self.condition,
        })
    }
}

/// Assemble the effective blocks from the limit weights and base rates.
pub fn build_effective(net: &Network, d: &Decomposition) -> Result<EffectiveSystem> {
    let nc = &d.node_class;
    let fc = &d.fast_components;
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    let mut slot = vec![0; net.node_count()];
    for x in d.v0slow() {
        slot[x] = coords.len();
        coords.push(Coord::Node(x));
        weights.push(nc.pi_limit[x]);
    }
    for (c, comp) in fc.components.iter().enumerate() {
        for &x in comp {
            slot[x] = coords.len();
        }
        coords.push(Coord::Component(c));
        weights.push(fc.pi_c[c]);
    }
    let v1 = d.v1();
    for (i, &x) in v1.iter().enumerate() {
        slot[x] = i;
    }
    let (m, p) = (coords.len(), v1.len());
    let mut a00 = DMatrix::<f64>::zeros(m, m);
    let mut a10 = DMatrix::<f64>::zeros(m, p);
    let mut a01 = DMatrix::<f64>::zeros(p, m);
    let mut a11 = DMatrix::<f64>::zeros(p, p);
    for (r, e) in net.edges().iter().enumerate() {
        let tag = d.edge_class.tags[r];
        if tag == EdgeTag::FastCycle {
            continue;
        }
        // Flux coefficient on the source variable.
        let k = e.rate * nc.weight(e.src);
        let (s, t) = (slot[e.src], slot[e.dst]);
        let src_v1 = nc.tags[e.src] == NodeTag::V1;
        let dst_v1 = nc.tags[e.dst] == NodeTag::V1;
        if !src_v1 && !dst_v1 && s == t {
            continue;
        }
        match (src_v1, dst_v1) {
            (false, false) => {
                a00[(s, s)] -= k;
                a00[(t, s)] += k;
            }
            (false, true) => {
                a00[(s, s)] -= k;
                a01[(t, s)] += k;
            }
            (true, false) => {
                a11[(s, s)] -= k;
                a10[(t, s)] += k;
            }
            (true, true) => {
                a11[(s, s)] -= k;
                a11[(t, s)] += k;
            }
        }
    }
    for i in 0..m {
        let w = weights[i];
        a00.row_mut(i).iter_mut().for_each(|v| *v /= w);
        a10.row_mut(i).iter_mut().for_each(|v| *v /= w);
    }
    for (i, &x) in v1.iter().enumerate() {
        let w = nc.pi_tilde[x];
        a01.row_mut(i).iter_mut().for_each(|v| *v /= w);
        a11.row_mut(i).iter_mut().for_each(|v| *v /= w);
    }
    let (reconstruct, min_pivot, condition) = if p == 0 {
        (DMatrix::zeros(0, m), f64::INFINITY, 1.0)
    } else {
        let lu = a11.clone().lu();
        let u = lu.u();
        let scale = a11.amax();
        let min_pivot = (0..p).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        if !(min_pivot > PIVOT * scale) {
            return Err(Error::SingularV1Block { pivot: min_pivot });
        }
        let sv = a11.singular_values();
        let condition = sv.max() / sv.min();
        let sol = lu.solve(&a01).ok_or(Error::SingularV1Block { pivot: min_pivot })?;
        (-sol, min_pivot, condition)
    };
    let reduced = &a00 + &a10 * &reconstruct;
    Ok(EffectiveSystem {
        coords,
        weights,
        v1,
        a00,
        a10,
        a01,
        a11,
        reconstruct,
        reduced,
        min_pivot,
        condition,
        slot,
    })
}

/// Average over each component with weights `π_x`, then solve for `u_{V1}`.
pub fn well_prepare(u0: &[f64], d: &Decomposition, sys: &EffectiveSystem) -> Vec<f64> {
    let mut u = u0.to_vec();
    for (c, comp) in d.fast_components.components.iter().enumerate() {
        let avg = comp.iter().map(|&x| d.node_class.pi_limit[x] * u0[x]).sum::<f64>() / d.fast_components.pi_c[c];
        for &x in comp {
            u[x] = avg;
        }
    }
    let r = sys.reduce(d, &u);
    let u1 = &sys.reconstruct * &r;
    sys.expand(d, &r, &u1)
}

/// Exact propagation of the reduced ODE; `V1` densities follow algebraically.
pub fn simulate_effective(
    net: &Network,
    d: &Decomposition,
    sys: &EffectiveSystem,
    u0: &[f64],
    t_end: f64,
    steps: usize,
) -> Result<Trajectory> {
    if u0.len() != net.node_count() {
        return Err(Error::LengthMismatch {
            expected: net.node_count(),
            found: u0.len(),
        });
    }
    if steps == 0 || !(t_end > 0.0) {
        return Err(Error::Config("simulation needs T > 0 and at least one step".into()));
    }
    let prepared = well_prepare(u0, d, sys);
    let scale = u0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let dev = prepared.iter().zip(u0).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if !(dev <= WELL_PREPARED * scale) {
        return Err(Error::NotWellPrepared(dev));
    }
    let nc = &d.node_class;
    let flux_of = |u: &[f64]| -> Vec<f64> {
        net.edges()
            .iter()
            .enumerate()
            .map(|(r, e)| match d.edge_class.tags[r] {
                EdgeTag::FastCycle => 0.0,
                _ => e.rate * nc.weight(e.src) * u[e.src],
            })
            .collect()
    };
    let prop = AffinePropagator::new(&sys.reduced, t_end / steps as f64)?;
    let mut r = sys.reduce(d, &prepared);
    let mut density = vec![prepared.clone()];
    let mut flux = vec![flux_of(&prepared)];
    let mut interval = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (next, int) = prop.step(&r);
        let int1 = &sys.reconstruct * &int;
        interval.push(flux_of(&sys.expand(d, &int, &int1)));
        r = next;
        let u1 = &sys.reconstruct * &r;
        let u = sys.expand(d, &r, &u1);
        flux.push(flux_of(&u));
        density.push(u);
    }
    let mut traj = Trajectory::new(Frame::Limit, uniform_grid(t_end, steps), density, flux)?;
    traj.interval_flux = Some(interval);
    Ok(traj)
}
