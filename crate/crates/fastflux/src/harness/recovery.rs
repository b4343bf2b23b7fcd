//! Recovery families: from a limit pair `(u, j)` to ε-trajectories whose cost
//! converges to the limit cost.
//!
//! The limit pair is regularised first (heat-kernel smoothing with width δ,
//! `+δ` on all densities, a constant circulation along a closed walk through
//! every slow and damped edge). For each ε the fluxes are then corrected so a
//! hub node in `V0slow` feeds each `V1` node `y` with `π^ε_y u̇_y` along a fixed
//! chain, and the ε-densities are recovered from the ε-continuity equations by
//! exact propagation.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mollify::{Extension, Mollifier, Series};
use crate::decomp::{Decomposition, EdgeTag, NodeTag};
use crate::dynamics::{Frame, Trajectory};
use crate::error::{Error, Result};
use crate::extreal::ExtReal;
use crate::functionals::{eps_continuity_residual, eval_j_eps, eval_j_limit, limit_continuity_residual, FunctionalReport};
use crate::linalg::AffinePropagator;
use crate::netmodel::{assemble_rates, stationary_distribution, Network, StationaryDist};
use crate::tolerance::Tolerances;

/// Hard bound on the ε-continuity residual of every recovery trajectory.
pub const RECOVERY_RESIDUAL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryConfig {
    /// Strictly decreasing ε values.
    pub eps: Vec<f64>,
    /// `δ = delta_scale · ε^delta_exponent`.
    pub delta_exponent: f64,
    pub delta_scale: f64,
    /// Steps on the interior of `[0, T]` and inside each boundary layer.
    pub interior_steps: usize,
    pub layer_steps: usize,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            eps: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            delta_exponent: 1.0,
            delta_scale: 1.0,
            interior_steps: 2000,
            layer_steps: 400,
        }
    }
}

impl RecoveryConfig {
    pub fn delta(&self, eps: f64) -> f64 {
        self.delta_scale * eps.powf(self.delta_exponent)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingChain {
    pub target: String,
    pub edges: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryPoint {
    pub eps: f64,
    pub delta: f64,
    pub stationary: StationaryDist,
    pub trajectory: Trajectory,
    pub residual: f64,
    pub report: FunctionalReport,
}

impl RecoveryPoint {
    pub fn cost(&self) -> ExtReal {
        self.report.total
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroppedEps {
    pub eps: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryFamily {
    pub hub: String,
    /// Set when `V0slow` is empty and the hub sits in a fast component.
    pub hub_fallback: bool,
    pub chains: Vec<RoutingChain>,
    /// Closed walk through every slow and damped edge (empty without `V1`).
    pub walk: Vec<String>,
    pub limit: FunctionalReport,
    pub points: Vec<RecoveryPoint>,
    pub dropped: Vec<DroppedEps>,
}

impl RecoveryFamily {
    /// `|cost(ε) − limit cost|` per kept ε.
    pub fn gaps(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| (p.cost().to_f64() - self.limit.total.to_f64()).abs())
            .collect()
    }
}

/// Shortest edge path from `from` to `to` over all edges.
fn bfs_path(net: &Network, from: usize, to: usize) -> Option<Vec<usize>> {
    let mut prev: Vec<Option<usize>> = vec![None; net.node_count()];
    let mut seen = vec![false; net.node_count()];
    seen[from] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(x) = queue.pop_front() {
        if x == to {
            break;
        }
        for &r in net.out_edges(x) {
            let y = net.edge(r).dst;
            if !seen[y] {
                seen[y] = true;
                prev[y] = Some(r);
                queue.push_back(y);
            }
        }
    }
    if !seen[to] {
        return None;
    }
    let mut path = Vec::new();
    let mut x = to;
    while x != from {
        let r = prev[x]?;
        path.push(r);
        x = net.edge(r).src;
    }
    path.reverse();
    Some(path)
}

/// Closed walk that traverses every edge in `required` at least once.
fn covering_walk(net: &Network, required: &[usize]) -> Result<Vec<usize>> {
    let Some(&first) = required.first() else {
        return Ok(Vec::new());
    };
    let start = net.edge(first).src;
    let mut walk = Vec::new();
    let mut covered = vec![false; net.edge_count()];
    let mut cur = start;
    let unreachable = || Error::Structural("network is not diconnected".into());
    for &r in required {
        if covered[r] {
            continue;
        }
        let e = net.edge(r);
        for p in bfs_path(net, cur, e.src).ok_or_else(unreachable)? {
            covered[p] = true;
            walk.push(p);
        }
        covered[r] = true;
        walk.push(r);
        cur = e.dst;
    }
    walk.extend(bfs_path(net, cur, start).ok_or_else(unreachable)?);
    Ok(walk)
}

/// Grid on `[0, T]` refined inside the two boundary layers of width `layer`.
fn layered_grid(t_end: f64, layer: f64, interior: usize, layer_steps: usize) -> Vec<f64> {
    if 2.0 * layer >= t_end {
        let n = interior + 2 * layer_steps;
        return (0..=n).map(|k| t_end * k as f64 / n as f64).collect();
    }
    let mut grid: Vec<f64> = (0..layer_steps).map(|k| layer * k as f64 / layer_steps as f64).collect();
    let span = t_end - 2.0 * layer;
    grid.extend((0..interior).map(|k| layer + span * k as f64 / interior as f64));
    grid.extend((0..=layer_steps).map(|k| t_end - layer + layer * k as f64 / layer_steps as f64));
    grid
}

/// Propagators keyed by step length; the layered grid has only a few.
struct PropagatorCache<'a> {
    m: &'a DMatrix<f64>,
    cache: HashMap<u64, AffinePropagator>,
}

impl PropagatorCache<'_> {
    fn get(&mut self, dt: f64) -> Result<&AffinePropagator> {
        let key = dt.to_bits();
        if !self.cache.contains_key(&key) {
            self.cache.insert(key, AffinePropagator::new(self.m, dt)?);
        }
        Ok(&self.cache[&key])
    }
}

/// Smoothed limit pair sampled on a grid.
struct Regularised {
    u: Vec<Vec<f64>>,
    j: Vec<Vec<f64>>,
    /// `u̇` for every node (only `V1` entries are used).
    udot: Vec<Vec<f64>>,
}

fn regularise(net: &Network, d: &Decomposition, limit: &Trajectory, delta: f64, grid: &[f64]) -> Regularised {
    let n = net.node_count();
    let mut series = Vec::with_capacity(n + net.edge_count());
    for x in 0..n {
        let v1 = d.node_class.tags[x] == NodeTag::V1;
        series.push(Series {
            values: limit.node_series(x),
            extension: if v1 { Extension::Zero } else { Extension::Constant },
            atoms: limit.atoms.iter().filter(|a| a.density[x] != 0.0).map(|a| (a.time, a.density[x])).collect(),
        });
    }
    for r in 0..net.edge_count() {
        series.push(Series {
            values: limit.edge_series(r),
            extension: Extension::Zero,
            atoms: limit.atoms.iter().filter(|a| a.flux[r] != 0.0).map(|a| (a.time, a.flux[r])).collect(),
        });
    }
    let moll = Mollifier::new(&limit.grid, delta);
    let mut out = Regularised { u: Vec::new(), j: Vec::new(), udot: Vec::new() };
    for &t in grid {
        let (val, der) = moll.eval(&series, t);
        out.u.push(val[..n].iter().map(|v| v + delta).collect());
        out.j.push(val[n..].to_vec());
        out.udot.push(der[..n].to_vec());
    }
    out
}

/// Build the recovery family of a limit pair along `cfg.eps`.
///
/// An ε is dropped (and listed) when a corrected flux or a recovered density
/// turns negative. Every kept trajectory satisfies the ε-continuity equations
/// with residual at most [`RECOVERY_RESIDUAL`]; a larger residual is an error.
pub fn build_recovery(
    net: &Network,
    d: &Decomposition,
    limit: &Trajectory,
    cfg: &RecoveryConfig,
    tol: &Tolerances,
) -> Result<RecoveryFamily> {
    limit.expect_frame("limit")?;
    if cfg.eps.is_empty() || cfg.eps.iter().any(|e| !(*e > 0.0)) || cfg.eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("recovery ε list must be positive and strictly decreasing".into()));
    }
    let (residual, l1) = limit_continuity_residual(net, limit, d)?;
    if residual > tol.continuity * (1.0 + l1) {
        return Err(Error::Structural(format!("limit pair violates the limit continuity equations by {residual:e}")));
    }
    let limit_report = eval_j_limit(net, limit, d, tol)?;
    let n = net.node_count();
    let tags = &d.edge_class.tags;
    let nc = &d.node_class;
    let fc = &d.fast_components;
    let v1 = d.v1();

    // Hub: the V0slow node with the largest minimal mass.
    let min_mass = |x: usize| limit.density.iter().map(|u| nc.pi_limit[x] * u[x]).fold(f64::INFINITY, f64::min);
    let slow = d.v0slow();
    let (hub, hub_fallback) = match slow.iter().copied().max_by(|&a, &b| min_mass(a).total_cmp(&min_mass(b))) {
        Some(x) => (x, false),
        None => ((0..n).find(|&x| nc.tags[x].is_v0()).ok_or(Error::Empty)?, true),
    };
    let mut chain_count: Vec<Vec<usize>> = vec![Vec::new(); net.edge_count()];
    let mut chains = Vec::new();
    for &y in &v1 {
        let path = bfs_path(net, hub, y).ok_or_else(|| Error::Structural("network is not diconnected".into()))?;
        for &r in &path {
            chain_count[r].push(y);
        }
        chains.push(RoutingChain {
            target: net.nodes()[y].to_string(),
            edges: path.iter().map(|&r| net.edge_label(r)).collect(),
        });
    }
    let walk = if v1.is_empty() {
        Vec::new()
    } else {
        let required: Vec<usize> = (0..net.edge_count()).filter(|&r| tags[r] != EdgeTag::FastCycle).collect();
        covering_walk(net, &required)?
    };
    let mut walk_count = vec![0.0; net.edge_count()];
    for &r in &walk {
        walk_count[r] += 1.0;
    }

    // Component block of the fast generator, on component nodes only.
    let comp_nodes: Vec<usize> = fc.components.iter().flatten().copied().collect();
    let slot: HashMap<usize, usize> = comp_nodes.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let t_end = limit.grid[limit.grid.len() - 1];

    let mut points = Vec::new();
    let mut dropped = Vec::new();
    for &eps in &cfg.eps {
        let delta = cfg.delta(eps);
        let sigma = (2.0 * delta).sqrt();
        let grid = layered_grid(t_end, 10.0 * sigma, cfg.interior_steps, cfg.layer_steps);
        let reg = regularise(net, d, limit, delta, &grid);
        let pi = stationary_distribution(net, eps)?;
        let rates = assemble_rates(net, eps).values;
        let circulation: f64 = delta
            * v1.iter()
                .map(|&y| nc.pi_tilde[y] * reg.udot.iter().map(|ud| ud[y].abs()).fold(0.0, f64::max))
                .sum::<f64>();
        let sq = eps.sqrt();
        // Flux variables: j on slow/damped edges, ȷ̃ on fast-cycle edges.
        let flux: Vec<Vec<f64>> = (0..grid.len())
            .map(|k| {
                (0..net.edge_count())
                    .map(|r| {
                        let extra = walk_count[r] * circulation
                            + chain_count[r].iter().map(|&y| pi.pi[y] * reg.udot[k][y]).sum::<f64>();
                        match tags[r] {
                            EdgeTag::FastCycle => reg.j[k][r] + sq * extra,
                            _ => reg.j[k][r] + extra,
                        }
                    })
                    .collect()
            })
            .collect();
        if let Some((k, r)) = (0..grid.len())
            .flat_map(|k| (0..net.edge_count()).map(move |r| (k, r)))
            .find(|&(k, r)| tags[r] != EdgeTag::FastCycle && flux[k][r] < 0.0)
        {
            dropped.push(DroppedEps {
                eps,
                reason: format!("corrected flux on {} is negative at t = {}", net.edge_label(r), grid[k]),
            });
            continue;
        }

        // Divergence of slow/damped fluxes plus the ȷ̃ part of fast-cycle fluxes.
        let forcing = |k: usize| -> Vec<f64> {
            let mut f = vec![0.0; n];
            for (r, e) in net.edges().iter().enumerate() {
                let v = match tags[r] {
                    EdgeTag::FastCycle => flux[k][r] / sq,
                    _ => flux[k][r],
                };
                f[e.src] -= v;
                f[e.dst] += v;
            }
            f
        };
        let mut rho0 = vec![0.0; n];
        for x in 0..n {
            rho0[x] = match nc.tags[x] {
                NodeTag::V0Slow => nc.pi_limit[x] * reg.u[0][x],
                NodeTag::V1 => pi.pi[x] * reg.u[0][x],
                NodeTag::V0Fcyc => {
                    let c = fc.component_of[x].expect("component node");
                    let uc = fc.components[c].iter().map(|&z| nc.pi_limit[z] * reg.u[0][z]).sum::<f64>() / fc.pi_c[c];
                    pi.pi[x] * uc
                }
            };
        }
        let mut m = DMatrix::<f64>::zeros(comp_nodes.len(), comp_nodes.len());
        for (r, e) in net.edges().iter().enumerate() {
            if tags[r] == EdgeTag::FastCycle {
                let (a, b) = (slot[&e.src], slot[&e.dst]);
                m[(a, a)] -= rates[r];
                m[(b, a)] += rates[r];
            }
        }
        let mut props = PropagatorCache { m: &m, cache: HashMap::new() };
        let mut rho = vec![rho0];
        let mut interval = Vec::with_capacity(grid.len() - 1);
        let mut f_prev = forcing(0);
        for k in 0..grid.len() - 1 {
            let dt = grid[k + 1] - grid[k];
            let f_next = forcing(k + 1);
            let mut next = rho[k].clone();
            let mut int_flux: Vec<f64> = (0..net.edge_count()).map(|r| 0.5 * dt * (flux[k][r] + flux[k + 1][r])).collect();
            for x in 0..n {
                if fc.component_of[x].is_none() {
                    next[x] += 0.5 * dt * (f_prev[x] + f_next[x]);
                }
            }
            if !comp_nodes.is_empty() {
                let take = |v: &[f64]| DVector::from_iterator(comp_nodes.len(), comp_nodes.iter().map(|&x| v[x]));
                let (end, int) = props.get(dt)?.step_forced(&take(&rho[k]), &take(&f_prev), &take(&f_next));
                for (i, &x) in comp_nodes.iter().enumerate() {
                    next[x] = end[i];
                }
                for (r, e) in net.edges().iter().enumerate() {
                    if tags[r] == EdgeTag::FastCycle {
                        int_flux[r] = rates[r] * int[slot[&e.src]] + int_flux[r] / sq;
                    }
                }
            }
            interval.push(int_flux);
            rho.push(next);
            f_prev = f_next;
        }
        if let Some((k, x)) = (0..grid.len())
            .flat_map(|k| (0..n).map(move |x| (k, x)))
            .find(|&(k, x)| !(rho[k][x] > 0.0))
        {
            dropped.push(DroppedEps {
                eps,
                reason: format!("recovered density at {} is not positive at t = {}", net.nodes()[x], grid[k]),
            });
            continue;
        }
        let density: Vec<Vec<f64>> = rho.iter().map(|r| r.iter().zip(&pi.pi).map(|(a, p)| a / p).collect()).collect();
        let mut trajectory = Trajectory::new(Frame::Rescaled { eps }, grid, density, flux)?;
        trajectory.interval_flux = Some(interval);
        let (residual, _) = eps_continuity_residual(net, &trajectory, d, &pi)?;
        if !(residual <= RECOVERY_RESIDUAL) {
            return Err(Error::SingularSolve { residual, tolerance: RECOVERY_RESIDUAL });
        }
        let report = eval_j_eps(net, &trajectory, d, &pi, tol)?;
        points.push(RecoveryPoint { eps, delta, stationary: pi, trajectory, residual, report });
    }
    Ok(RecoveryFamily {
        hub: net.nodes()[hub].to_string(),
        hub_fallback,
        chains,
        walk: walk.iter().map(|&r| net.edge_label(r)).collect(),
        limit: limit_report,
        points,
        dropped,
    })
}
