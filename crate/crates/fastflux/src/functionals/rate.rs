use serde::{Deserialize, Serialize};

use super::{rel_entropy, trapezoid_ext};
use crate::decomp::{Decomposition, EdgeTag, NodeTag};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::extreal::ExtReal;
use crate::netmodel::{assemble_rates, divergence, Network, StationaryDist};
use crate::tolerance::Tolerances;

/// Per-term values of `Ĩ₀ + 𝒥` in either frame.
///
/// `total` is `∞` when the continuity residual exceeds its tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub frame: String,
    pub eps: Option<f64>,
    pub i0: ExtReal,
    pub j_slow: ExtReal,
    pub j_damp: ExtReal,
    pub j_fcyc: ExtReal,
    pub fisher: Option<f64>,
    pub continuity_residual: f64,
    pub continuity_tolerance: f64,
    pub total: ExtReal,
}

impl FunctionalReport {
    pub fn j_total(&self) -> ExtReal {
        self.j_slow + self.j_damp + self.j_fcyc
    }

    fn finish(mut self) -> Self {
        self.total = if self.continuity_residual <= self.continuity_tolerance {
            self.i0 + self.j_total()
        } else {
            ExtReal::PosInfinity
        };
        self
    }
}

/// `Ĩ₀^ε(u) = Σ_x s(π^ε_x u_x | π^ε_x)`.
pub fn eval_i0_eps(u: &[f64], pi: &[f64]) -> ExtReal {
    u.iter().zip(pi).map(|(u, p)| rel_entropy(p * u, *p)).sum()
}

/// `Ĩ⁰₀(u) = Σ_{V0slow} s(π_x u_x|π_x) + Σ_ℭ s(π_𝔠 u_𝔠|π_𝔠)` with
/// `π_𝔠 u_𝔠 = Σ_{x∈𝔠} π_x u_x`. `V1` entries are ignored.
pub fn eval_i0_limit(u: &[f64], d: &Decomposition) -> ExtReal {
    let pi = &d.node_class.pi_limit;
    let slow: ExtReal = d.v0slow().iter().map(|&x| rel_entropy(pi[x] * u[x], pi[x])).sum();
    let comps: ExtReal = d
        .fast_components
        .components
        .iter()
        .zip(&d.fast_components.pi_c)
        .map(|(c, pc)| rel_entropy(c.iter().map(|&x| pi[x] * u[x]).sum(), *pc))
        .sum();
    slow + comps
}

/// Interval integrals of the physical flux of a rescaled trajectory.
fn physical_intervals(net: &Network, traj: &Trajectory, d: &Decomposition, pi: &[f64], eps: f64) -> Vec<Vec<f64>> {
    if let Some(int) = &traj.interval_flux {
        return int.clone();
    }
    let rates = assemble_rates(net, eps).values;
    let phys: Vec<Vec<f64>> = traj
        .flux
        .iter()
        .zip(&traj.density)
        .map(|(j, u)| {
            (0..net.edge_count())
                .map(|r| match d.edge_class.tags[r] {
                    EdgeTag::FastCycle => {
                        let s = net.edge(r).src;
                        rates[r] * pi[s] * u[s] + j[r] / eps.sqrt()
                    }
                    _ => j[r],
                })
                .collect()
        })
        .collect();
    (0..traj.steps())
        .map(|k| {
            (0..net.edge_count())
                .map(|r| 0.5 * (traj.grid[k + 1] - traj.grid[k]) * (phys[k][r] + phys[k + 1][r]))
                .collect()
        })
        .collect()
}

/// Largest mild continuity residual `|π^ε_x Δu_x + (div j[t_k, t_{k+1}])_x|`
/// and the physical flux `L¹` norm.
pub fn eps_continuity_residual(
    net: &Network,
    traj: &Trajectory,
    d: &Decomposition,
    pi: &StationaryDist,
) -> Result<(f64, f64)> {
    traj.expect_frame("rescaled")?;
    let eps = traj.frame.eps().expect("rescaled frame carries ε");
    let ints = physical_intervals(net, traj, d, &pi.pi, eps);
    let mut residual = 0.0f64;
    let mut l1 = 0.0;
    for (k, int) in ints.iter().enumerate() {
        let div = divergence(net, int)?;
        l1 += int.iter().map(|v| v.abs()).sum::<f64>();
        for x in 0..net.node_count() {
            let dm = pi.pi[x] * (traj.density[k + 1][x] - traj.density[k][x]);
            residual = residual.max((dm + div[x]).abs());
        }
    }
    Ok((residual, l1))
}

/// Rescaled rate functional of a trajectory in the rescaled frame.
pub fn eval_j_eps(
    net: &Network,
    traj: &Trajectory,
    d: &Decomposition,
    pi: &StationaryDist,
    tol: &Tolerances,
) -> Result<FunctionalReport> {
    traj.expect_frame("rescaled")?;
    let eps = traj.frame.eps().expect("rescaled frame carries ε");
    if (pi.epsilon - eps).abs() > 1e-12 * eps {
        return Err(Error::Config("stationary law and trajectory use different ε".into()));
    }
    let rates = assemble_rates(net, eps).values;
    let mut terms = [ExtReal::ZERO; 3];
    for (r, e) in net.edges().iter().enumerate() {
        let vals: Vec<ExtReal> = traj
            .flux
            .iter()
            .zip(&traj.density)
            .map(|(j, u)| {
                let base = rates[r] * pi.pi[e.src] * u[e.src];
                match d.edge_class.tags[r] {
                    EdgeTag::FastCycle => rel_entropy(base + j[r] / eps.sqrt(), base),
                    _ => rel_entropy(j[r], base),
                }
            })
            .collect();
        let slot = match d.edge_class.tags[r] {
            EdgeTag::Slow => 0,
            EdgeTag::FastCycle => 2,
            _ => 1,
        };
        terms[slot] = terms[slot] + trapezoid_ext(&traj.grid, &vals);
    }
    let (residual, l1) = eps_continuity_residual(net, traj, d, pi)?;
    Ok(FunctionalReport {
        frame: "eps".into(),
        eps: Some(eps),
        i0: eval_i0_eps(&traj.density[0], &pi.pi),
        j_slow: terms[0],
        j_damp: terms[1],
        j_fcyc: terms[2],
        fisher: Some(super::fisher_info(net, traj, pi)?),
        continuity_residual: residual,
        continuity_tolerance: tol.continuity * (1.0 + l1),
        total: ExtReal::ZERO,
    }
    .finish())
}

fn component_values(traj: &Trajectory, d: &Decomposition, k: usize) -> Vec<f64> {
    let pi = &d.node_class.pi_limit;
    d.fast_components
        .components
        .iter()
        .zip(&d.fast_components.pi_c)
        .map(|(c, pc)| c.iter().map(|&x| pi[x] * traj.density[k][x]).sum::<f64>() / pc)
        .collect()
}

/// Source density of edge `r` at grid index `k`, with `u_𝔠` for component nodes.
fn source_density(net: &Network, traj: &Trajectory, d: &Decomposition, comps: &[f64], r: usize, k: usize) -> f64 {
    let s = net.edge(r).src;
    match d.fast_components.component_of[s] {
        Some(c) => comps[c],
        None => traj.density[k][s],
    }
}

fn check_atoms(net: &Network, traj: &Trajectory, d: &Decomposition) -> Result<()> {
    for a in &traj.atoms {
        for (x, w) in a.density.iter().enumerate() {
            if *w != 0.0 && d.node_class.tags[x] != NodeTag::V1 {
                return Err(Error::Structural(format!("atom on the V0 node {}", net.nodes()[x])));
            }
        }
        for (r, w) in a.flux.iter().enumerate() {
            if *w != 0.0 && !d.edge_class.tags[r].is_damped() {
                return Err(Error::Structural(format!("atom on the undamped edge {}", net.edge_label(r))));
            }
        }
    }
    Ok(())
}

/// Largest residual of the limit continuity equations, and the flux `L¹` norm.
///
/// Checked: mild balances on `V0slow` and on each component (atoms at `t_k`
/// count towards the interval ending at `t_k`), `u_x = u_𝔠` on components,
/// `div ȷ̃ = 0` inside components, and `div j = 0` on `V1` for the density
/// part and for every atom.
pub fn limit_continuity_residual(net: &Network, traj: &Trajectory, d: &Decomposition) -> Result<(f64, f64)> {
    traj.expect_frame("limit")?;
    let nc = &d.node_class;
    let fc = &d.fast_components;
    let n = net.node_count();
    let steps = traj.steps();
    let per_edge: Vec<Vec<f64>> = (0..net.edge_count()).map(|r| traj.interval_integrals(r)).collect();
    let ints: Vec<Vec<f64>> = (0..steps)
        .map(|k| per_edge.iter().map(|col| col[k]).collect())
        .collect();
    // Balance group of each node: V0slow node, component, or V1 node.
    let group = |x: usize| match fc.component_of[x] {
        Some(c) => n + c,
        None => x,
    };
    let mut l1: f64 = ints.iter().flatten().map(|v| v.abs()).sum();
    l1 += traj.atoms.iter().flat_map(|a| a.flux.iter()).map(|v| v.abs()).sum::<f64>();
    let mut residual = 0.0f64;

    let balance = |fluxes: &[f64]| -> Vec<f64> {
        // net inflow per group over non-fast-cycle edges
        let mut inflow = vec![0.0; n + fc.components.len()];
        for (r, e) in net.edges().iter().enumerate() {
            if d.edge_class.tags[r] == EdgeTag::FastCycle {
                continue;
            }
            let (s, t) = (group(e.src), group(e.dst));
            if s != t {
                inflow[t] += fluxes[r];
                inflow[s] -= fluxes[r];
            }
        }
        inflow
    };

    let mut comps_prev = component_values(traj, d, 0);
    for k in 0..steps {
        let mut fluxes = ints[k].clone();
        for a in &traj.atoms {
            let inside = a.time > traj.grid[k] && a.time <= traj.grid[k + 1]
                || (k == 0 && a.time == traj.grid[0]);
            if inside {
                for r in 0..net.edge_count() {
                    fluxes[r] += a.flux[r];
                }
            }
        }
        let inflow = balance(&fluxes);
        let comps = component_values(traj, d, k + 1);
        for x in d.v0slow() {
            let dm = nc.pi_limit[x] * (traj.density[k + 1][x] - traj.density[k][x]);
            residual = residual.max((dm - inflow[x]).abs());
        }
        for c in 0..fc.components.len() {
            let dm = fc.pi_c[c] * (comps[c] - comps_prev[c]);
            residual = residual.max((dm - inflow[n + c]).abs());
        }
        // V1 density part over the interval.
        let dens = balance(&ints[k]);
        for x in d.v1() {
            residual = residual.max(dens[x].abs());
        }
        comps_prev = comps;
    }
    for a in &traj.atoms {
        let inflow = balance(&a.flux);
        for x in d.v1() {
            residual = residual.max(inflow[x].abs());
        }
    }
    for k in 0..=steps {
        let comps = component_values(traj, d, k);
        for (c, comp) in fc.components.iter().enumerate() {
            for &x in comp {
                residual = residual.max((traj.density[k][x] - comps[c]).abs());
            }
        }
        let mut div = vec![0.0; n];
        for (r, e) in net.edges().iter().enumerate() {
            if d.edge_class.tags[r] == EdgeTag::FastCycle {
                div[e.src] += traj.flux[k][r];
                div[e.dst] -= traj.flux[k][r];
            }
        }
        for comp in &fc.components {
            for &x in comp {
                residual = residual.max(div[x].abs());
            }
        }
    }
    Ok((residual, l1))
}

/// Limit rate functional `Ĩ⁰₀ + 𝒥⁰` of a limit-frame trajectory.
pub fn eval_j_limit(net: &Network, traj: &Trajectory, d: &Decomposition, tol: &Tolerances) -> Result<FunctionalReport> {
    traj.expect_frame("limit")?;
    check_atoms(net, traj, d)?;
    let nc = &d.node_class;
    let comps: Vec<Vec<f64>> = (0..traj.grid.len()).map(|k| component_values(traj, d, k)).collect();
    let mut terms = [ExtReal::ZERO; 3];
    for (r, e) in net.edges().iter().enumerate() {
        let tag = d.edge_class.tags[r];
        let vals: Vec<ExtReal> = (0..traj.grid.len())
            .map(|k| {
                let u = source_density(net, traj, d, &comps[k], r, k);
                let j = traj.flux[k][r];
                match tag {
                    EdgeTag::FastCycle => {
                        let b = e.rate * nc.pi_limit[e.src] * u;
                        if j == 0.0 {
                            ExtReal::ZERO
                        } else if b > 0.0 {
                            ExtReal::Finite(0.5 * j * j / b)
                        } else {
                            ExtReal::PosInfinity
                        }
                    }
                    _ => rel_entropy(j, e.rate * nc.weight(e.src) * u),
                }
            })
            .collect();
        let mut value = trapezoid_ext(&traj.grid, &vals);
        if tag.is_damped() {
            for a in &traj.atoms {
                value = value + rel_entropy(a.flux[r], e.rate * nc.pi_tilde[e.src] * a.density[e.src]);
            }
        }
        let slot = match tag {
            EdgeTag::Slow => 0,
            EdgeTag::FastCycle => 2,
            _ => 1,
        };
        terms[slot] = terms[slot] + value;
    }
    let (residual, l1) = limit_continuity_residual(net, traj, d)?;
    Ok(FunctionalReport {
        frame: "limit".into(),
        eps: None,
        i0: eval_i0_limit(&traj.density[0], d),
        j_slow: terms[0],
        j_damp: terms[1],
        j_fcyc: terms[2],
        fisher: None,
        continuity_residual: residual,
        continuity_tolerance: tol.continuity * (1.0 + l1),
        total: ExtReal::ZERO,
    }
    .finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::decompose;
    use crate::dynamics::{build_effective, rescale, simulate_effective, simulate_eps, well_prepare, Atom, Frame};
    use crate::linalg::uniform_grid;
    use crate::netmodel::{parse_network, stationary_distribution};

    const FAST_TRIANGLE: &str = "nodes: 1 2 3 4 5
1 -> 2 rate=1 speed=fast
2 -> 3 rate=1 speed=fast
3 -> 1 rate=1 speed=fast
5 -> 4 rate=1 speed=fast
4 -> 1 rate=1 speed=slow
2 -> 5 rate=1 speed=slow
4 -> 5 rate=1 speed=slow
";

    fn setup() -> (Network, Decomposition) {
        let net = parse_network(FAST_TRIANGLE).unwrap();
        let d = decompose(&net, &Tolerances::default()).unwrap();
        (net, d)
    }

    #[test]
    fn initial_cost_values() {
        let (net, d) = setup();
        let pi = stationary_distribution(&net, 1e-3).unwrap();
        assert_eq!(eval_i0_eps(&[1.0; 5], &pi.pi), ExtReal::ZERO);
        let two = eval_i0_eps(&[2.0; 5], &pi.pi).finite().unwrap();
        assert!((two - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-12);
        assert!(eval_i0_limit(&[1.0; 5], &d).finite().unwrap().abs() < 1e-15);
        let a = eval_i0_limit(&[1.5, 1.5, 1.5, 0.3, 0.0], &d);
        let b = eval_i0_limit(&[1.5, 1.5, 1.5, 0.3, 9.0], &d);
        assert_eq!(a, b);
    }

    #[test]
    fn exact_flow_is_a_zero_of_the_cost() {
        let (net, d) = setup();
        let eps = 1e-2;
        let pi = stationary_distribution(&net, eps).unwrap();
        let raw = simulate_eps(&net, eps, &[0.5, 0.0, 0.0, 0.5, 0.0], 1.0, 500).unwrap();
        let traj = rescale(&net, &raw, &pi, &d).unwrap();
        let rep = eval_j_eps(&net, &traj, &d, &pi, &Tolerances::default()).unwrap();
        assert!(rep.j_total().finite().unwrap() < 1e-12);
        assert!(rep.continuity_residual < 1e-12);
        assert!(rep.total.is_finite());
    }

    fn pair_traj(delta: f64) -> (Network, Decomposition, StationaryDist, Trajectory) {
        let net = parse_network("nodes: 1 2\n1 -> 2 rate=1 speed=slow\n2 -> 1 rate=1 speed=slow\n").unwrap();
        let d = decompose(&net, &Tolerances::default()).unwrap();
        let pi = stationary_distribution(&net, 0.1).unwrap();
        let grid = uniform_grid(1.0, 10);
        // Stationary densities with an extra circulation δ/2 on both edges.
        let n = grid.len();
        let traj = Trajectory::new(
            Frame::Rescaled { eps: 0.1 },
            grid,
            vec![vec![1.0, 1.0]; n],
            vec![vec![0.5 * (1.0 + delta); 2]; n],
        )
        .unwrap();
        (net, d, pi, traj)
    }

    #[test]
    fn circulation_costs_grow_with_size() {
        let mut last = 0.0;
        for delta in [0.0, 0.1, 0.2, 0.4] {
            let (net, d, pi, traj) = pair_traj(delta);
            let rep = eval_j_eps(&net, &traj, &d, &pi, &Tolerances::default()).unwrap();
            let j = rep.j_slow.finite().unwrap();
            let expect = 2.0 * rel_entropy(0.5 * (1.0 + delta), 0.5).finite().unwrap();
            assert!((j - expect).abs() < 1e-14);
            if delta > 0.0 {
                assert!(j > last);
            }
            last = j;
        }
    }

    #[test]
    fn continuity_violation_gives_infinity() {
        let (net, d, pi, mut traj) = pair_traj(0.0);
        for row in traj.flux.iter_mut() {
            row[0] *= 1.01;
        }
        let rep = eval_j_eps(&net, &traj, &d, &pi, &Tolerances::default()).unwrap();
        assert!(rep.j_slow.is_finite());
        assert_eq!(rep.total, ExtReal::PosInfinity);
    }

    #[test]
    fn effective_flow_costs_only_the_initial_term() {
        let (net, d) = setup();
        let sys = build_effective(&net, &d).unwrap();
        let u0 = well_prepare(&[2.0, 2.0, 2.0, 0.5, 0.0], &d, &sys);
        let traj = simulate_effective(&net, &d, &sys, &u0, 1.0, 400).unwrap();
        let rep = eval_j_limit(&net, &traj, &d, &Tolerances::default()).unwrap();
        assert!(rep.j_total().finite().unwrap() < 1e-12);
        assert!(rep.continuity_residual < 1e-12, "{}", rep.continuity_residual);
        assert_eq!(rep.total, rep.i0);
    }

    #[test]
    fn constant_cycle_flux_has_quadratic_cost() {
        let (net, d) = setup();
        let sys = build_effective(&net, &d).unwrap();
        let u0 = well_prepare(&[1.0; 5], &d, &sys);
        let mut traj = simulate_effective(&net, &d, &sys, &u0, 2.0, 100).unwrap();
        let c = 0.3;
        for row in traj.flux.iter_mut() {
            for r in 0..3 {
                row[r] = c;
            }
        }
        if let Some(int) = traj.interval_flux.as_mut() {
            for row in int.iter_mut() {
                for r in 0..3 {
                    row[r] = c * 0.02;
                }
            }
        }
        let rep = eval_j_limit(&net, &traj, &d, &Tolerances::default()).unwrap();
        let expect: f64 = (0..3).map(|x| 0.5 * c * c * 2.0 / d.node_class.pi_limit[x]).sum();
        assert!((rep.j_fcyc.finite().unwrap() - expect).abs() < 1e-12);
        assert!(rep.total.is_finite());
    }

    #[test]
    fn damped_atom_needs_a_density_atom() {
        let net = parse_network(
            "nodes: 1 2 3 4\n1 -> 2 rate=1 speed=fast\n2 -> 3 rate=1 speed=fast\n3 -> 1 rate=1 speed=fast\n2 -> 4 rate=1 speed=fast\n4 -> 1 rate=1 speed=slow\n",
        )
        .unwrap();
        let d = decompose(&net, &Tolerances::default()).unwrap();
        let sys = build_effective(&net, &d).unwrap();
        let mut traj = simulate_effective(&net, &d, &sys, &[1.0; 4], 1.0, 10).unwrap();
        let mut atom = Atom {
            time: 0.5,
            density: vec![0.0; 4],
            flux: vec![0.25, 0.25, 0.25, 0.0, 0.0],
        };
        traj.atoms.push(atom.clone());
        let rep = eval_j_limit(&net, &traj, &d, &Tolerances::default()).unwrap();
        assert_eq!(rep.j_damp, ExtReal::PosInfinity);
        // Matching density atoms u = ¼/(κπ̃) make the cycle free; the silent
        // exit 2 -> 4 then costs s(0 | κπ̃u) = ¼.
        for x in 0..3 {
            atom.density[x] = 0.25 / d.node_class.pi_tilde[x];
        }
        traj.atoms[0] = atom;
        let rep = eval_j_limit(&net, &traj, &d, &Tolerances::default()).unwrap();
        assert!((rep.j_damp.finite().unwrap() - 0.25).abs() < 1e-12);
        assert!(rep.total.is_finite());
    }

    #[test]
    fn atoms_on_slow_edges_are_rejected() {
        let (net, d) = setup();
        let sys = build_effective(&net, &d).unwrap();
        let mut traj = simulate_effective(&net, &d, &sys, &[1.0; 5], 1.0, 10).unwrap();
        let mut flux = vec![0.0; 7];
        flux[4] = 1.0;
        traj.atoms.push(Atom { time: 0.5, density: vec![0.0; 5], flux });
        assert!(eval_j_limit(&net, &traj, &d, &Tolerances::default()).is_err());
    }
}
