//! The metric bundle used to compare an ε-trajectory with its limit.
//!
//! Densities on `V0slow` and on fast components are compared in sup norm.
//! `V1` densities and all fluxes are compared weakly: the error is the largest
//! difference of the pairings against [`TEST_FUNCTIONS`] test functions, all
//! bounded by one on `[0, T]`.

use std::f64::consts::PI;

use crate::decomp::{Decomposition, EdgeTag};
use crate::dynamics::{component_density, Trajectory};
use crate::error::{Error, Result};
use crate::functionals::MeasureOnTime;
use crate::netmodel::StationaryDist;

pub const TEST_FUNCTIONS: usize = 12;

/// Smooth bump of half-width `w` centred at `c`, with peak one.
fn bump(t: f64, c: f64, w: f64) -> f64 {
    let s = (t - c) / w;
    if s.abs() >= 1.0 { 0.0 } else { (1.0 - 1.0 / (1.0 - s * s)).exp() }
}

/// The `k`-th test function on `[0, T]`.
pub fn test_function(k: usize, horizon: f64, t: f64) -> f64 {
    let s = t / horizon;
    match k {
        0 => 1.0,
        1 => s,
        2..=7 => {
            let m = ((k - 2) / 2 + 1) as f64;
            if k % 2 == 0 { (2.0 * PI * m * s).cos() } else { (2.0 * PI * m * s).sin() }
        }
        8..=10 => bump(s, 0.25 * (k - 7) as f64, 0.25),
        11 => (-s).exp(),
        _ => panic!("test function index {k} out of range"),
    }
}

/// `max_φ |∫φ dμ − ∫φ dν|` over the bundle.
pub fn weak_distance(mu: &MeasureOnTime, nu: &MeasureOnTime, horizon: f64) -> f64 {
    (0..TEST_FUNCTIONS)
        .map(|k| (mu.pair(|t| test_function(k, horizon, t)) - nu.pair(|t| test_function(k, horizon, t))).abs())
        .fold(0.0, f64::max)
}

/// Errors of one rescaled ε-trajectory against the limit trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrajectoryErrors {
    pub v0slow_sup: f64,
    pub comp_sup: f64,
    pub v1_weak: f64,
    pub jdamp_weak: f64,
    pub jslow_weak: f64,
    pub jfcyc_weak: f64,
}

pub fn trajectory_errors(
    eps_traj: &Trajectory,
    limit: &Trajectory,
    d: &Decomposition,
    pi: &StationaryDist,
) -> Result<TrajectoryErrors> {
    eps_traj.expect_frame("rescaled")?;
    limit.expect_frame("limit")?;
    if eps_traj.grid.len() != limit.grid.len()
        || eps_traj.grid.iter().zip(&limit.grid).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs()))
    {
        return Err(Error::Config("ε-trajectory and limit trajectory must share a grid".into()));
    }
    let horizon = limit.horizon();
    let mut out = TrajectoryErrors::default();
    for x in d.v0slow() {
        for (a, b) in eps_traj.density.iter().zip(&limit.density) {
            out.v0slow_sup = out.v0slow_sup.max((a[x] - b[x]).abs());
        }
    }
    for (c, comp) in d.fast_components.components.iter().enumerate() {
        for k in 0..limit.grid.len() {
            let ue = component_density(eps_traj, d, &pi.pi, k, c);
            out.comp_sup = out.comp_sup.max((ue - limit.density[k][comp[0]]).abs());
        }
    }
    for y in d.v1() {
        let e = weak_distance(&MeasureOnTime::of_node(eps_traj, y), &MeasureOnTime::of_node(limit, y), horizon);
        out.v1_weak = out.v1_weak.max(e);
    }
    for (r, tag) in d.edge_class.tags.iter().enumerate() {
        let e = weak_distance(&MeasureOnTime::of_edge(eps_traj, r), &MeasureOnTime::of_edge(limit, r), horizon);
        let slot = match tag {
            EdgeTag::Slow => &mut out.jslow_weak,
            EdgeTag::FastCycle => &mut out.jfcyc_weak,
            EdgeTag::DampedCycle | EdgeTag::DampedNoCycle => &mut out.jdamp_weak,
        };
        *slot = slot.max(e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::uniform_grid;

    #[test]
    fn bundle_is_bounded_by_one() {
        for k in 0..TEST_FUNCTIONS {
            for t in uniform_grid(3.0, 300) {
                assert!(test_function(k, 3.0, t).abs() <= 1.0 + 1e-15, "k={k} t={t}");
            }
        }
        assert_eq!(test_function(9, 2.0, 1.0), 1.0);
    }

    #[test]
    fn atom_against_smeared_mass() {
        let grid = uniform_grid(1.0, 1000);
        let atom = MeasureOnTime { grid: grid.clone(), density: vec![0.0; 1001], atoms: vec![(0.5, 1.0)] };
        let w = 1e-2;
        // hat of half-width w with unit mass; exact under the trapezoid rule
        let density = grid.iter().map(|t| (1.0 - (t - 0.5).abs() / w).max(0.0) / w).collect();
        let smeared = MeasureOnTime { grid, density, atoms: vec![] };
        let dist = weak_distance(&atom, &smeared, 1.0);
        assert!(dist < 0.05, "{dist}");
        assert!(dist > 0.0);
    }
}
