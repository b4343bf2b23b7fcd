//! Entropic costs: `s`, `𝒞`, `𝒞*`, Orlicz norms, the rescaled rate functional
//! `Ĩ₀^ε + 𝒥^ε`, its limit `Ĩ⁰₀ + 𝒥⁰`, Fisher information and the FIR margin.
//!
//! All time integrals use the trapezoid rule on the trajectory grid.

mod fisher;
mod orlicz;
mod rate;
mod scalar;

use crate::dynamics::Trajectory;
use crate::extreal::ExtReal;
use crate::linalg::trapezoid;

pub use fisher::{fir_check, fisher_info};
pub use orlicz::{modular, orlicz_norm};
pub use rate::{
    eps_continuity_residual, eval_i0_eps, eval_i0_limit, eval_j_eps, eval_j_limit,
    limit_continuity_residual, FunctionalReport,
};
pub use scalar::{big_c, big_c_star, rel_entropy};

/// A measure on `[0, T]`: grid density plus finitely many atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureOnTime {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub atoms: Vec<(f64, f64)>,
}

impl MeasureOnTime {
    /// Flux measure of edge `r` (grid samples plus its atom weights).
    pub fn of_edge(traj: &Trajectory, r: usize) -> Self {
        MeasureOnTime {
            grid: traj.grid.clone(),
            density: traj.edge_series(r),
            atoms: traj
                .atoms
                .iter()
                .filter(|a| a.flux[r] != 0.0)
                .map(|a| (a.time, a.flux[r]))
                .collect(),
        }
    }

    /// Density measure of node `x`.
    pub fn of_node(traj: &Trajectory, x: usize) -> Self {
        MeasureOnTime {
            grid: traj.grid.clone(),
            density: traj.node_series(x),
            atoms: traj
                .atoms
                .iter()
                .filter(|a| a.density[x] != 0.0)
                .map(|a| (a.time, a.density[x]))
                .collect(),
        }
    }

    /// `∫ φ dμ`.
    pub fn pair(&self, phi: impl Fn(f64) -> f64) -> f64 {
        let v: Vec<f64> = self.grid.iter().zip(&self.density).map(|(t, d)| phi(*t) * d).collect();
        trapezoid(&self.grid, &v) + self.atoms.iter().map(|(t, w)| phi(*t) * w).sum::<f64>()
    }

    /// Total variation.
    pub fn total_variation(&self) -> f64 {
        let v: Vec<f64> = self.density.iter().map(|d| d.abs()).collect();
        trapezoid(&self.grid, &v) + self.atoms.iter().map(|(_, w)| w.abs()).sum::<f64>()
    }
}

/// Trapezoid rule for extended-real samples; any infinite sample gives `∞`.
pub(crate) fn trapezoid_ext(grid: &[f64], values: &[ExtReal]) -> ExtReal {
    let mut finite = Vec::with_capacity(values.len());
    for v in values {
        match v.finite() {
            Some(x) => finite.push(x),
            None => return ExtReal::PosInfinity,
        }
    }
    ExtReal::Finite(trapezoid(grid, &finite))
}
