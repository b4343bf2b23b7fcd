//! Trajectories, ε-simulation, rescaling, the effective system and the
//! equilibration diagnostic.

mod csvio;
mod effective;
mod equilibration;
mod simulate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csvio::{read_trajectory, trajectory_from_csv, trajectory_to_csv, write_trajectory};
pub use effective::{build_effective, simulate_effective, well_prepare, Coord, EffectiveSystem};
pub use equilibration::{
    component_spread, equilibration_diagnostic, ComponentEquilibration, EquilibrationReport,
};
pub use simulate::{component_density, rescale, simulate_eps, unrescale};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "frame", rename_all = "lowercase")]
pub enum Frame {
    /// Concentrations `ρ` and physical fluxes `j`.
    Raw { eps: f64 },
    /// Densities `u = ρ/π^ε`; fast-cycle edges carry `ȷ̃`.
    Rescaled { eps: f64 },
    /// Limit densities and fluxes; fast-cycle edges carry `ȷ̃`.
    Limit,
}

impl Frame {
    pub fn eps(&self) -> Option<f64> {
        match *self {
            Frame::Raw { eps } | Frame::Rescaled { eps } => Some(eps),
            Frame::Limit => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Frame::Raw { .. } => "raw",
            Frame::Rescaled { .. } => "rescaled",
            Frame::Limit => "limit",
        }
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.eps() {
            Some(e) => write!(f, "{}(eps={e:e})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

/// Point mass at `time`: weights per node (densities) and per edge (fluxes).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub time: f64,
    pub density: Vec<f64>,
    pub flux: Vec<f64>,
}

/// Time-major samples of densities and fluxes on a grid, plus optional exact
/// per-interval flux integrals and atoms.
///
/// `interval_flux[k][r]` is the integral of the flux over `[t_k, t_{k+1}]`.
/// In the raw and rescaled frames it integrates the physical flux `j`; in the
/// limit frame it integrates the stored flux variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub frame: Frame,
    pub grid: Vec<f64>,
    pub density: Vec<Vec<f64>>,
    pub flux: Vec<Vec<f64>>,
    pub interval_flux: Option<Vec<Vec<f64>>>,
    pub atoms: Vec<Atom>,
}

impl Trajectory {
    pub fn new(frame: Frame, grid: Vec<f64>, density: Vec<Vec<f64>>, flux: Vec<Vec<f64>>) -> Result<Self> {
        let t = Trajectory {
            frame,
            grid,
            density,
            flux,
            interval_flux: None,
            atoms: Vec::new(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        if n < 2 {
            return Err(Error::LengthMismatch { expected: 2, found: n });
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("time grid must be strictly increasing".into()));
        }
        let check = |rows: &Vec<Vec<f64>>, len: usize, what: &str| -> Result<()> {
            if rows.len() != len {
                return Err(Error::LengthMismatch { expected: len, found: rows.len() });
            }
            let width = rows.first().map_or(0, Vec::len);
            for row in rows {
                if row.len() != width {
                    return Err(Error::LengthMismatch { expected: width, found: row.len() });
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(what.into()));
                }
            }
            Ok(())
        };
        check(&self.density, n, "densities")?;
        check(&self.flux, n, "fluxes")?;
        if let Some(int) = &self.interval_flux {
            check(int, n - 1, "interval fluxes")?;
        }
        for a in &self.atoms {
            if !(a.time >= self.grid[0] && a.time <= self.grid[n - 1]) {
                return Err(Error::Config(format!("atom at {} outside the time grid", a.time)));
            }
            if a.density.len() != self.node_count() || a.flux.len() != self.edge_count() {
                return Err(Error::LengthMismatch {
                    expected: self.node_count(),
                    found: a.density.len(),
                });
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.density[0].len()
    }

    pub fn edge_count(&self) -> usize {
        self.flux[0].len()
    }

    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.grid[self.grid.len() - 1] - self.grid[0]
    }

    pub fn node_series(&self, x: usize) -> Vec<f64> {
        self.density.iter().map(|row| row[x]).collect()
    }

    pub fn edge_series(&self, r: usize) -> Vec<f64> {
        self.flux.iter().map(|row| row[r]).collect()
    }

    /// Exact interval integrals when present, trapezoid otherwise.
    pub fn interval_integrals(&self, r: usize) -> Vec<f64> {
        match &self.interval_flux {
            Some(int) => int.iter().map(|row| row[r]).collect(),
            None => (0..self.steps())
                .map(|k| 0.5 * (self.grid[k + 1] - self.grid[k]) * (self.flux[k][r] + self.flux[k + 1][r]))
                .collect(),
        }
    }

    pub fn expect_frame(&self, name: &str) -> Result<()> {
        if self.frame.name() == name {
            Ok(())
        } else {
            Err(Error::FrameMismatch {
                expected: name.into(),
                found: self.frame.to_string(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_increasing_grid() {
        let t = Trajectory::new(
            Frame::Limit,
            vec![0.0, 0.0],
            vec![vec![1.0], vec![1.0]],
            vec![vec![], vec![]],
        );
        assert!(t.is_err());
    }

    #[test]
    fn trapezoid_fallback_for_interval_integrals() {
        let t = Trajectory::new(
            Frame::Limit,
            vec![0.0, 1.0, 3.0],
            vec![vec![1.0]; 3],
            vec![vec![0.0], vec![2.0], vec![2.0]],
        )
        .unwrap();
        assert_eq!(t.interval_integrals(0), vec![1.0, 4.0]);
    }
}
