use serde::{Deserialize, Serialize};

use crate::extreal::ExtReal;

/// Allowed deficit at the smallest ε.
pub const LOWER_BOUND_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub eps: f64,
    pub cost: ExtReal,
    pub margin: ExtReal,
    pub tolerance: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginTable {
    pub limit: f64,
    pub rows: Vec<MarginRow>,
}

impl MarginTable {
    pub fn holds(&self) -> bool {
        self.rows.iter().all(|r| r.ok)
    }
}

/// Margins `cost(ε) − limit` of a family converging to a limit pair.
///
/// The allowance is `10⁻³ √(ε/ε_min)`: exactly `10⁻³` at the smallest ε and
/// growing like the `O(√ε)` discretisation and boundary-layer errors above it.
pub fn lower_bound_probe(points: &[(f64, ExtReal)], limit: f64) -> MarginTable {
    let eps_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let rows = points
        .iter()
        .map(|&(eps, cost)| {
            let margin = cost.sub_finite(limit);
            let tolerance = LOWER_BOUND_TOL * (eps / eps_min).sqrt();
            let ok = match margin {
                ExtReal::Finite(m) => m >= -tolerance,
                ExtReal::PosInfinity => true,
            };
            MarginRow { eps, cost, margin, tolerance, ok }
        })
        .collect();
    MarginTable { limit, rows }
}
