//! Numerical tolerances shared by every module.

use serde::{Deserialize, Serialize};

/// Residual bound for linear solves, relative to the largest rate.
pub const SOLVER_RESIDUAL: f64 = 1e-12;
/// Default tolerance for comparing derived quantities.
pub const COMPARISON: f64 = 1e-9;
/// Continuity residual bound, relative to `1 + ‖j‖₁`.
pub const CONTINUITY: f64 = 1e-6;
/// Allowed deviation of a well-prepared datum.
pub const WELL_PREPARED: f64 = 1e-8;
/// Rounding tolerance for scaling exponents.
pub const EXPONENT_ROUNDING: f64 = 0.1;
/// Default probe pair for the scaling classification.
pub const PROBE: (f64, f64) = (1e-3, 1e-4);
/// Minimal relative pivot accepted in the V1 block.
pub const PIVOT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub solver_residual: f64,
    pub comparison: f64,
    pub continuity: f64,
    pub well_prepared: f64,
    pub exponent_rounding: f64,
    pub probe: (f64, f64),
    pub pivot: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            solver_residual: SOLVER_RESIDUAL,
            comparison: COMPARISON,
            continuity: CONTINUITY,
            well_prepared: WELL_PREPARED,
            exponent_rounding: EXPONENT_ROUNDING,
            probe: PROBE,
            pivot: PIVOT,
        }
    }
}
