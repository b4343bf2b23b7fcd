//! Dense linear-algebra helpers: exact affine propagation and null vectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Exact one-step propagator for `ρ' = Mρ + a + b·s` on `s ∈ [0, Δt]`.
///
/// All blocks come from a single exponential of the augmented matrix
///
/// ```text
/// [ M  0  I  0 ]
/// [ I  0  0  0 ]      state (ρ, ∫ρ, forcing, forcing slope)
/// [ 0  0  0  I ]
/// [ 0  0  0  0 ]
/// ```
///
/// so the end state and the interval integral `∫ρ` are both exact.
#[derive(Clone, Debug)]
pub struct AffinePropagator {
    dt: f64,
    /// e^{MΔt}
    phi: DMatrix<f64>,
    /// ∫₀^Δt e^{Ms} ds
    int_phi: DMatrix<f64>,
    /// response of ρ(Δt) to the constant forcing part
    rho_a: DMatrix<f64>,
    rho_b: DMatrix<f64>,
    /// response of ∫ρ to the forcing
    int_a: DMatrix<f64>,
    int_b: DMatrix<f64>,
}

impl AffinePropagator {
    pub fn new(m: &DMatrix<f64>, dt: f64) -> Result<Self> {
        let n = m.nrows();
        if m.iter().any(|v| !v.is_finite()) || !dt.is_finite() {
            return Err(Error::NonFinite("propagator matrix".into()));
        }
        let mut big = DMatrix::<f64>::zeros(4 * n, 4 * n);
        big.view_mut((0, 0), (n, n)).copy_from(&(m * dt));
        for i in 0..n {
            big[(i, 2 * n + i)] = dt;
            big[(n + i, i)] = dt;
            big[(2 * n + i, 3 * n + i)] = dt;
        }
        let e = big.exp();
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix exponential".into()));
        }
        let block = |r: usize, c: usize| e.view((r * n, c * n), (n, n)).into_owned();
        Ok(AffinePropagator {
            dt,
            phi: block(0, 0),
            int_phi: block(1, 0),
            rho_a: block(0, 2),
            rho_b: block(0, 3),
            int_a: block(1, 2),
            int_b: block(1, 3),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Homogeneous step: returns `(ρ(Δt), ∫₀^Δt ρ)`.
    pub fn step(&self, rho: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (&self.phi * rho, &self.int_phi * rho)
    }

    /// Step with forcing interpolating linearly from `f0` to `f1`.
    pub fn step_forced(
        &self,
        rho: &DVector<f64>,
        f0: &DVector<f64>,
        f1: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let slope = (f1 - f0) / self.dt;
        let end = &self.phi * rho + &self.rho_a * f0 + &self.rho_b * &slope;
        let int = &self.int_phi * rho + &self.int_a * f0 + &self.int_b * &slope;
        (end, int)
    }
}

/// Normalised null vector of `Aᵀ` for a generator `A` (rows are sources).
///
/// Solves the `(n+1) × n` system `[Aᵀ; 1ᵀ] v = (0, 1)` in the least-squares
/// sense through a Householder QR factorisation.
pub fn generator_null_vector(a: &DMatrix<f64>) -> Result<(DVector<f64>, f64)> {
    let n = a.nrows();
    let mut m = DMatrix::<f64>::zeros(n + 1, n);
    m.view_mut((0, 0), (n, n)).copy_from(&a.transpose());
    for j in 0..n {
        m[(n, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n + 1);
    rhs[n] = 1.0;
    let qr = m.clone().qr();
    let qtb = qr.q().transpose() * &rhs;
    let r = qr.r();
    let v = r
        .solve_upper_triangular(&qtb)
        .ok_or(Error::SingularSolve {
            residual: f64::INFINITY,
            tolerance: 0.0,
        })?;
    let residual = (&m * &v - &rhs).amax();
    Ok((v, residual))
}

/// Trapezoid integral of samples on a grid.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Running trapezoid integral, starting at 0.
pub fn cumulative_trapezoid(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..grid.len() {
        acc += 0.5 * (grid[k] - grid[k - 1]) * (values[k] + values[k - 1]);
        out.push(acc);
    }
    out
}

/// Uniform grid with `steps` intervals on `[0, t_end]`.
pub fn uniform_grid(t_end: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|k| t_end * k as f64 / steps as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_decay_matches_closed_form() {
        let m = DMatrix::from_element(1, 1, -2.0);
        let p = AffinePropagator::new(&m, 0.1).unwrap();
        let (end, int) = p.step(&DVector::from_element(1, 1.0));
        assert!((end[0] - (-0.2f64).exp()).abs() < 1e-15);
        assert!((int[0] - (1.0 - (-0.2f64).exp()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn linear_forcing_matches_closed_form() {
        // ρ' = -ρ + s, ρ(0) = 0  =>  ρ(t) = t - 1 + e^{-t}
        let m = DMatrix::from_element(1, 1, -1.0);
        let dt = 0.5;
        let p = AffinePropagator::new(&m, dt).unwrap();
        let zero = DVector::from_element(1, 0.0);
        let (end, int) = p.step_forced(&zero, &zero, &DVector::from_element(1, dt));
        let exact = dt - 1.0 + (-dt).exp();
        let exact_int = dt * dt / 2.0 - dt + 1.0 - (-dt).exp();
        assert!((end[0] - exact).abs() < 1e-15);
        assert!((int[0] - exact_int).abs() < 1e-15);
    }

    #[test]
    fn two_state_null_vector() {
        let a = DMatrix::from_row_slice(2, 2, &[-3.0, 3.0, 1.0, -1.0]);
        let (v, res) = generator_null_vector(&a).unwrap();
        assert!((v[0] - 0.25).abs() < 1e-14 && (v[1] - 0.75).abs() < 1e-14);
        assert!(res < 1e-14);
    }

    #[test]
    fn trapezoid_is_exact_for_lines() {
        let g = uniform_grid(2.0, 7);
        let v: Vec<f64> = g.iter().map(|t| 3.0 * t + 1.0).collect();
        assert!((trapezoid(&g, &v) - 8.0).abs() < 1e-14);
        assert!((cumulative_trapezoid(&g, &v)[7] - 8.0).abs() < 1e-14);
    }
}
