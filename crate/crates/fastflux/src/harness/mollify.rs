//! Heat-kernel smoothing of piecewise-linear series on `[0, T]`.
//!
//! The kernel is `θ(t) = (4πδ)^{-1/2} e^{-t²/(4δ)}`, a Gaussian with standard
//! deviation `σ = √(2δ)`. Each series is the linear interpolant of its grid
//! samples, extended beyond `[0, T]` either by its end values or by zero, plus
//! optional atoms. Convolutions are evaluated in closed form with `erfc`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Kernel mass beyond this many standard deviations is below `1e-16`.
const CUTOFF: f64 = 8.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Extension {
    Constant,
    Zero,
}

#[derive(Clone, Debug)]
pub(crate) struct Series {
    pub values: Vec<f64>,
    pub extension: Extension,
    pub atoms: Vec<(f64, f64)>,
}

/// Smoothed values and time derivatives of several series sharing one grid.
#[derive(Clone, Debug)]
pub(crate) struct Mollifier<'a> {
    grid: &'a [f64],
    sigma: f64,
}

/// `½ erfc(|z|/√2)`: the smaller of the two Gaussian tails at `z`.
fn tail(z: f64) -> f64 {
    0.5 * libm::erfc(z.abs() * FRAC_1_SQRT_2)
}

fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal mass of `[za, zb]` without cancellation in the tails.
fn mass(za: f64, zb: f64, ta: f64, tb: f64) -> f64 {
    if za >= 0.0 {
        ta - tb
    } else if zb <= 0.0 {
        tb - ta
    } else {
        1.0 - ta - tb
    }
}

/// Mass of `(−∞, z]`.
fn lower(z: f64, tz: f64) -> f64 {
    if z <= 0.0 { tz } else { 1.0 - tz }
}

impl<'a> Mollifier<'a> {
    pub(crate) fn new(grid: &'a [f64], delta: f64) -> Self {
        Mollifier { grid, sigma: (2.0 * delta).sqrt() }
    }

    #[cfg(test)]
    pub(crate) fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `(θ * f)(t)` and `(θ * f)'(t)` for every series.
    pub(crate) fn eval(&self, series: &[Series], t: f64) -> (Vec<f64>, Vec<f64>) {
        let g = self.grid;
        let n = g.len() - 1;
        let s = self.sigma;
        let mut val = vec![0.0; series.len()];
        let mut der = vec![0.0; series.len()];
        let lo = g.partition_point(|&x| x < t - CUTOFF * s).saturating_sub(1);
        let hi = (g.partition_point(|&x| x <= t + CUTOFF * s) + 1).min(n + 1);
        if lo < hi {
            let z: Vec<f64> = g[lo..hi].iter().map(|&x| (x - t) / s).collect();
            let tz: Vec<f64> = z.iter().map(|&z| tail(z)).collect();
            let pz: Vec<f64> = z.iter().map(|&z| pdf(z)).collect();
            for i in lo..hi.saturating_sub(1).min(n) {
                let a = i - lo;
                let m = mass(z[a], z[a + 1], tz[a], tz[a + 1]);
                let dp = pz[a] - pz[a + 1];
                let h = g[i + 1] - g[i];
                for (k, ser) in series.iter().enumerate() {
                    let beta = (ser.values[i + 1] - ser.values[i]) / h;
                    val[k] += (ser.values[i] + beta * (t - g[i])) * m + beta * s * dp;
                    der[k] += beta * m;
                }
            }
        }
        let z0 = (g[0] - t) / s;
        let zt = (g[n] - t) / s;
        let (t0, tt) = (tail(z0), tail(zt));
        for (k, ser) in series.iter().enumerate() {
            let (f0, ft) = (ser.values[0], ser.values[n]);
            let (left, right) = match ser.extension {
                Extension::Constant => (f0, ft),
                Extension::Zero => (0.0, 0.0),
            };
            val[k] += left * lower(z0, t0) + right * (1.0 - lower(zt, tt));
            // jumps of the extended series at 0 and T
            der[k] += (f0 - left) * pdf(z0) / s + (right - ft) * pdf(zt) / s;
            for &(ta, w) in &ser.atoms {
                let za = (ta - t) / s;
                val[k] += w * pdf(za) / s;
                der[k] += w * za * pdf(za) / (s * s);
            }
        }
        (val, der)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::uniform_grid;

    #[test]
    fn constants_are_preserved() {
        let grid = uniform_grid(1.0, 50);
        let m = Mollifier::new(&grid, 1e-3);
        let ser = [Series { values: vec![2.5; 51], extension: Extension::Constant, atoms: vec![] }];
        for t in [0.0, 0.013, 0.5, 1.0] {
            let (v, d) = m.eval(&ser, t);
            assert!((v[0] - 2.5).abs() < 1e-14, "{}", v[0]);
            assert!(d[0].abs() < 1e-12);
        }
    }

    #[test]
    fn linear_interior_is_exact_and_zero_extension_halves_the_edge() {
        let grid = uniform_grid(1.0, 100);
        let m = Mollifier::new(&grid, 1e-5);
        let vals: Vec<f64> = grid.iter().map(|t| 1.0 + 3.0 * t).collect();
        let ser = [
            Series { values: vals.clone(), extension: Extension::Constant, atoms: vec![] },
            Series { values: vals, extension: Extension::Zero, atoms: vec![] },
        ];
        let (v, d) = m.eval(&ser, 0.5);
        assert!((v[0] - 2.5).abs() < 1e-13 && (d[0] - 3.0).abs() < 1e-10);
        let (v, _) = m.eval(&ser, 0.0);
        // ½ f(0) plus the first moment of the half Gaussian
        let expect = 0.5 + 3.0 * m.sigma() / (2.0 * PI).sqrt();
        assert!((v[1] - expect).abs() < 1e-12, "{} vs {expect}", v[1]);
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let grid = uniform_grid(1.0, 40);
        let m = Mollifier::new(&grid, 2e-3);
        let vals: Vec<f64> = grid.iter().map(|t| (3.0 * t).sin()).collect();
        let ser = [Series { values: vals, extension: Extension::Zero, atoms: vec![(0.3, 0.2)] }];
        for t in [0.0, 0.02, 0.31, 0.77, 1.0] {
            let h = 1e-6;
            let (p, _) = m.eval(&ser, t + h);
            let (q, _) = m.eval(&ser, t - h);
            let (_, d) = m.eval(&ser, t);
            assert!(((p[0] - q[0]) / (2.0 * h) - d[0]).abs() < 1e-5 * (1.0 + d[0].abs()));
        }
    }
}
