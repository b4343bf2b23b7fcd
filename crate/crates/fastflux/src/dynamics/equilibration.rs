use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{component_density, Trajectory};
use crate::decomp::{Decomposition, EdgeTag};
use crate::error::{Error, Result};
use crate::netmodel::{assemble_rates, generator_negativity_bound, GeneratorMatrix, Network};

/// Equilibration of one fast component.
///
/// `envelope[k]` bounds `½|ρ⊥(t_k)|²` by the Duhamel form
/// `½|ρ⊥(0)|² e^{2λt/ε} + ∫₀ᵗ g(s) e^{2λ(t−s)/ε} ds` with
/// `g = |ρ_𝔠|₁ (|div j|₁ + ε^{−1/2}|div ȷ̃|₁)` over the component. On each
/// interval `g` is replaced by the larger endpoint value.
#[derive(Clone, Debug, Serialize)]
pub struct ComponentEquilibration {
    pub lambda: f64,
    pub half_sq_norm: Vec<f64>,
    pub envelope: Vec<f64>,
    pub envelope_violations: usize,
    /// Violations of `(½|ρ⊥(0)|² + ∫₀ᵗ g) e^{2λt/ε}`.
    pub naive_violations: usize,
    pub sup_perp_after: f64,
    /// Least-squares slope of `log|ρ⊥|²` over the initial layer.
    pub fitted_rate: Option<f64>,
    /// The rate predicted by the bound, `2λ/ε`.
    pub predicted_rate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquilibrationReport {
    pub eps: f64,
    pub t0: f64,
    pub components: Vec<ComponentEquilibration>,
}

impl EquilibrationReport {
    pub fn envelope_holds(&self) -> bool {
        self.components.iter().all(|c| c.envelope_violations == 0)
    }
}

/// `∫₀^h e^{aτ} dτ`.
fn kernel_weight(a: f64, h: f64) -> f64 {
    let z = a * h;
    if z.abs() < 1e-8 {
        h * (1.0 + z / 2.0)
    } else {
        z.exp_m1() / a
    }
}

/// Per-component equilibration diagnostic on a raw trajectory.
pub fn equilibration_diagnostic(
    net: &Network,
    traj: &Trajectory,
    d: &Decomposition,
    t0: f64,
) -> Result<EquilibrationReport> {
    traj.expect_frame("raw")?;
    let eps = traj.frame.eps().expect("raw frame carries ε");
    let rates = assemble_rates(net, eps).values;
    let mut components = Vec::new();
    for (c, comp) in d.fast_components.components.iter().enumerate() {
        let m = comp.len();
        let local = |x: usize| comp.iter().position(|&y| y == x);
        let fcyc: Vec<usize> = (0..net.edge_count())
            .filter(|&r| d.edge_class.tags[r] == EdgeTag::FastCycle && local(net.edge(r).src).is_some())
            .collect();
        let base: Vec<f64> = net.edges().iter().map(|e| e.rate).collect();
        let mut a = DMatrix::zeros(m, m);
        for &r in &fcyc {
            let e = net.edge(r);
            let (i, j) = (local(e.src).unwrap(), local(e.dst).unwrap());
            a[(i, j)] += base[r];
            a[(i, i)] -= base[r];
        }
        let lambda = generator_negativity_bound(&GeneratorMatrix::new(a)?)?;
        let eq = DVector::from_column_slice(&d.fast_components.local_eq[c]);
        let ehat = &eq / eq.norm();
        let rate = 2.0 * lambda / eps;

        let mut phi = Vec::with_capacity(traj.grid.len());
        let mut g = Vec::with_capacity(traj.grid.len());
        for (rho, j) in traj.density.iter().zip(&traj.flux) {
            let rc = DVector::from_iterator(m, comp.iter().map(|&x| rho[x]));
            let perp = &rc - &ehat * rc.dot(&ehat);
            phi.push(0.5 * perp.norm_squared());
            let mut div_slow = vec![0.0; m];
            let mut div_fast = vec![0.0; m];
            for (r, e) in net.edges().iter().enumerate() {
                let target = if fcyc.contains(&r) { &mut div_fast } else { &mut div_slow };
                let v = if fcyc.contains(&r) {
                    eps.sqrt() * (j[r] - rates[r] * rho[e.src])
                } else {
                    j[r]
                };
                if let Some(i) = local(e.src) {
                    target[i] += v;
                }
                if let Some(i) = local(e.dst) {
                    target[i] -= v;
                }
            }
            let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
            g.push(rc.abs().sum() * (l1(&div_slow) + l1(&div_fast) / eps.sqrt()));
        }

        let scale = traj
            .density
            .iter()
            .flat_map(|row| comp.iter().map(move |&x| row[x].abs()))
            .fold(0.0f64, f64::max);
        let floor = 1e-28 * scale * scale;
        let mut envelope = vec![phi[0]];
        let mut violations = 0;
        let mut naive_violations = 0;
        let mut cum_g = 0.0;
        for k in 1..traj.grid.len() {
            let h = traj.grid[k] - traj.grid[k - 1];
            let next = envelope[k - 1] * (rate * h).exp() + kernel_weight(rate, h) * g[k - 1].max(g[k]);
            envelope.push(next);
            cum_g += 0.5 * h * (g[k - 1] + g[k]);
            if phi[k] > next * (1.0 + 1e-6) + floor {
                violations += 1;
            }
            let naive = (phi[0] + cum_g) * (rate * (traj.grid[k] - traj.grid[0])).exp();
            if phi[k] > naive * (1.0 + 1e-6) + floor {
                naive_violations += 1;
            }
        }
        let sup_perp_after = traj
            .grid
            .iter()
            .zip(&phi)
            .filter(|(t, _)| **t >= t0)
            .map(|(_, p)| (2.0 * p).sqrt())
            .fold(0.0, f64::max);
        components.push(ComponentEquilibration {
            lambda,
            fitted_rate: fit_initial_decay(&traj.grid, &phi, 5.0 / rate.abs()),
            half_sq_norm: phi,
            envelope,
            envelope_violations: violations,
            naive_violations,
            sup_perp_after,
            predicted_rate: rate,
        });
    }
    Ok(EquilibrationReport { eps, t0, components })
}

/// Slope of `log φ` on `[0, horizon]` while `φ` stays above `10⁻⁶ φ(0)`.
fn fit_initial_decay(grid: &[f64], phi: &[f64], horizon: f64) -> Option<f64> {
    if !(phi[0] > 0.0) {
        return None;
    }
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(phi)
        .take_while(|(t, p)| **p > 1e-6 * phi[0] && **t - grid[0] <= horizon)
        .map(|(t, p)| (*t, p.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (num, den) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt) * (t - mt)));
    Some(num / den)
}

/// `sup_{t ≥ t0} |u_x − u_𝔠|` over all component nodes of a rescaled trajectory.
pub fn component_spread(traj: &Trajectory, d: &Decomposition, pi: &[f64], t0: f64) -> Result<f64> {
    traj.expect_frame("rescaled")?;
    if pi.len() != traj.node_count() {
        return Err(Error::LengthMismatch {
            expected: traj.node_count(),
            found: pi.len(),
        });
    }
    let mut sup = 0.0f64;
    for k in (0..traj.grid.len()).filter(|&k| traj.grid[k] >= t0) {
        for (c, comp) in d.fast_components.components.iter().enumerate() {
            let uc = component_density(traj, d, pi, k, c);
            for &x in comp {
                sup = sup.max((traj.density[k][x] - uc).abs());
            }
        }
    }
    Ok(sup)
}
