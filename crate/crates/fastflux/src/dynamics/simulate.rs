use nalgebra::DVector;

use super::{Frame, Trajectory};
use crate::decomp::{Decomposition, EdgeTag};
use crate::error::{Error, Result};
use crate::linalg::{uniform_grid, AffinePropagator};
use crate::netmodel::{assemble_rates, GeneratorMatrix, Network, StationaryDist};

/// Exact propagation of `ρ̇ = −div(κ^ε ⊗ ρ)` on a uniform grid.
///
/// Grid fluxes are `κ^ε_r ρ_{r⁻}(t_k)`; the interval integrals are exact.
pub fn simulate_eps(net: &Network, eps: f64, rho0: &[f64], t_end: f64, steps: usize) -> Result<Trajectory> {
    if rho0.len() != net.node_count() {
        return Err(Error::LengthMismatch {
            expected: net.node_count(),
            found: rho0.len(),
        });
    }
    if steps == 0 || !(t_end > 0.0) || !(eps > 0.0) {
        return Err(Error::Config("simulation needs ε > 0, T > 0 and at least one step".into()));
    }
    if rho0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial datum".into()));
    }
    let rates = assemble_rates(net, eps).values;
    let drift = GeneratorMatrix::from_rates(net, &rates).drift();
    let grid = uniform_grid(t_end, steps);
    let prop = AffinePropagator::new(&drift, t_end / steps as f64)?;
    let flux_of = |rho: &[f64]| -> Vec<f64> {
        net.edges().iter().zip(&rates).map(|(e, k)| k * rho[e.src]).collect()
    };
    let mut rho = DVector::from_column_slice(rho0);
    let mut density = vec![rho0.to_vec()];
    let mut flux = vec![flux_of(rho0)];
    let mut interval = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (next, int) = prop.step(&rho);
        interval.push(flux_of(int.as_slice()));
        rho = next;
        density.push(rho.as_slice().to_vec());
        flux.push(flux_of(rho.as_slice()));
    }
    let mut traj = Trajectory::new(Frame::Raw { eps }, grid, density, flux)?;
    traj.interval_flux = Some(interval);
    Ok(traj)
}

fn check_pi(net: &Network, traj: &Trajectory, pi: &StationaryDist, expected: &str) -> Result<f64> {
    traj.expect_frame(expected)?;
    let eps = traj.frame.eps().expect("ε frame");
    if (pi.epsilon - eps).abs() > 1e-12 * eps {
        return Err(Error::Config(format!(
            "stationary law computed at ε = {} but trajectory has ε = {eps}",
            pi.epsilon
        )));
    }
    if traj.node_count() != net.node_count() || traj.edge_count() != net.edge_count() {
        return Err(Error::LengthMismatch {
            expected: net.node_count(),
            found: traj.node_count(),
        });
    }
    Ok(eps)
}

/// `u = ρ/π^ε`; fast-cycle fluxes become `ȷ̃ = √ε (j − κ^ε ρ_{r⁻})`.
pub fn rescale(net: &Network, traj: &Trajectory, pi: &StationaryDist, d: &Decomposition) -> Result<Trajectory> {
    let eps = check_pi(net, traj, pi, "raw")?;
    let rates = assemble_rates(net, eps).values;
    let density: Vec<Vec<f64>> = traj
        .density
        .iter()
        .map(|row| row.iter().zip(&pi.pi).map(|(r, p)| r / p).collect())
        .collect();
    let flux = traj
        .flux
        .iter()
        .zip(&traj.density)
        .map(|(j, rho)| {
            (0..net.edge_count())
                .map(|r| match d.edge_class.tags[r] {
                    EdgeTag::FastCycle => eps.sqrt() * (j[r] - rates[r] * rho[net.edge(r).src]),
                    _ => j[r],
                })
                .collect()
        })
        .collect();
    let mut out = Trajectory::new(Frame::Rescaled { eps }, traj.grid.clone(), density, flux)?;
    out.interval_flux = traj.interval_flux.clone();
    Ok(out)
}

/// Inverse of [`rescale`].
pub fn unrescale(net: &Network, traj: &Trajectory, pi: &StationaryDist, d: &Decomposition) -> Result<Trajectory> {
    let eps = check_pi(net, traj, pi, "rescaled")?;
    let rates = assemble_rates(net, eps).values;
    let density: Vec<Vec<f64>> = traj
        .density
        .iter()
        .map(|row| row.iter().zip(&pi.pi).map(|(u, p)| u * p).collect())
        .collect();
    let flux = traj
        .flux
        .iter()
        .zip(&density)
        .map(|(j, rho)| {
            (0..net.edge_count())
                .map(|r| match d.edge_class.tags[r] {
                    EdgeTag::FastCycle => rates[r] * rho[net.edge(r).src] + j[r] / eps.sqrt(),
                    _ => j[r],
                })
                .collect()
        })
        .collect();
    let mut out = Trajectory::new(Frame::Raw { eps }, traj.grid.clone(), density, flux)?;
    out.interval_flux = traj.interval_flux.clone();
    Ok(out)
}

/// `u_𝔠` at grid index `k` from `π^ε_𝔠 u_𝔠 = Σ_{x∈𝔠} π^ε_x u_x`.
pub fn component_density(traj: &Trajectory, d: &Decomposition, pi: &[f64], k: usize, c: usize) -> f64 {
    let comp = &d.fast_components.components[c];
    let mass: f64 = comp.iter().map(|&x| pi[x] * traj.density[k][x]).sum();
    let pc: f64 = comp.iter().map(|&x| pi[x]).sum();
    mass / pc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::decompose;
    use crate::netmodel::{parse_network, stationary_distribution};
    use crate::Tolerances;

    fn pair() -> Network {
        parse_network("nodes: 1 2\n1 -> 2 rate=1 speed=slow\n2 -> 1 rate=1 speed=slow\n").unwrap()
    }

    #[test]
    fn two_node_relaxation_matches_closed_form() {
        let traj = simulate_eps(&pair(), 0.5, &[1.0, 0.0], 1.0, 100).unwrap();
        for (t, row) in traj.grid.iter().zip(&traj.density) {
            let exact = 0.5 * (1.0 + (-2.0 * t).exp());
            assert!((row[0] - exact).abs() < 1e-13);
        }
        // ∫ρ₁ over the first interval, times rate 1.
        let h: f64 = 0.01;
        let exact = 0.5 * h + 0.25 * (1.0 - (-2.0 * h).exp());
        assert!((traj.interval_flux.as_ref().unwrap()[0][0] - exact).abs() < 1e-15);
    }

    #[test]
    fn stationary_start_stays_put_and_rescales_to_one() {
        let net = parse_network(
            "nodes: a b c\na -> b rate=1 speed=fast\nb -> a rate=2 speed=fast\nb -> c rate=1 speed=slow\nc -> a rate=1 speed=slow\n",
        )
        .unwrap();
        let d = decompose(&net, &Tolerances::default()).unwrap();
        let pi = stationary_distribution(&net, 1e-3).unwrap();
        let traj = simulate_eps(&net, 1e-3, &pi.pi, 1.0, 50).unwrap();
        let resc = rescale(&net, &traj, &pi, &d).unwrap();
        for (u, j) in resc.density.iter().zip(&resc.flux) {
            assert!(u.iter().all(|v| (v - 1.0).abs() < 1e-9));
            assert!(j[0].abs() < 1e-9 && j[1].abs() < 1e-9);
        }
        let back = unrescale(&net, &resc, &pi, &d).unwrap();
        for (a, b) in back.flux.iter().flatten().zip(traj.flux.iter().flatten()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn frame_is_checked() {
        let net = pair();
        let d = decompose(&net, &Tolerances::default()).unwrap();
        let pi = stationary_distribution(&net, 0.1).unwrap();
        let traj = simulate_eps(&net, 0.1, &[1.0, 0.0], 1.0, 4).unwrap();
        assert!(matches!(unrescale(&net, &traj, &pi, &d), Err(Error::FrameMismatch { .. })));
    }
}
