use crate::dynamics::Trajectory;
use crate::error::Result;
use crate::extreal::ExtReal;
use crate::linalg::{cumulative_trapezoid, trapezoid};
use crate::netmodel::{assemble_rates, Network, StationaryDist};

use super::{eval_i0_eps, FunctionalReport};

/// Integrand of `FI^ε` at each grid time.
fn fisher_density(net: &Network, traj: &Trajectory, pi: &StationaryDist) -> Vec<f64> {
    let rates = assemble_rates(net, pi.epsilon).values;
    traj.density
        .iter()
        .map(|u| {
            net.edges()
                .iter()
                .zip(&rates)
                .map(|(e, k)| {
                    let d = u[e.src].max(0.0).sqrt() - u[e.dst].max(0.0).sqrt();
                    k * pi.pi[e.src] * d * d
                })
                .sum::<f64>()
        })
        .collect()
}

/// `FI^ε(u) = ½ Σ_r ∫ κ^ε_r π^ε_{r⁻} (√u_{r⁻} − √u_{r⁺})² dt`.
pub fn fisher_info(net: &Network, traj: &Trajectory, pi: &StationaryDist) -> Result<f64> {
    traj.expect_frame("rescaled")?;
    Ok(0.5 * trapezoid(&traj.grid, &fisher_density(net, traj, pi)))
}

/// FIR margin `min_t [½Ĩ₀^ε(u(0)) + 𝒥^ε − ½Ĩ₀^ε(u(t)) − FI^ε_{[0,t]}(u)]`,
/// nonnegative whenever the inequality holds. The Fisher information is
/// accumulated up to `t`; with the full-horizon integral the bound fails on
/// every non-stationary exact flow.
pub fn fir_check(net: &Network, traj: &Trajectory, pi: &StationaryDist, report: &FunctionalReport) -> Result<ExtReal> {
    traj.expect_frame("rescaled")?;
    let fisher = cumulative_trapezoid(&traj.grid, &fisher_density(net, traj, pi));
    let budget = report.i0.scale(0.5) + report.j_total();
    let mut worst = f64::INFINITY;
    for (u, fi) in traj.density.iter().zip(&fisher) {
        match eval_i0_eps(u, &pi.pi).finite() {
            Some(v) => worst = worst.min(-(0.5 * v + 0.5 * fi)),
            None => return Ok(ExtReal::PosInfinity),
        }
    }
    Ok(budget.sub_finite(-worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Frame;
    use crate::linalg::uniform_grid;
    use crate::netmodel::{parse_network, stationary_distribution};

    fn constant(u: [f64; 2]) -> (Network, StationaryDist, Trajectory) {
        let net = parse_network("nodes: 1 2\n1 -> 2 rate=1 speed=slow\n2 -> 1 rate=1 speed=slow\n").unwrap();
        let pi = stationary_distribution(&net, 0.5).unwrap();
        let grid = uniform_grid(1.0, 7);
        let n = grid.len();
        let traj = Trajectory::new(Frame::Rescaled { eps: 0.5 }, grid, vec![u.to_vec(); n], vec![vec![0.0; 2]; n]).unwrap();
        (net, pi, traj)
    }

    #[test]
    fn hand_evaluated_fisher_information() {
        let (net, pi, traj) = constant([4.0, 1.0]);
        assert!((fisher_info(&net, &traj, &pi).unwrap() - 0.5).abs() < 1e-14);
        let (net, pi, traj) = constant([3.0, 3.0]);
        assert_eq!(fisher_info(&net, &traj, &pi).unwrap(), 0.0);
    }
}
