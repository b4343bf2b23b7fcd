mod common;

use std::f64::consts::PI;

use common::{admissible_network, load, DAMPED_CYCLE, FAST_TRIANGLE};
use fastflux::dynamics::{build_effective, rescale, simulate_effective, simulate_eps, well_prepare};
use fastflux::functionals::{big_c, big_c_star, eval_j_eps, eval_j_limit, fir_check, orlicz_norm, rel_entropy};
use fastflux::netmodel::stationary_distribution;
use fastflux::Tolerances;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn s(a: f64, b: f64) -> f64 {
    rel_entropy(a, b).finite().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn relative_entropy_is_jointly_convex(
        a1 in 0.0f64..10.0, b1 in 1e-3f64..10.0, a2 in 0.0f64..10.0, b2 in 1e-3f64..10.0, l in 0.0f64..1.0,
    ) {
        let lhs = s(l * a1 + (1.0 - l) * a2, l * b1 + (1.0 - l) * b2);
        let rhs = l * s(a1, b1) + (1.0 - l) * s(a2, b2);
        prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs.abs()), "{lhs} > {rhs}");
    }

    #[test]
    fn entropy_and_cosh_inequalities(a in 0.0f64..10.0, b in 1e-3f64..10.0, p in -20.0f64..20.0, delta in 0.0f64..=1.0) {
        for alpha in [0.5, 1.0, 2.0] {
            prop_assert!(s(a, b) >= (1.0 - alpha) * b + a * alpha.ln() - 1e-10);
        }
        prop_assert!(s(a, b) <= a * a / b - 2.0 * a + b + 1e-10);
        prop_assert!(s(a, b) >= b * big_c((a - b) / b) - 1e-10);
        prop_assert!(big_c(delta * p) >= delta * delta * big_c(p) - 1e-10);
        prop_assert!(big_c(delta * p) <= delta * big_c(p) + 1e-10);
    }

    #[test]
    fn fenchel_young(a in -20.0f64..20.0, p in -5.0f64..5.0) {
        prop_assert!(big_c(a) + big_c_star(p) >= a * p - 1e-9 * (1.0 + (a * p).abs()));
        let opt = (a / 2.0).asinh();
        prop_assert!((big_c(a) + big_c_star(opt) - a * opt).abs() <= 1e-9 * (1.0 + big_c(a)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn orlicz_norm_scales_like_a_norm(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let series: Vec<Vec<f64>> = (0..3).map(|_| grid.iter().map(|_| rng.gen_range(0.0..5.0)).collect()).collect();
        let doubled: Vec<Vec<f64>> = series.iter().map(|j| j.iter().map(|v| 2.0 * v).collect()).collect();
        let (n1, n2) = (orlicz_norm(&grid, &series), orlicz_norm(&grid, &doubled));
        prop_assert!(n2 <= 2.0 * n1 * (1.0 + 1e-8));
        prop_assert!(n2 >= n1);
    }

    #[test]
    fn exact_flows_minimise_the_rate_functional(seed in any::<u64>(), log_eps in -3.0f64..-1.0) {
        let tol = Tolerances::default();
        let (net, d) = admissible_network(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u0: Vec<f64> = (0..net.node_count()).map(|_| rng.gen_range(0.2..3.0)).collect();
        let eps = 10f64.powf(log_eps);
        let pi = stationary_distribution(&net, eps).unwrap();
        let rho0: Vec<f64> = u0.iter().zip(&pi.pi).map(|(u, p)| u * p).collect();
        let traj = rescale(&net, &simulate_eps(&net, eps, &rho0, 1.0, 400).unwrap(), &pi, &d).unwrap();
        let j = eval_j_eps(&net, &traj, &d, &pi, &tol).unwrap().j_total().to_f64();
        prop_assert!(j <= 1e-6, "𝒥^ε = {j}");

        let sys = build_effective(&net, &d).unwrap();
        let limit = simulate_effective(&net, &d, &sys, &well_prepare(&u0, &d, &sys), 1.0, 400).unwrap();
        let j0 = eval_j_limit(&net, &limit, &d, &tol).unwrap().j_total().to_f64();
        prop_assert!(j0 <= 1e-6, "𝒥⁰ = {j0}");
    }
}

/// Adds `c(1 + ½ sin 2πt)` along a directed cycle of the raw flow, which
/// leaves the densities and the continuity equation untouched.
fn add_cycle_flux(traj: &mut fastflux::dynamics::Trajectory, cycle: &[usize], c: f64) {
    let profile = |t: f64| c * (1.0 + 0.5 * (2.0 * PI * t).sin());
    let primitive = |t: f64| c * (t - (2.0 * PI * t).cos() / (4.0 * PI));
    for (k, &t) in traj.grid.iter().enumerate() {
        for &r in cycle {
            traj.flux[k][r] += profile(t);
        }
    }
    if let Some(ints) = traj.interval_flux.as_mut() {
        for (k, row) in ints.iter_mut().enumerate() {
            let m = primitive(traj.grid[k + 1]) - primitive(traj.grid[k]);
            for &r in cycle {
                row[r] += m;
            }
        }
    }
}

#[test]
fn fir_margin_survives_cycle_flux_perturbations() {
    let tol = Tolerances::default();
    let eps = 1e-2;
    let setups = [
        (FAST_TRIANGLE, vec![vec!["1->2", "2->3", "3->1"], vec!["4->5", "5->4"]]),
        (DAMPED_CYCLE, vec![vec!["1->2", "2->3", "3->1"]]),
    ];
    let mut worst = f64::INFINITY;
    for trial in 0..100u64 {
        let (text, cycles) = &setups[(trial % 2) as usize];
        let (net, d) = load(text);
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let pi = stationary_distribution(&net, eps).unwrap();
        let rho0: Vec<f64> = pi.pi.iter().map(|p| p * rng.gen_range(0.2..3.0)).collect();
        let mut raw = simulate_eps(&net, eps, &rho0, 1.0, 2000).unwrap();
        let cycle: Vec<usize> = cycles[rng.gen_range(0..cycles.len())].iter().map(|l| net.edge_index(l).unwrap()).collect();
        add_cycle_flux(&mut raw, &cycle, rng.gen_range(0.01..1.0));
        let traj = rescale(&net, &raw, &pi, &d).unwrap();
        let report = eval_j_eps(&net, &traj, &d, &pi, &tol).unwrap();
        assert!(report.j_total().to_f64() > 0.0);
        let margin = fir_check(&net, &traj, &pi, &report).unwrap().to_f64();
        worst = worst.min(margin);
    }
    assert!(worst >= -1e-6, "smallest margin {worst}");
}
