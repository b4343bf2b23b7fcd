use quadrature::double_exponential::integrate;
use serde::{Deserialize, Serialize};

use super::{Profile, SpikeConfig};
use crate::decomp::decompose;
use crate::error::{Error, Result};
use crate::tolerance::Tolerances;
use crate::functionals::{eval_i0_eps, rel_entropy};
use crate::netmodel::stationary_distribution;

const QUAD_TOL: f64 = 1e-14;
/// Required agreement between closed forms and quadrature.
pub const AGREEMENT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeTerm {
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Closed-form and quadrature values of the cost terms of one spike.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeCost {
    pub eps: f64,
    pub i0: f64,
    pub terms: Vec<SpikeTerm>,
    pub analytic_total: f64,
    pub numeric_total: f64,
    pub max_rel_error: f64,
    /// `Ĩ⁰₀ + 𝒥⁰` of the narrow limit.
    pub limit_total: f64,
}

fn s(a: f64, b: f64) -> f64 {
    rel_entropy(a, b).to_f64()
}

/// `∫₀ʰ s(a + τ/ε | κτ/ε) dτ`.
fn plateau_term(a: f64, kappa: f64, eps: f64) -> f64 {
    let h = 0.5 * eps.sqrt();
    let tail = -0.125 + 0.125 * kappa;
    if a == 0.0 {
        return 0.125 * (1.0 / kappa).ln() + tail;
    }
    0.5 * eps * a * a * (h / (eps * a)).ln_1p() + (a * h + 0.125) * ((2.0 * eps.sqrt() * a + 1.0) / kappa).ln()
        - 0.5 * a * h
        + tail
}

/// `∫₀ᵀ f` split at `0, T/2 − h, T/2, T/2 + h, T`.
fn integrate_split(p: &Profile, horizon: f64, f: impl Fn(f64) -> f64) -> f64 {
    let [k0, k1, k2] = p.kinks();
    let cuts = [0.0, k0, k1, k2, horizon];
    cuts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| integrate(&f, w[0], w[1], QUAD_TOL).integral)
        .sum()
}

fn term(name: impl Into<String>, analytic: f64, numeric: f64) -> SpikeTerm {
    let scale = analytic.abs().max(numeric.abs());
    let rel_error = if scale == 0.0 { 0.0 } else { (analytic - numeric).abs() / scale };
    SpikeTerm { name: name.into(), analytic, numeric, rel_error }
}

/// Per-edge terms (entry, cycle, exit, side, return) of the spike cost in closed form and by adaptive quadrature
/// of the `s`-integrands, plus `Ĩ₀^ε` and the cost of the narrow limit.
/// Fails when any term disagrees by more than [`AGREEMENT`] relative.
pub fn spike_cost(cfg: &SpikeConfig) -> Result<SpikeCost> {
    let net = cfg.network()?;
    let pi = stationary_distribution(&net, cfg.eps)?;
    let p = Profile::new(cfg);
    let (eps, t_end) = (cfg.eps, cfg.horizon);
    let h = cfg.half_width();
    let kf = cfg.cycle_len as f64;
    let kh = kf * h;
    // ∫₀ᵀ ρ_{x0}
    let source_mass = t_end - 0.5 * kh * t_end - 0.5 * kh * h;

    let mut terms = Vec::new();
    let k_in = cfg.kappa_in;
    terms.push(term(
        "entry",
        k_in * source_mass + kh * ((kf / k_in).ln() - 1.0) + s(1.0 - kh, 1.0),
        integrate_split(&p, t_end, |t| s(p.j_in(t), k_in * p.rho_source(t))),
    ));
    for k in 1..=cfg.cycle_len {
        let kappa = cfg.kappa_cycle[k - 1];
        terms.push(term(
            format!("cycle[{k}]"),
            plateau_term(cfg.a(k), kappa, eps) + plateau_term(cfg.b(k), kappa, eps),
            integrate_split(&p, t_end, |t| s(p.j_cycle(k, t), kappa / eps * p.rho_cycle(t))),
        ));
    }
    let k_out = cfg.kappa_out;
    terms.push(term(
        "exit",
        kh * (2.0 * kf * eps.sqrt() / k_out).ln() + 0.25 * k_out,
        integrate_split(&p, t_end, |t| s(p.j_out(t), k_out / eps * p.rho_cycle(t))),
    ));
    if let Some(k_side) = cfg.kappa_side {
        terms.push(term(
            "side",
            k_side * source_mass,
            integrate_split(&p, t_end, |t| k_side * p.rho_source(t)),
        ));
    }
    terms.push(term(
        "return",
        cfg.kappa_back * kh * (0.5 * t_end - 0.5 * h),
        integrate_split(&p, t_end, |t| cfg.kappa_back * p.rho_sink(t)),
    ));

    let mut u0 = vec![0.0; net.node_count()];
    u0[0] = 1.0 / pi.pi[0];
    let i0 = eval_i0_eps(&u0, &pi.pi)
        .finite()
        .ok_or_else(|| Error::NonFinite("initial cost".into()))?;

    // The limit: x0 keeps unit mass, the cycle carries ¼ atoms, the exit is silent.
    let limit_d = decompose(&net, &Tolerances::default())?;
    let pl = &limit_d.node_class.pi_limit;
    let limit_i0 = s(1.0, pl[0]) + pl[cfg.cycle_len + 1];
    let limit_cycle: f64 = cfg
        .kappa_cycle
        .iter()
        .map(|&k| 0.25 * ((1.0 / k).ln() - 1.0 + k))
        .sum();
    let limit_total =
        limit_i0 + (k_in + cfg.kappa_side.unwrap_or(0.0)) * t_end + limit_cycle + 0.25 * k_out;

    let analytic_total = i0 + terms.iter().map(|t| t.analytic).sum::<f64>();
    let numeric_total = i0 + terms.iter().map(|t| t.numeric).sum::<f64>();
    let max_rel_error = terms.iter().map(|t| t.rel_error).fold(0.0, f64::max);
    if max_rel_error > AGREEMENT {
        let worst = terms.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error)).expect("terms");
        return Err(Error::Config(format!(
            "closed form and quadrature disagree on term {}: {} vs {}",
            worst.name, worst.analytic, worst.numeric
        )));
    }
    Ok(SpikeCost { eps, i0, terms, analytic_total, numeric_total, max_rel_error, limit_total })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NarrowRow {
    pub name: String,
    /// `¼ φ(T/2)`.
    pub limit: f64,
    /// Largest `|∫φ j_{r^k} − ¼φ(T/2)|` over the cycle, per ε.
    pub errors: Vec<f64>,
    pub monotone: bool,
}

/// Dual pairings of the cycle fluxes against fixed test functions along a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NarrowReport {
    pub eps: Vec<f64>,
    pub rows: Vec<NarrowRow>,
    /// `∫ j_{r^k} − ¼ ≤ (a_k + b_k)√ε/2 + 10⁻¹²` for every k and ε.
    pub mass_bound_holds: bool,
}

impl NarrowReport {
    pub fn holds(&self) -> bool {
        self.mass_bound_holds && self.rows.iter().all(|r| r.monotone)
    }
}

fn bump(t: f64, centre: f64, width: f64) -> f64 {
    let z = (t - centre) / width;
    if z.abs() >= 1.0 { 0.0 } else { (1.0 - 1.0 / (1.0 - z * z)).exp() }
}

/// Pairs `j^ε_{r^k}` with `1`, `t`, `cos(2πt/T)`, a bump centred at `T/2` and a
/// bump supported away from `T/2`. `family` must have decreasing ε.
pub fn narrow_limit_check(family: &[SpikeConfig]) -> Result<NarrowReport> {
    if family.windows(2).any(|w| w[1].eps >= w[0].eps) {
        return Err(Error::Config("ε must decrease along the family".into()));
    }
    type Phi = Box<dyn Fn(f64, f64) -> f64>;
    let tests: Vec<(&str, Phi)> = vec![
        ("one", Box::new(|_, _| 1.0)),
        ("t", Box::new(|t, _| t)),
        ("cos", Box::new(|t, tt| (2.0 * std::f64::consts::PI * t / tt).cos())),
        ("bump_centre", Box::new(|t, tt| bump(t, 0.5 * tt, 0.25 * tt))),
        ("bump_away", Box::new(|t, tt| bump(t, 0.25 * tt, 0.125 * tt))),
    ];
    let mut mass_bound_holds = true;
    let mut errors = vec![Vec::new(); tests.len()];
    let mut limits = vec![0.0; tests.len()];
    for cfg in family {
        cfg.validate()?;
        let p = Profile::new(cfg);
        let t_end = cfg.horizon;
        for (i, (name, phi)) in tests.iter().enumerate() {
            limits[i] = 0.25 * phi(0.5 * t_end, t_end);
            let mut worst = 0.0f64;
            for k in 1..=cfg.cycle_len {
                let pairing = integrate_split(&p, t_end, |t| phi(t, t_end) * p.j_cycle(k, t));
                let err = (pairing - limits[i]).abs();
                if *name == "one" && err > (cfg.a(k) + cfg.b(k)) * cfg.half_width() + 1e-12 {
                    mass_bound_holds = false;
                }
                worst = worst.max(err);
            }
            errors[i].push(worst);
        }
    }
    let rows = tests
        .iter()
        .zip(errors)
        .zip(limits)
        .map(|(((name, _), errors), limit)| NarrowRow {
            name: name.to_string(),
            limit,
            monotone: errors.windows(2).all(|w| w[1] <= w[0] + 1e-15),
            errors,
        })
        .collect();
    Ok(NarrowReport { eps: family.iter().map(|c| c.eps).collect(), rows, mass_bound_holds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_term_closed_form() {
        // K√ε = ½ with κ_out = e: exit cost = ¼ log(1/e) + ¼e.
        let mut cfg = SpikeConfig::new(5, 2, 0.01);
        cfg.kappa_out = std::f64::consts::E;
        let c = spike_cost(&cfg).unwrap();
        let iii = c.terms.iter().find(|t| t.name == "exit").unwrap();
        assert!((iii.analytic - 0.25 * (std::f64::consts::E - 1.0)).abs() < 1e-14);
        assert!(iii.rel_error < 1e-9);
    }

    #[test]
    fn closed_forms_match_quadrature() {
        for k in [2, 3, 5] {
            for eps in [1e-2, 1e-3, 1e-4] {
                let c = spike_cost(&SpikeConfig::new(k, 1 + k / 2, eps)).unwrap();
                assert!(c.max_rel_error < 1e-8, "K={k} ε={eps}: {}", c.max_rel_error);
            }
        }
    }

    #[test]
    fn total_approaches_limit() {
        let cfg = SpikeConfig::new(3, 2, 1e-2);
        let gaps: Vec<f64> = [1e-2, 1e-6, 1e-10]
            .iter()
            .map(|&e| {
                let c = spike_cost(&cfg.with_eps(e)).unwrap();
                (c.analytic_total - c.limit_total).abs()
            })
            .collect();
        assert!(gaps[2] < gaps[0] && gaps[1] < gaps[0] && gaps[2] < 1e-3, "{gaps:?}");
    }

    #[test]
    fn narrow_pairings_converge() {
        let base = SpikeConfig::new(4, 3, 1e-2);
        let family: Vec<_> = [1e-2, 1e-3, 1e-4, 1e-5].iter().map(|&e| base.with_eps(e)).collect();
        let rep = narrow_limit_check(&family).unwrap();
        assert!(rep.holds(), "{rep:?}");
        let t_row = rep.rows.iter().find(|r| r.name == "t").unwrap();
        assert!((t_row.limit - base.horizon / 8.0).abs() < 1e-15);
        let away = rep.rows.iter().find(|r| r.name == "bump_away").unwrap();
        assert!(away.errors.iter().all(|e| *e < 1e-14));
    }

    #[test]
    fn limit_cost_matches_limit_functional() {
        use crate::functionals::eval_j_limit;
        use crate::spikelab::spike_limit;
        let tol = Tolerances::default();
        let cfg = SpikeConfig::new(3, 2, 1e-3);
        let (net, d, traj) = spike_limit(&cfg, 200, &tol).unwrap();
        let rep = eval_j_limit(&net, &traj, &d, &tol).unwrap();
        let c = spike_cost(&cfg).unwrap();
        assert!((rep.total.to_f64() - c.limit_total).abs() < 1e-9, "{rep:?} vs {}", c.limit_total);
    }

    #[test]
    fn grid_functional_agrees_with_closed_form() {
        use crate::functionals::eval_j_eps;
        use crate::spikelab::build_spike;
        let tol = Tolerances::default();
        let cfg = SpikeConfig::new(2, 2, 1e-2);
        let sp = build_spike(&cfg, 20_000).unwrap();
        let d = decompose(&sp.network, &tol).unwrap();
        let rep = eval_j_eps(&sp.network, &sp.trajectory, &d, &sp.stationary, &tol).unwrap();
        let c = spike_cost(&cfg).unwrap();
        let gap = (rep.total.to_f64() - c.analytic_total).abs() / c.analytic_total;
        assert!(gap < 1e-3, "{} vs {}", rep.total, c.analytic_total);
    }
}
