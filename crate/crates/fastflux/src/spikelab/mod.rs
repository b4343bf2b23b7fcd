//! The explicit spike family on a damped cycle, its cost, its narrow limit,
//! and the no-spike certificate for damped edges outside cycles.
//!
//! The canonical network has nodes `x0, x1, …, xK, x{K+1}`: a slow entry
//! `x0 → x1`, the fast cycle `x1 → x2 → … → xK → x1`, a fast exit
//! `xl → x{K+1}`, a slow return `x{K+1} → x0` and optionally a slow side edge
//! `x0 → x{K+1}`. Mass starts at `x0`; a bit of it is pushed into the cycle
//! just before `T/2`, circulates with rate `Δ/ε` and leaves through the exit
//! just after `T/2`.

mod certificate;
mod cost;

use serde::{Deserialize, Serialize};

use crate::decomp::{decompose, Decomposition};
use crate::dynamics::{Atom, Frame, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::uniform_grid;
use crate::netmodel::{stationary_distribution, Edge, Network, NodeId, Speed, StationaryDist};
use crate::tolerance::Tolerances;

pub use certificate::{no_spike_certificate, CertificateEntry, CertificateReport, CertificateStatus};
pub use cost::{narrow_limit_check, spike_cost, NarrowReport, NarrowRow, SpikeCost, SpikeTerm, AGREEMENT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeConfig {
    /// Cycle length `K ≥ 2`.
    pub cycle_len: usize,
    /// Exit index `1 ≤ l ≤ K`.
    pub exit: usize,
    pub horizon: f64,
    pub kappa_in: f64,
    /// Rates of `x^k → x^{k+1}`, `k = 1..K`.
    pub kappa_cycle: Vec<f64>,
    pub kappa_out: f64,
    pub kappa_back: f64,
    #[serde(default)]
    pub kappa_side: Option<f64>,
    pub eps: f64,
}

impl SpikeConfig {
    /// Default rates for a cycle of length `k` exiting at `l`.
    pub fn new(k: usize, l: usize, eps: f64) -> Self {
        SpikeConfig {
            cycle_len: k,
            exit: l,
            horizon: 2.0,
            kappa_in: 1.0,
            kappa_cycle: vec![0.05; k],
            kappa_out: 0.05,
            kappa_back: 0.1,
            kappa_side: Some(1.0),
            eps,
        }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        SpikeConfig { eps, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.cycle_len;
        if k < 2 {
            return Err(Error::Config(format!("cycle length {k} < 2")));
        }
        if self.exit < 1 || self.exit > k {
            return Err(Error::Config(format!("exit index {} outside 1..={k}", self.exit)));
        }
        if self.kappa_cycle.len() != k {
            return Err(Error::LengthMismatch { expected: k, found: self.kappa_cycle.len() });
        }
        let rates = [self.kappa_in, self.kappa_out, self.kappa_back]
            .into_iter()
            .chain(self.kappa_cycle.iter().copied())
            .chain(self.kappa_side);
        for r in rates {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Config(format!("rate {r} is not positive")));
            }
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if !(self.eps > 0.0 && self.eps.sqrt() < self.horizon) {
            return Err(Error::Config(format!("ε = {} must satisfy 0 < √ε < T", self.eps)));
        }
        if k as f64 * self.eps.sqrt() >= 2.0 {
            return Err(Error::Config("K√ε must stay below 2 so x0 keeps mass".into()));
        }
        Ok(())
    }

    /// Half-width `h = √ε/2` of the spike window.
    pub fn half_width(&self) -> f64 {
        0.5 * self.eps.sqrt()
    }

    /// `a_k = K − k`.
    pub fn a(&self, k: usize) -> f64 {
        (self.cycle_len - k) as f64
    }

    /// `b_k = k − l + K·1{k < l}`.
    pub fn b(&self, k: usize) -> f64 {
        let wrap = if k < self.exit { self.cycle_len } else { 0 };
        (k + wrap - self.exit) as f64
    }

    /// Edge indices in the canonical network.
    pub fn edge_in(&self) -> usize {
        0
    }

    /// Cycle edge `r^k`, `k = 1..K`.
    pub fn edge_cycle(&self, k: usize) -> usize {
        k
    }

    pub fn edge_out(&self) -> usize {
        self.cycle_len + 1
    }

    pub fn edge_back(&self) -> usize {
        self.cycle_len + 2
    }

    pub fn edge_side(&self) -> Option<usize> {
        self.kappa_side.map(|_| self.cycle_len + 3)
    }

    /// The canonical damped-cycle network.
    pub fn network(&self) -> Result<Network> {
        self.validate()?;
        let k = self.cycle_len;
        let nodes = (0..=k + 1)
            .map(|i| NodeId::new(format!("x{i}")))
            .collect::<Result<Vec<_>>>()?;
        let edge = |src, dst, rate, speed| Edge { src, dst, rate, speed };
        let mut edges = vec![edge(0, 1, self.kappa_in, Speed::Slow)];
        for i in 1..=k {
            edges.push(edge(i, i % k + 1, self.kappa_cycle[i - 1], Speed::Fast));
        }
        edges.push(edge(self.exit, k + 1, self.kappa_out, Speed::Fast));
        edges.push(edge(k + 1, 0, self.kappa_back, Speed::Slow));
        if let Some(kappa) = self.kappa_side {
            edges.push(edge(0, k + 1, kappa, Speed::Slow));
        }
        Network::new(nodes, edges)
    }
}

/// `Δ^ε_T(t)`: tent of half-width `√ε/2` and peak `√ε/2` centred at `T/2`.
pub fn triangle(t: f64, eps: f64, horizon: f64) -> f64 {
    let h = 0.5 * eps.sqrt();
    (h - (t - 0.5 * horizon).abs()).max(0.0)
}

/// Closed-form profiles of the spike construction.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Profile<'a> {
    cfg: &'a SpikeConfig,
    mid: f64,
    h: f64,
}

impl<'a> Profile<'a> {
    pub(crate) fn new(cfg: &'a SpikeConfig) -> Self {
        Profile { cfg, mid: 0.5 * cfg.horizon, h: cfg.half_width() }
    }

    /// Breakpoints `T/2 − h, T/2, T/2 + h`.
    pub(crate) fn kinks(&self) -> [f64; 3] {
        [self.mid - self.h, self.mid, self.mid + self.h]
    }

    fn rise(&self, t: f64) -> f64 {
        if t > self.mid - self.h && t < self.mid { 1.0 } else { 0.0 }
    }

    fn fall(&self, t: f64) -> f64 {
        if t > self.mid && t < self.mid + self.h { 1.0 } else { 0.0 }
    }

    /// `∫₀ᵗ` of the rise and fall indicators.
    fn rise_int(&self, t: f64) -> f64 {
        (t - (self.mid - self.h)).clamp(0.0, self.h)
    }

    fn fall_int(&self, t: f64) -> f64 {
        (t - self.mid).clamp(0.0, self.h)
    }

    fn tri(&self, t: f64) -> f64 {
        triangle(t, self.cfg.eps, self.cfg.horizon)
    }

    /// `∫₀ᵗ Δ`.
    fn tri_int(&self, t: f64) -> f64 {
        let h = self.h;
        let s = t - (self.mid - h);
        if s <= 0.0 {
            0.0
        } else if s <= h {
            0.5 * s * s
        } else if s <= 2.0 * h {
            let r = 2.0 * h - s;
            h * h - 0.5 * r * r
        } else {
            h * h
        }
    }

    pub(crate) fn j_in(&self, t: f64) -> f64 {
        self.cfg.cycle_len as f64 * self.rise(t)
    }

    pub(crate) fn j_cycle(&self, k: usize, t: f64) -> f64 {
        self.cfg.a(k) * self.rise(t) + self.tri(t) / self.cfg.eps + self.cfg.b(k) * self.fall(t)
    }

    pub(crate) fn j_out(&self, t: f64) -> f64 {
        self.cfg.cycle_len as f64 * self.fall(t)
    }

    /// Concentrations `ρ = π^ε u` at `x0`, `x^k` and `x^{K+1}`.
    pub(crate) fn rho_source(&self, t: f64) -> f64 {
        1.0 - self.cfg.cycle_len as f64 * self.rise_int(t)
    }

    pub(crate) fn rho_cycle(&self, t: f64) -> f64 {
        self.tri(t)
    }

    pub(crate) fn rho_sink(&self, t: f64) -> f64 {
        self.cfg.cycle_len as f64 * self.fall_int(t)
    }

    /// Fluxes on all edges at `t`.
    fn fluxes(&self, t: f64) -> Vec<f64> {
        let k = self.cfg.cycle_len;
        let mut j = vec![0.0; k + 3 + usize::from(self.cfg.kappa_side.is_some())];
        j[self.cfg.edge_in()] = self.j_in(t);
        for i in 1..=k {
            j[self.cfg.edge_cycle(i)] = self.j_cycle(i, t);
        }
        j[self.cfg.edge_out()] = self.j_out(t);
        j
    }

    /// `∫₀ᵗ j` on all edges.
    fn flux_ints(&self, t: f64) -> Vec<f64> {
        let k = self.cfg.cycle_len;
        let kf = k as f64;
        let mut j = vec![0.0; k + 3 + usize::from(self.cfg.kappa_side.is_some())];
        j[self.cfg.edge_in()] = kf * self.rise_int(t);
        for i in 1..=k {
            j[self.cfg.edge_cycle(i)] = self.cfg.a(i) * self.rise_int(t)
                + self.tri_int(t) / self.cfg.eps
                + self.cfg.b(i) * self.fall_int(t);
        }
        j[self.cfg.edge_out()] = kf * self.fall_int(t);
        j
    }

    fn rho(&self, t: f64) -> Vec<f64> {
        let k = self.cfg.cycle_len;
        let mut rho = vec![self.rho_cycle(t); k + 2];
        rho[0] = self.rho_source(t);
        rho[k + 1] = self.rho_sink(t);
        rho
    }
}

/// A spike trajectory in the rescaled frame with its network and stationary law.
#[derive(Clone, Debug)]
pub struct SpikeTrajectory {
    pub config: SpikeConfig,
    pub network: Network,
    pub stationary: StationaryDist,
    pub trajectory: Trajectory,
}

/// Grid of `steps` uniform intervals with the three kink times inserted.
fn spike_grid(cfg: &SpikeConfig, steps: usize) -> Vec<f64> {
    let mut grid = uniform_grid(cfg.horizon, steps);
    grid.extend(Profile::new(cfg).kinks());
    grid.sort_by(f64::total_cmp);
    let tiny = 1e-14 * cfg.horizon;
    grid.dedup_by(|a, b| (*a - *b).abs() <= tiny);
    grid
}

/// Sample the construction on a grid containing the kinks. Interval fluxes are
/// exact, so the mild continuity equations hold to rounding.
pub fn build_spike(cfg: &SpikeConfig, steps: usize) -> Result<SpikeTrajectory> {
    let network = cfg.network()?;
    let stationary = stationary_distribution(&network, cfg.eps)?;
    let p = Profile::new(cfg);
    let grid = spike_grid(cfg, steps);
    let density = grid
        .iter()
        .map(|&t| p.rho(t).iter().zip(&stationary.pi).map(|(r, pi)| r / pi).collect())
        .collect();
    let flux = grid.iter().map(|&t| p.fluxes(t)).collect();
    let cumulative: Vec<Vec<f64>> = grid.iter().map(|&t| p.flux_ints(t)).collect();
    let interval = cumulative
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect())
        .collect();
    let mut trajectory = Trajectory::new(Frame::Rescaled { eps: cfg.eps }, grid, density, flux)?;
    trajectory.interval_flux = Some(interval);
    Ok(SpikeTrajectory { config: cfg.clone(), network, stationary, trajectory })
}

/// The narrow limit of the family: `x0` keeps its unit mass, each cycle edge
/// carries an atom `¼ δ_{T/2}` and each cycle node a density atom of mass
/// `¼/π̃` (so that `π̃ u` has mass `¼`).
pub fn spike_limit(cfg: &SpikeConfig, steps: usize, tol: &Tolerances) -> Result<(Network, Decomposition, Trajectory)> {
    let network = cfg.network()?;
    let d = decompose(&network, tol)?;
    let k = cfg.cycle_len;
    let grid = spike_grid(cfg, steps);
    let mut u = vec![0.0; k + 2];
    u[0] = 1.0 / d.node_class.pi_limit[0];
    let density = vec![u; grid.len()];
    let flux = vec![vec![0.0; network.edge_count()]; grid.len()];
    let mut atom = Atom {
        time: 0.5 * cfg.horizon,
        density: vec![0.0; k + 2],
        flux: vec![0.0; network.edge_count()],
    };
    for i in 1..=k {
        atom.density[i] = 0.25 / d.node_class.pi_tilde[i];
        atom.flux[cfg.edge_cycle(i)] = 0.25;
    }
    let mut traj = Trajectory::new(Frame::Limit, grid, density, flux)?;
    traj.atoms.push(atom);
    traj.validate()?;
    Ok((network, d, traj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::{EdgeTag, NodeTag};
    use crate::functionals::eps_continuity_residual;

    #[test]
    fn triangle_shape() {
        let (eps, t) = (0.01, 1.0);
        assert!((triangle(0.5, eps, t) - 0.05).abs() < 1e-15);
        assert_eq!(triangle(0.0, eps, t), 0.0);
        assert_eq!(triangle(1.0, eps, t), 0.0);
        assert!((triangle(0.475, eps, t) - 0.025).abs() < 1e-15);
        let cfg = SpikeConfig::new(3, 2, eps);
        let p = Profile::new(&cfg);
        assert!((p.tri_int(cfg.horizon) / eps - 0.25).abs() < 1e-14);
    }

    #[test]
    fn plateau_coefficients() {
        let cfg = SpikeConfig::new(4, 2, 1e-2);
        let a: Vec<f64> = (1..=4).map(|k| cfg.a(k)).collect();
        let b: Vec<f64> = (1..=4).map(|k| cfg.b(k)).collect();
        assert_eq!(a, vec![3.0, 2.0, 1.0, 0.0]);
        assert_eq!(b, vec![3.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn canonical_network_is_classified_as_expected() {
        let cfg = SpikeConfig::new(3, 2, 1e-2);
        let net = cfg.network().unwrap();
        let d = decompose(&net, &Tolerances::default()).unwrap();
        assert_eq!(d.node_class.tags[0], NodeTag::V0Slow);
        assert_eq!(d.node_class.tags[4], NodeTag::V0Slow);
        for k in 1..=3 {
            assert_eq!(d.node_class.tags[k], NodeTag::V1);
            assert_eq!(d.edge_class.tags[cfg.edge_cycle(k)], EdgeTag::DampedCycle);
        }
        assert_eq!(d.edge_class.tags[cfg.edge_out()], EdgeTag::DampedNoCycle);
    }

    #[test]
    fn spike_conserves_mass_and_solves_continuity() {
        let cfg = SpikeConfig::new(3, 2, 1e-3);
        let s = build_spike(&cfg, 10_000).unwrap();
        let t_end = cfg.horizon;
        let d = decompose(&s.network, &Tolerances::default()).unwrap();
        for (t, u) in s.trajectory.grid.iter().zip(&s.trajectory.density) {
            let mass: f64 = u.iter().zip(&s.stationary.pi).map(|(u, p)| u * p).sum();
            assert!((mass - 1.0).abs() < 1e-12, "mass {mass} at {t}");
            for k in 1..=3 {
                let rho = u[k] * s.stationary.pi[k];
                assert!((rho - triangle(*t, cfg.eps, t_end)).abs() < 1e-12);
            }
        }
        let (res, _) = eps_continuity_residual(&s.network, &s.trajectory, &d, &s.stationary).unwrap();
        assert!(res < 1e-12, "residual {res}");
    }

    #[test]
    fn cycle_flux_integrals() {
        for eps in [1e-2, 1e-3, 1e-4] {
            let cfg = SpikeConfig::new(4, 3, eps);
            let p = Profile::new(&cfg);
            for k in 1..=4 {
                let total = p.flux_ints(cfg.horizon)[cfg.edge_cycle(k)];
                let expect = 0.25 + (cfg.a(k) + cfg.b(k)) * cfg.half_width();
                assert!((total - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(SpikeConfig::new(1, 1, 1e-2).validate().is_err());
        assert!(SpikeConfig::new(3, 4, 1e-2).validate().is_err());
        assert!(SpikeConfig::new(3, 0, 1e-2).validate().is_err());
        assert!(SpikeConfig::new(30, 1, 1e-2).validate().is_err());
        let mut c = SpikeConfig::new(3, 1, 1e-2);
        c.kappa_out = 0.0;
        assert!(c.validate().is_err());
    }
}
