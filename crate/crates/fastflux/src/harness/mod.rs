//! ε-sweeps and Γ-convergence checks.
//!
//! [`run_study`] simulates the exact ε-dynamics for each ε of a sweep,
//! compares them with the effective limit dynamics through the metric bundle
//! of [`metrics`], and collects boundedness, FIR, lower-bound and (optionally)
//! recovery diagnostics into a [`ConvergenceReport`].

pub mod boundedness;
pub mod lower_bound;
pub mod metrics;
mod mollify;
pub mod recovery;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use boundedness::{boundedness_diagnostics, BoundednessRow, BoundednessTable};
pub use lower_bound::{lower_bound_probe, MarginRow, MarginTable};
pub use metrics::{trajectory_errors, TrajectoryErrors};
pub use recovery::{build_recovery, RecoveryConfig, RecoveryFamily, RoutingChain, RECOVERY_RESIDUAL};

use crate::decomp::{decompose, Decomposition, EdgeTag};
use crate::dynamics::{build_effective, rescale, simulate_effective, simulate_eps, well_prepare, write_trajectory, Trajectory};
use crate::error::{Error, Result};
use crate::extreal::ExtReal;
use crate::functionals::{eval_j_eps, eval_j_limit, fir_check, orlicz_norm, MeasureOnTime};
use crate::netmodel::{load_network, stationary_distribution, Network};
use crate::tolerance::Tolerances;

/// Slack allowed on FIR margins of exact flows.
pub const FIR_SLACK: f64 = 1e-6;
/// Errors below this count as zero when checking for a decreasing trend.
pub const ZERO_ERROR: f64 = 1e-9;
/// Final recovery gap required by the `recovery_gap` check.
pub const RECOVERY_GAP: f64 = 1e-3;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDatum {
    /// `u ≡ 1`.
    #[default]
    Stationary,
    /// Densities `u_x` by node name; missing nodes get `1`. With `prepare`
    /// the datum is first projected onto well-prepared data.
    Density {
        u: BTreeMap<String, f64>,
        #[serde(default = "yes")]
        prepare: bool,
    },
}

fn yes() -> bool {
    true
}

impl InitialDatum {
    pub fn resolve(&self, net: &Network) -> Result<(Vec<f64>, bool)> {
        match self {
            InitialDatum::Stationary => Ok((vec![1.0; net.node_count()], true)),
            InitialDatum::Density { u, prepare } => {
                let mut out = vec![1.0; net.node_count()];
                for (name, v) in u {
                    let x = net.node_index(name).ok_or_else(|| Error::UnknownNode(name.clone()))?;
                    if !v.is_finite() || *v < 0.0 {
                        return Err(Error::NonFinite(format!("initial density at {name}")));
                    }
                    out[x] = *v;
                }
                Ok((out, *prepare))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub network: Option<PathBuf>,
    /// Strictly decreasing and positive.
    pub eps: Vec<f64>,
    pub horizon: f64,
    pub steps: usize,
    #[serde(default)]
    pub initial: InitialDatum,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub recovery: Option<RecoveryConfig>,
}

impl StudyConfig {
    pub fn new(eps: Vec<f64>, horizon: f64, steps: usize) -> Self {
        StudyConfig {
            network: None,
            eps,
            horizon,
            steps,
            initial: InitialDatum::Stationary,
            tolerances: Tolerances::default(),
            output: None,
            recovery: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: StudyConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() || self.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::Config("ε list must be nonempty and positive".into()));
        }
        if self.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("ε list must be strictly decreasing".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) || self.steps == 0 {
            return Err(Error::Config("study needs T > 0 and at least one step".into()));
        }
        Ok(())
    }
}

/// One line of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub eps: f64,
    pub err_v0slow_sup: f64,
    pub err_comp_sup: f64,
    pub err_v1_weak: f64,
    pub err_jdamp_weak: f64,
    pub orlicz_jslow: f64,
    pub orlicz_jfcyc: f64,
    pub l1_jdamp: f64,
    pub fir_margin: f64,
    pub cost_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    #[serde(flatten)]
    pub summary: SummaryRow,
    pub err_jslow_weak: f64,
    pub err_jfcyc_weak: f64,
    pub cost: ExtReal,
}

impl ConvergenceRow {
    fn error_columns(&self) -> [(&'static str, f64); 6] {
        let s = &self.summary;
        [
            ("err_v0slow_sup", s.err_v0slow_sup),
            ("err_comp_sup", s.err_comp_sup),
            ("err_v1_weak", s.err_v1_weak),
            ("err_jdamp_weak", s.err_jdamp_weak),
            ("err_jslow_weak", self.err_jslow_weak),
            ("err_jfcyc_weak", self.err_jfcyc_weak),
        ]
    }
}

/// Log-log slope of an error column against ε.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedOrder {
    pub column: String,
    /// Least squares over all positive entries.
    pub all: Option<f64>,
    /// Through the two smallest ε.
    pub asymptotic: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub eps: f64,
    pub delta: f64,
    pub cost: ExtReal,
    pub gap: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub hub: String,
    pub hub_fallback: bool,
    pub chains: Vec<RoutingChain>,
    pub walk: Vec<String>,
    pub limit_cost: ExtReal,
    pub rows: Vec<RecoveryRow>,
    pub dropped: Vec<recovery::DroppedEps>,
    pub lower_bound: MarginTable,
}

impl RecoverySummary {
    pub fn from_family(fam: &RecoveryFamily) -> Self {
        let rows = fam
            .points
            .iter()
            .zip(fam.gaps())
            .map(|(p, gap)| RecoveryRow { eps: p.eps, delta: p.delta, cost: p.cost(), gap, residual: p.residual })
            .collect();
        let pts: Vec<(f64, ExtReal)> = fam.points.iter().map(|p| (p.eps, p.cost())).collect();
        RecoverySummary {
            hub: fam.hub.clone(),
            hub_fallback: fam.hub_fallback,
            chains: fam.chains.clone(),
            walk: fam.walk.clone(),
            limit_cost: fam.limit.total,
            rows,
            dropped: fam.dropped.clone(),
            lower_bound: lower_bound_probe(&pts, fam.limit.total.to_f64()),
        }
    }

    /// Gaps strictly decrease over the kept ε and end below [`RECOVERY_GAP`].
    pub fn gap_converges(&self) -> bool {
        let gaps: Vec<f64> = self.rows.iter().map(|r| r.gap).collect();
        !gaps.is_empty() && gaps.windows(2).all(|w| w[1] < w[0]) && gaps[gaps.len() - 1] < RECOVERY_GAP
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub eps: Vec<f64>,
    pub horizon: f64,
    pub steps: usize,
    /// The initial datum after well-preparation, by node.
    pub initial: BTreeMap<String, f64>,
    pub limit_cost: ExtReal,
    pub rows: Vec<ConvergenceRow>,
    pub orders: Vec<FittedOrder>,
    pub boundedness: BoundednessTable,
    pub lower_bound: MarginTable,
    pub recovery: Option<RecoverySummary>,
    pub checks: Vec<Check>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        self.rows.iter().map(|r| r.summary.clone()).collect()
    }
}

/// A finished study together with the trajectories it compared.
#[derive(Clone, Debug)]
pub struct Study {
    pub network: Network,
    pub decomposition: Decomposition,
    pub limit: Trajectory,
    pub rescaled: Vec<Trajectory>,
    pub report: ConvergenceReport,
}

/// Least-squares slope of `log y` against `log x` over positive `y`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.1 > 0.0).map(|p| (p.0.ln(), p.1.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

struct EpsResult {
    rescaled: Trajectory,
    row: ConvergenceRow,
}

fn study_one(net: &Network, d: &Decomposition, cfg: &StudyConfig, u0: &[f64], limit: &Trajectory, limit_cost: f64, eps: f64) -> Result<EpsResult> {
    let pi = stationary_distribution(net, eps)?;
    let rho0: Vec<f64> = u0.iter().zip(&pi.pi).map(|(u, p)| u * p).collect();
    let raw = simulate_eps(net, eps, &rho0, cfg.horizon, cfg.steps)?;
    let resc = rescale(net, &raw, &pi, d)?;
    let err = trajectory_errors(&resc, limit, d, &pi)?;
    let report = eval_j_eps(net, &resc, d, &pi, &cfg.tolerances)?;
    let fir = fir_check(net, &resc, &pi, &report)?;
    let series = |tag: EdgeTag| -> Vec<Vec<f64>> { d.edge_class.edges_with(tag).into_iter().map(|r| resc.edge_series(r)).collect() };
    let summary = SummaryRow {
        eps,
        err_v0slow_sup: err.v0slow_sup,
        err_comp_sup: err.comp_sup,
        err_v1_weak: err.v1_weak,
        err_jdamp_weak: err.jdamp_weak,
        orlicz_jslow: orlicz_norm(&resc.grid, &series(EdgeTag::Slow)),
        orlicz_jfcyc: orlicz_norm(&resc.grid, &series(EdgeTag::FastCycle)),
        l1_jdamp: d.edge_class.damped().into_iter().map(|r| MeasureOnTime::of_edge(&resc, r).total_variation()).sum(),
        fir_margin: fir.to_f64(),
        cost_gap: (report.total.to_f64() - limit_cost).abs(),
    };
    let row = ConvergenceRow { summary, err_jslow_weak: err.jslow_weak, err_jfcyc_weak: err.jfcyc_weak, cost: report.total };
    Ok(EpsResult { rescaled: resc, row })
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.into(), passed, detail }
}

/// Run the study on the network named in `cfg.network`.
pub fn convergence_study(cfg: &StudyConfig) -> Result<ConvergenceReport> {
    let path = cfg.network.as_ref().ok_or_else(|| Error::Config("study config names no network".into()))?;
    Ok(run_study(&load_network(path)?, cfg)?.report)
}

/// Simulate every ε of the sweep, compare against the effective dynamics and
/// evaluate the checks. Per-ε work runs on scoped threads; results are
/// assembled in sweep order, so the report does not depend on scheduling.
pub fn run_study(net: &Network, cfg: &StudyConfig) -> Result<Study> {
    cfg.validate()?;
    let tol = &cfg.tolerances;
    let d = decompose(net, tol)?;
    let sys = build_effective(net, &d)?;
    let (raw_u0, prepare) = cfg.initial.resolve(net)?;
    let u0 = if prepare { well_prepare(&raw_u0, &d, &sys) } else { raw_u0 };
    let limit = simulate_effective(net, &d, &sys, &well_prepare(&u0, &d, &sys), cfg.horizon, cfg.steps)?;
    let limit_report = eval_j_limit(net, &limit, &d, tol)?;
    let limit_cost = limit_report.total.to_f64();

    let results: Vec<Result<EpsResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .eps
            .iter()
            .map(|&eps| {
                let (d, u0, limit) = (&d, &u0, &limit);
                s.spawn(move || study_one(net, d, cfg, u0, limit, limit_cost, eps))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("study worker panicked")).collect()
    });
    let mut rows = Vec::new();
    let mut rescaled = Vec::new();
    for r in results {
        let r = r?;
        rows.push(r.row);
        rescaled.push(r.rescaled);
    }

    let columns: Vec<&'static str> = rows[0].error_columns().iter().map(|c| c.0).collect();
    let orders = columns
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.summary.eps, r.error_columns()[i].1)).collect();
            let tail = if pts.len() >= 2 { loglog_slope(&pts[pts.len() - 2..]) } else { None };
            FittedOrder { column: name.to_string(), all: loglog_slope(&pts), asymptotic: tail }
        })
        .collect();
    let refs: Vec<&Trajectory> = rescaled.iter().collect();
    let boundedness = boundedness_diagnostics(&refs, &d)?;
    let pts: Vec<(f64, ExtReal)> = rows.iter().map(|r| (r.summary.eps, r.cost)).collect();
    let lower_bound = lower_bound_probe(&pts, limit_cost);
    let recovery = match &cfg.recovery {
        Some(rc) => Some(RecoverySummary::from_family(&build_recovery(net, &d, &limit, rc, tol)?)),
        None => None,
    };

    let mut checks = Vec::new();
    let finite = rows.iter().all(|r| {
        r.error_columns().iter().all(|c| c.1.is_finite() && c.1 >= 0.0)
            && [r.summary.orlicz_jslow, r.summary.orlicz_jfcyc, r.summary.l1_jdamp, r.summary.fir_margin, r.summary.cost_gap]
                .iter()
                .all(|v| v.is_finite())
    });
    checks.push(check("finite_entries", finite, "all table entries finite, errors nonnegative".into()));
    for (name, pick) in [("err_v0slow_sup", 0usize), ("err_comp_sup", 1)] {
        let col: Vec<f64> = rows.iter().map(|r| r.error_columns()[pick].1).collect();
        let ok = col.iter().all(|e| *e <= ZERO_ERROR) || col.windows(2).all(|w| w[1] < w[0]);
        checks.push(check(&format!("{name}_decreasing"), ok, format!("{col:?}")));
    }
    let worst_fir = rows.iter().map(|r| r.summary.fir_margin).fold(f64::INFINITY, f64::min);
    checks.push(check("fir_margin", worst_fir >= -FIR_SLACK, format!("smallest margin {worst_fir:e}")));
    checks.push(check(
        "boundedness",
        boundedness.holds(),
        format!("growing columns {:?}, ε‖u_V1‖ vanishes: {}", boundedness.growing, boundedness.eps_u_v1_vanishes),
    ));
    let smallest = |t: &MarginTable| t.rows.iter().map(|r| r.margin.to_f64()).fold(f64::INFINITY, f64::min);
    checks.push(check("lower_bound", lower_bound.holds(), format!("smallest margin {:e}", smallest(&lower_bound))));
    if let Some(rec) = &recovery {
        let gaps: Vec<f64> = rec.rows.iter().map(|r| r.gap).collect();
        checks.push(check("recovery_gap", rec.gap_converges(), format!("gaps {gaps:?}, dropped {}", rec.dropped.len())));
        checks.push(check(
            "recovery_lower_bound",
            rec.lower_bound.holds(),
            format!("smallest margin {:e}", smallest(&rec.lower_bound)),
        ));
    }

    let report = ConvergenceReport {
        eps: cfg.eps.clone(),
        horizon: cfg.horizon,
        steps: cfg.steps,
        initial: net.nodes().iter().map(|n| n.to_string()).zip(u0.iter().copied()).collect(),
        limit_cost: limit_report.total,
        rows,
        orders,
        boundedness,
        lower_bound,
        recovery,
        checks,
    };
    Ok(Study { network: net.clone(), decomposition: d, limit, rescaled, report })
}

/// File name of the rescaled trajectory for one ε.
pub fn trajectory_file(eps: f64) -> String {
    format!("trajectory_eps_{eps:e}.csv")
}

/// Write `report.json`, `summary.csv`, `limit.csv` and one trajectory CSV per ε.
pub fn write_study(study: &Study, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&study.report)?)?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    for row in study.report.summary() {
        w.serialize(row)?;
    }
    w.flush()?;
    write_trajectory(&study.network, &study.limit, dir.join("limit.csv"))?;
    for traj in &study.rescaled {
        let eps = traj.frame.eps().expect("rescaled frame carries ε");
        write_trajectory(&study.network, traj, dir.join(trajectory_file(eps)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1e-1, 1e-2, 1e-3].iter().map(|&e: &f64| (e, 3.0 * e.powf(1.5))).collect();
        assert!((loglog_slope(&pts).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(loglog_slope(&pts[..1]), None);
        assert_eq!(loglog_slope(&[(1e-1, 0.0), (1e-2, 0.0)]), None);
    }

    #[test]
    fn config_rejects_unsorted_eps() {
        let text = r#"{"eps": [1e-2, 1e-1], "horizon": 1.0, "steps": 10}"#;
        assert!(matches!(StudyConfig::from_json(text), Err(Error::Config(_))));
        let text = r#"{"eps": [1e-1, 1e-2], "horizon": 1.0, "steps": 10,
                       "initial": {"kind": "density", "u": {"4": 0.5}}}"#;
        let cfg = StudyConfig::from_json(text).unwrap();
        assert!(matches!(cfg.initial, InitialDatum::Density { prepare: true, .. }));
    }
}
