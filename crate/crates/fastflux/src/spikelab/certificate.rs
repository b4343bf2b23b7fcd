use serde::{Deserialize, Serialize};

use crate::decomp::{Decomposition, EdgeTag};
use crate::dynamics::Trajectory;
use crate::error::Result;
use crate::functionals::{limit_continuity_residual, orlicz_norm};
use crate::netmodel::Network;
use crate::tolerance::Tolerances;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CertificateStatus {
    /// The flux is dominated by the sum of `upstream` slow fluxes (with
    /// multiplicity), whose Orlicz norm is `bound`.
    Certified { upstream: Vec<String>, bound: f64 },
    Inapplicable { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateEntry {
    pub edge: String,
    pub status: CertificateStatus,
    pub atom_mass: f64,
    pub orlicz_norm: f64,
    /// Pointwise `j_r ≤ Σ upstream` on the grid.
    pub dominated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub entries: Vec<CertificateEntry>,
    pub continuity_residual: f64,
    pub continuity_tolerance: f64,
}

impl CertificateReport {
    pub fn continuity_ok(&self) -> bool {
        self.continuity_residual <= self.continuity_tolerance
    }

    /// Continuity holds and every certified edge is atom free and dominated.
    pub fn holds(&self) -> bool {
        self.continuity_ok()
            && self.entries.iter().all(|e| match e.status {
                CertificateStatus::Certified { .. } => e.atom_mass == 0.0 && e.dominated,
                CertificateStatus::Inapplicable { .. } => true,
            })
    }
}

/// Collect the slow edges reached by substituting the `V1` balance backwards
/// from `x`. `path` holds the damped edges on the current chain.
fn upstream_slow(net: &Network, d: &Decomposition, x: usize, path: &mut Vec<usize>, out: &mut Vec<usize>) -> std::result::Result<(), String> {
    for &e in net.in_edges(x) {
        match d.edge_class.tags[e] {
            EdgeTag::Slow => out.push(e),
            EdgeTag::DampedCycle | EdgeTag::DampedNoCycle => {
                if path.contains(&e) {
                    return Err(format!("damped edge {} reappears upstream", net.edge_label(e)));
                }
                path.push(e);
                upstream_slow(net, d, net.edge(e).src, path, out)?;
                path.pop();
            }
            EdgeTag::FastCycle => {
                return Err(format!("fast-cycle edge {} enters a V1 node", net.edge_label(e)));
            }
        }
    }
    Ok(())
}

/// For each damped edge of a limit trajectory, bound its flux by the slow
/// fluxes feeding it through the `V1` balance, and check it carries no atoms.
/// Edges on damped cycles, or fed by one, are reported as inapplicable.
pub fn no_spike_certificate(net: &Network, traj: &Trajectory, d: &Decomposition, tol: &Tolerances) -> Result<CertificateReport> {
    traj.expect_frame("limit")?;
    let (residual, l1) = limit_continuity_residual(net, traj, d)?;
    let mut entries = Vec::new();
    for r in d.edge_class.damped() {
        let series = traj.edge_series(r);
        let atom_mass: f64 = traj.atoms.iter().map(|a| a.flux[r].abs()).sum();
        let own = orlicz_norm(&traj.grid, std::slice::from_ref(&series));
        let (status, dominated) = if d.edge_class.tags[r] == EdgeTag::DampedCycle {
            (CertificateStatus::Inapplicable { reason: "edge lies on a damped cycle".into() }, false)
        } else {
            let mut path = vec![r];
            let mut slow = Vec::new();
            match upstream_slow(net, d, net.edge(r).src, &mut path, &mut slow) {
                Err(reason) => (CertificateStatus::Inapplicable { reason }, false),
                Ok(()) => {
                    let sum: Vec<f64> = (0..traj.grid.len())
                        .map(|k| slow.iter().map(|&e| traj.flux[k][e]).sum())
                        .collect();
                    let dominated = series
                        .iter()
                        .zip(&sum)
                        .all(|(j, s)| *j <= s + tol.comparison * (1.0 + s.abs()));
                    let bound = orlicz_norm(&traj.grid, &[sum]);
                    let upstream = slow.iter().map(|&e| net.edge_label(e)).collect();
                    (CertificateStatus::Certified { upstream, bound }, dominated)
                }
            }
        };
        entries.push(CertificateEntry {
            edge: net.edge_label(r),
            status,
            atom_mass,
            orlicz_norm: own,
            dominated,
        });
    }
    Ok(CertificateReport {
        entries,
        continuity_residual: residual,
        continuity_tolerance: tol.continuity * (1.0 + l1),
    })
}
