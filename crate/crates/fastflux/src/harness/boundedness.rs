use serde::{Deserialize, Serialize};

use crate::decomp::{Decomposition, EdgeTag};
use crate::dynamics::Trajectory;
use crate::error::Result;
use crate::functionals::{orlicz_norm, MeasureOnTime};

/// Largest allowed ratio between consecutive entries of a column.
pub const GROWTH_RATIO: f64 = 1.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundednessRow {
    pub eps: f64,
    /// `sup_t max_{x∈V0} u_x`
    pub sup_u_v0: f64,
    pub orlicz_slow: f64,
    pub orlicz_fcyc: f64,
    pub l1_damp: f64,
    /// `Σ_{y∈V1} ∫ u_y dt`
    pub l1_u_v1: f64,
    /// `ε · sup_t max_{y∈V1} u_y`
    pub eps_u_v1: f64,
}

impl BoundednessRow {
    pub const COLUMNS: [&'static str; 6] = ["sup_u_v0", "orlicz_slow", "orlicz_fcyc", "l1_damp", "l1_u_v1", "eps_u_v1"];

    fn values(&self) -> [f64; 6] {
        [self.sup_u_v0, self.orlicz_slow, self.orlicz_fcyc, self.l1_damp, self.l1_u_v1, self.eps_u_v1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundednessTable {
    pub rows: Vec<BoundednessRow>,
    /// Columns where some entry exceeds `1.1 ×` its predecessor.
    pub growing: Vec<String>,
    /// `ε‖u_{V1}‖∞` ends below its first value (or is identically zero).
    pub eps_u_v1_vanishes: bool,
}

impl BoundednessTable {
    pub fn holds(&self) -> bool {
        self.growing.is_empty() && self.eps_u_v1_vanishes
    }
}

/// Tabulate the quantities that stay bounded along a family of rescaled
/// trajectories, given in order of decreasing ε.
pub fn boundedness_diagnostics(family: &[&Trajectory], d: &Decomposition) -> Result<BoundednessTable> {
    let mut rows = Vec::with_capacity(family.len());
    for traj in family {
        traj.expect_frame("rescaled")?;
        let eps = traj.frame.eps().expect("rescaled frame carries ε");
        let sup_over = |nodes: &[usize]| {
            traj.density.iter().flat_map(|u| nodes.iter().map(move |&x| u[x])).fold(0.0, f64::max)
        };
        let v0: Vec<usize> = (0..traj.node_count()).filter(|&x| d.node_class.tags[x].is_v0()).collect();
        let v1 = d.v1();
        let series_of = |tag: EdgeTag| -> Vec<Vec<f64>> {
            d.edge_class.edges_with(tag).into_iter().map(|r| traj.edge_series(r)).collect()
        };
        rows.push(BoundednessRow {
            eps,
            sup_u_v0: sup_over(&v0),
            orlicz_slow: orlicz_norm(&traj.grid, &series_of(EdgeTag::Slow)),
            orlicz_fcyc: orlicz_norm(&traj.grid, &series_of(EdgeTag::FastCycle)),
            l1_damp: d.edge_class.damped().into_iter().map(|r| MeasureOnTime::of_edge(traj, r).total_variation()).sum(),
            l1_u_v1: v1.iter().map(|&y| MeasureOnTime::of_node(traj, y).total_variation()).sum(),
            eps_u_v1: eps * sup_over(&v1),
        });
    }
    let mut growing = Vec::new();
    for (i, name) in BoundednessRow::COLUMNS.iter().enumerate() {
        if rows.windows(2).any(|w| w[1].values()[i] > GROWTH_RATIO * w[0].values()[i] + 1e-12) {
            growing.push(name.to_string());
        }
    }
    let eps_u_v1_vanishes = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if rows.len() > 1 => b.eps_u_v1 < a.eps_u_v1 || a.eps_u_v1 == 0.0,
        _ => true,
    };
    Ok(BoundednessTable { rows, growing, eps_u_v1_vanishes })
}
