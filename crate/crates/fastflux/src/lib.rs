//! Two-timescale linear reaction networks and their fast-reaction limit.
//!
//! A network carries slow edges with rate `κ` and fast edges with rate `κ/ε`.
//! The crate classifies nodes and edges by how the stationary mass scales in
//! `ε`, builds the reduced (effective) dynamics, simulates both systems and
//! evaluates the flux large-deviation cost of trajectories in either frame.
//!
//! Module map:
//!
//! | module        | contents                                                     |
//! |---------------|--------------------------------------------------------------|
//! | [`netmodel`]  | network type, file formats, rates, divergence, stationary law |
//! | [`decomp`]    | node and edge classes, fast components, damped cycles         |
//! | [`dynamics`]  | trajectories, ε-simulation, rescaling, effective system       |
//! | [`functionals`] | `s`, `𝒞`, Orlicz norm, `Ĩ₀`, `𝒥`, Fisher information, FIR |
//! | [`spikelab`]  | explicit spike family on a damped cycle                       |
//! | [`harness`]   | ε-sweeps, boundedness tables, recovery families, summaries    |

pub mod decomp;
pub mod dynamics;
pub mod error;
pub mod extreal;
pub mod functionals;
pub mod harness;
pub mod linalg;
pub mod netmodel;
pub mod spikelab;
pub mod tolerance;

pub use error::{Error, Result};
pub use extreal::ExtReal;
pub use tolerance::Tolerances;
