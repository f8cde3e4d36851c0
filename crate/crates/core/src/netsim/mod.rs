//! Deterministic round-based simulation of the consortium.
//!
//! Authorities propose in their scheduled turn, blocks travel to every other
//! node under a configurable delay model, and the run ends with a quiescence
//! phase that drains in-flight messages and mempools. A run is a pure
//! function of its [`SimConfig`].
//!
//! Round `r` proceeds in three phases:
//!
//! 1. every authority's facilities submit `submission_rate` passports, which
//!    reach every authority's mempool immediately;
//! 2. each authority scheduled for its own tip + 1 proposes once, applies the
//!    block locally and broadcasts it;
//! 3. messages due at round `r` are delivered in a fixed order.
//!
//! A passport's inclusion delay on a node is the number of rounds from its
//! submission round through the round the node applied it, inclusive.

mod checks;
mod config;
mod report;
mod sim;

pub use checks::{check_consistency, check_theta_liveness, LivenessViolation};
pub use config::{DelayModel, PartitionInterval, SimConfig};
pub use report::{parse_report_export, BlockRef, EventKind, InclusionDelay, SimEvent, SimReport};
pub use sim::{round_time, run_simulation, IssuedDhp, SimRun, Simulation, GENESIS_TIME, ROUND_SECS};

use thiserror::Error;

/// Index of a simulated node: authorities first, then members.
pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("no quiescence after {0} rounds")]
    NoQuiescence(u32),
    #[error("report export line {line}: {reason}")]
    BadExport { line: usize, reason: String },
}
