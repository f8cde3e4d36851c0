use std::fmt::Write as _;

use crate::types::Digest;

use super::{NodeId, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Submit,
    Propose,
    Deliver,
    Drop,
}

/// One entry of the run's event log, in processing order.
///
/// `Submit` carries the passport id in `dhp_ids`; `Propose`, `Deliver` and
/// `Drop` describe a block. `Deliver` is the arrival of a block message at
/// `node`, which may be buffered until its parent arrives.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SimEvent {
    pub at_round: u32,
    pub kind: EventKind,
    pub node: NodeId,
    pub block: Option<BlockRef>,
    pub dhp_ids: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockRef {
    pub hash: Digest,
    pub parent: Digest,
    pub height: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InclusionDelay {
    pub dhp_id: u64,
    pub node: NodeId,
    pub delay_rounds: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimReport {
    /// One entry per (passport, node) pair, sorted.
    pub inclusion: Vec<InclusionDelay>,
    pub submitted: u64,
    pub final_heights: Vec<u64>,
    pub final_tips: Vec<Digest>,
    pub consistent: bool,
    /// All nodes shared one tip at the end of every round.
    pub lockstep: bool,
    pub max_inclusion_delay: u32,
    /// Total rounds including quiescence.
    pub rounds_run: u32,
    pub events: Vec<SimEvent>,
}

impl SimReport {
    /// `dhp_id node_id delay_rounds` lines, then `consistency true|false`.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for d in &self.inclusion {
            let _ = writeln!(out, "{} {} {}", d.dhp_id, d.node, d.delay_rounds);
        }
        let _ = writeln!(out, "consistency {}", self.consistent);
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rounds run        {}", self.rounds_run);
        let _ = writeln!(out, "passports         {}", self.submitted);
        let _ = writeln!(out, "blocks            {}", self.final_heights.iter().max().unwrap_or(&0));
        let heights: Vec<String> = self.final_heights.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "final heights     {}", heights.join(" "));
        let _ = writeln!(out, "max inclusion     {} rounds", self.max_inclusion_delay);
        let _ = writeln!(out, "lockstep          {}", self.lockstep);
        let _ = writeln!(out, "consistency       {}", self.consistent);
        out
    }
}

/// Parses [`SimReport::export`] output back into delays and the verdict.
pub fn parse_report_export(text: &str) -> Result<(Vec<InclusionDelay>, bool), SimError> {
    let mut delays = Vec::new();
    let mut verdict = None;
    for (n, line) in text.lines().enumerate() {
        let bad = |reason: &str| SimError::BadExport {
            line: n + 1,
            reason: reason.to_owned(),
        };
        if verdict.is_some() {
            return Err(bad("content after consistency footer"));
        }
        let fields: Vec<&str> = line.split(' ').collect();
        match fields[..] {
            ["consistency", v] => {
                verdict = Some(match v {
                    "true" => true,
                    "false" => false,
                    _ => return Err(bad("verdict must be true or false")),
                })
            }
            [d, node, delay] => delays.push(InclusionDelay {
                dhp_id: d.parse().map_err(|_| bad("dhp id"))?,
                node: node.parse().map_err(|_| bad("node id"))?,
                delay_rounds: delay.parse().map_err(|_| bad("delay"))?,
            }),
            _ => return Err(bad("expected three fields")),
        }
    }
    let verdict = verdict.ok_or(SimError::BadExport {
        line: text.lines().count(),
        reason: "missing consistency footer".into(),
    })?;
    Ok((delays, verdict))
}
