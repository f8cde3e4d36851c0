use std::collections::HashMap;

use crate::crypto::KeyPair;
use crate::ledger::{ChainState, DhpToken};
use crate::protocol::bm_verify;
use crate::types::{HygienePolicy, Timestamp, TravelDocument};

use super::report::SimReport;
use super::NodeId;

/// A passport that reached a node late, or never (`delay_rounds: None`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LivenessViolation {
    pub dhp_id: u64,
    pub node: NodeId,
    pub delay_rounds: Option<u32>,
}

pub fn check_theta_liveness(report: &SimReport, theta: u32) -> Result<(), Vec<LivenessViolation>> {
    let delays: HashMap<(u64, NodeId), u32> = report
        .inclusion
        .iter()
        .map(|d| ((d.dhp_id, d.node), d.delay_rounds))
        .collect();
    let nodes = report.final_heights.len() as NodeId;
    let violations: Vec<LivenessViolation> = (0..report.submitted)
        .flat_map(|dhp_id| (0..nodes).map(move |node| (dhp_id, node)))
        .filter_map(|(dhp_id, node)| match delays.get(&(dhp_id, node)) {
            Some(&d) if d <= theta => None,
            found => Some(LivenessViolation {
                dhp_id,
                node,
                delay_rounds: found.copied(),
            }),
        })
        .collect();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// True iff all chains are identical and each probe verifies to the same
/// outcome on every node.
pub fn check_consistency(
    nodes: &[ChainState],
    probes: &[(DhpToken, TravelDocument)],
    verifier: Option<&KeyPair>,
    policy: &HygienePolicy,
    at: Timestamp,
) -> bool {
    let Some((first, rest)) = nodes.split_first() else {
        return true;
    };
    if rest.iter().any(|n| n.blocks() != first.blocks()) {
        return false;
    }
    let Some(bm) = verifier else {
        return true;
    };
    probes.iter().all(|(token, doc)| {
        let outcome = |n: &ChainState| bm_verify(bm, n, token, doc, policy, at).map(|(o, _)| o);
        let reference = outcome(first);
        reference.is_ok() && rest.iter().all(|n| outcome(n) == reference)
    })
}
