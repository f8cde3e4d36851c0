use serde::{Deserialize, Serialize};

use super::{NodeId, SimError};

/// Nodes in `isolated` cannot exchange messages with the rest of the network
/// during rounds `start..end`; traffic across the cut is held until `end`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionInterval {
    pub start: u32,
    pub end: u32,
    pub isolated: Vec<NodeId>,
}

impl PartitionInterval {
    fn separates(&self, a: NodeId, b: NodeId, round: u32) -> bool {
        (self.start..self.end).contains(&round)
            && (self.isolated.contains(&a) != self.isolated.contains(&b))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayModel {
    /// Delivered in the round it was sent.
    Zero,
    /// Each message independently delayed by 0..=max_rounds.
    UniformBounded { max_rounds: u32 },
    /// No delay, except across an active partition.
    Partition { intervals: Vec<PartitionInterval> },
}

impl DelayModel {
    /// Earliest round a message sent at `sent` with `base` delay may arrive.
    pub(crate) fn delivery_round(&self, from: NodeId, to: NodeId, sent: u32, base: u32) -> u32 {
        let mut at = sent + base;
        if let DelayModel::Partition { intervals } = self {
            // A held message may run into a later interval; keep pushing.
            while let Some(iv) = intervals.iter().find(|iv| iv.separates(from, to, at)) {
                at = iv.end;
            }
        }
        at
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub rng_seed: u64,
    pub num_hsa: u8,
    pub num_bm: u8,
    pub rounds: u32,
    /// Passports submitted per round in each authority's constituency.
    pub submission_rate: u32,
    pub delay_model: DelayModel,
    pub theta: u32,
}

impl SimConfig {
    pub fn new(rng_seed: u64, num_hsa: u8, num_bm: u8, rounds: u32) -> Self {
        Self {
            rng_seed,
            num_hsa,
            num_bm,
            rounds,
            submission_rate: 1,
            delay_model: DelayModel::Zero,
            theta: 3 + num_hsa as u32,
        }
    }

    pub fn with_delay(mut self, delay_model: DelayModel) -> Self {
        self.delay_model = delay_model;
        self
    }

    pub fn with_rate(mut self, submission_rate: u32) -> Self {
        self.submission_rate = submission_rate;
        self
    }

    pub fn with_theta(mut self, theta: u32) -> Self {
        self.theta = theta;
        self
    }

    pub fn num_nodes(&self) -> u32 {
        self.num_hsa as u32 + self.num_bm as u32
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig =
            toml::from_str(text).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_owned()));
        if self.num_hsa == 0 {
            return bad("num_hsa must be at least 1");
        }
        if self.rounds == 0 {
            return bad("rounds must be at least 1");
        }
        if self.theta == 0 {
            return bad("theta must be at least 1");
        }
        if let DelayModel::Partition { intervals } = &self.delay_model {
            for iv in intervals {
                if iv.start >= iv.end {
                    return bad("partition interval must have start < end");
                }
                if iv.isolated.iter().any(|&n| n >= self.num_nodes()) {
                    return bad("partition names an unknown node");
                }
            }
        }
        Ok(())
    }
}
