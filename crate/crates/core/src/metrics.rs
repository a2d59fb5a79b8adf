//! Run metrics from the trace: false-positive rate, miss rate, delivery
//! ratio, control overhead.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::id::NodeId;
use crate::time::SimTime;
use crate::trace::{Outcome, RecordKind, TraceError, TraceRecord, TraceSink};

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub fpr: f64,
    pub miss_rate: f64,
    pub pdr: f64,
    pub overhead_pct: f64,
    pub convicted: BTreeSet<NodeId>,
    pub ground_truth_malicious: BTreeSet<NodeId>,
    pub honest: usize,
    pub originated: u64,
    pub delivered: u64,
    pub control_packets: u64,
    /// Hop transmissions of CBR packets.
    pub data_routed: u64,
    pub malicious_drops: u64,
}

fn id_list(s: &BTreeSet<NodeId>) -> String {
    s.iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// One `key = value` line per field, in declaration order.
impl fmt::Display for RunMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "fpr = {:.6}", self.fpr)?;
        writeln!(f, "miss_rate = {:.6}", self.miss_rate)?;
        writeln!(f, "pdr = {:.6}", self.pdr)?;
        writeln!(f, "overhead_pct = {:.6}", self.overhead_pct)?;
        writeln!(f, "convicted = {}", id_list(&self.convicted))?;
        writeln!(
            f,
            "ground_truth_malicious = {}",
            id_list(&self.ground_truth_malicious)
        )?;
        writeln!(f, "honest = {}", self.honest)?;
        writeln!(f, "originated = {}", self.originated)?;
        writeln!(f, "delivered = {}", self.delivered)?;
        writeln!(f, "control_packets = {}", self.control_packets)?;
        writeln!(f, "data_routed = {}", self.data_routed)?;
        writeln!(f, "malicious_drops = {}", self.malicious_drops)
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("trace has no roster records")]
    NoRoster,
    #[error("roster names node id 0")]
    BadRoster,
}

/// Streaming reducer; also usable as a [`TraceSink`].
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    roster: BTreeMap<u32, bool>,
    originated: u64,
    delivered: u64,
    control: u64,
    data_routed: u64,
    malicious_drops: u64,
    commits: Vec<(u32, u32)>,
    ended: bool,
    last_t: Option<SimTime>,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, r: &TraceRecord) {
        self.last_t = Some(r.t);
        match (r.kind, r.outcome) {
            (RecordKind::Roster, o) => {
                self.roster.insert(r.src, o == Outcome::Adversary);
            }
            (RecordKind::End, _) => self.ended = true,
            (RecordKind::Commit, Outcome::Committed) => self.commits.push((r.src, r.dst)),
            (RecordKind::Data, Outcome::Originated) => self.originated += 1,
            (RecordKind::Data, Outcome::Received) => self.delivered += 1,
            _ => {}
        }
        if r.outcome.is_transmission() {
            if r.kind.is_control() {
                self.control += 1;
            } else {
                self.data_routed += 1;
            }
            if r.outcome == Outcome::MaliciouslyDropped {
                self.malicious_drops += 1;
            }
        }
    }

    pub fn ended(&self) -> bool {
        self.ended
    }

    pub fn finish(&self) -> Result<RunMetrics, MetricsError> {
        if self.roster.is_empty() {
            return Err(MetricsError::NoRoster);
        }
        let mut truth = BTreeSet::new();
        let mut honest = 0usize;
        for (&id, &adv) in &self.roster {
            let n = NodeId::new(id).ok_or(MetricsError::BadRoster)?;
            if adv {
                truth.insert(n);
            } else {
                honest += 1;
            }
        }
        let honest_committer = |c: u32| self.roster.get(&c) == Some(&false);
        let convicted: BTreeSet<NodeId> = self
            .commits
            .iter()
            .filter(|(c, _)| honest_committer(*c))
            .filter_map(|&(_, s)| NodeId::new(s))
            .collect();
        let false_pos = convicted.difference(&truth).count();
        let missed = truth.difference(&convicted).count();
        Ok(RunMetrics {
            fpr: if honest == 0 {
                0.0
            } else {
                false_pos as f64 / honest as f64
            },
            miss_rate: if truth.is_empty() {
                0.0
            } else {
                missed as f64 / truth.len() as f64
            },
            pdr: if self.originated == 0 {
                1.0
            } else {
                self.delivered as f64 / self.originated as f64
            },
            overhead_pct: if self.data_routed == 0 {
                0.0
            } else {
                100.0 * self.control as f64 / self.data_routed as f64
            },
            convicted,
            ground_truth_malicious: truth,
            honest,
            originated: self.originated,
            delivered: self.delivered,
            control_packets: self.control,
            data_routed: self.data_routed,
            malicious_drops: self.malicious_drops,
        })
    }
}

impl TraceSink for MetricsAccumulator {
    fn record(&mut self, r: &TraceRecord) {
        self.observe(r);
    }
}

/// Metrics over a complete trace. A trace without its closing record is
/// reported as truncated at the last timestamp seen.
pub fn compute_metrics(records: &[TraceRecord]) -> Result<RunMetrics, MetricsError> {
    let mut acc = MetricsAccumulator::new();
    for r in records {
        acc.observe(r);
    }
    if !acc.ended {
        return Err(TraceError::MissingEnd {
            last_valid: acc.last_t.unwrap_or(SimTime::ZERO),
        }
        .into());
    }
    acc.finish()
}
