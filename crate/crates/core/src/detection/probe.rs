//! Probe rounds: the local IN/CN/SN check and the cooperative cross-check.

use std::collections::{BTreeMap, BTreeSet};

use crate::id::NodeId;
use crate::time::SimTime;

/// Probe deadline: round trip over `hops_via_suspect` hops plus slack.
pub fn probe_deadline(hops_via_suspect: u32, per_hop_latency: SimTime, slack: SimTime) -> SimTime {
    per_hop_latency.times(2 * u64::from(hops_via_suspect)) + slack
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundState {
    AwaitingRrep,
    ProbeSent,
    QueryingCn,
    Escalated,
    Cleared,
    Verdict,
}

impl RoundState {
    pub fn is_terminal(self) -> bool {
        matches!(self, RoundState::Cleared | RoundState::Verdict)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRound {
    pub initiator: NodeId,
    pub suspect: NodeId,
    pub cooperator: NodeId,
    pub nonce: u64,
    pub ttl_deadline: SimTime,
    pub state: RoundState,
    pub started: SimTime,
    /// Suspect was adjacent when the cooperative stage began.
    pub suspect_adjacent: bool,
    pub check: ProbeCheckTable,
}

impl ProbeRound {
    pub fn new(
        initiator: NodeId,
        suspect: NodeId,
        cooperator: NodeId,
        nonce: u64,
        now: SimTime,
    ) -> Self {
        ProbeRound {
            initiator,
            suspect,
            cooperator,
            nonce,
            ttl_deadline: now,
            state: RoundState::AwaitingRrep,
            started: now,
            suspect_adjacent: true,
            check: ProbeCheckTable::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalOutcome {
    Cleared,
    Escalate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NotConfirmedReason {
    AllProbesArrived,
    InsufficientWitnesses,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoopOutcome {
    /// The suspect misbehaved toward these notifiers.
    Malicious(BTreeSet<NodeId>),
    NotConfirmed(NotConfirmedReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeCheckEntry {
    pub node_id: NodeId,
    pub probe_status: bool,
}

/// Per-round record of which of the suspect's neighbours got a further
/// probe through. Probes may land before their sender's notification.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeCheckTable {
    notifiers: BTreeSet<NodeId>,
    arrived: BTreeSet<NodeId>,
}

impl ProbeCheckTable {
    pub fn add_notifier(&mut self, n: NodeId) {
        self.notifiers.insert(n);
    }

    pub fn mark_probe(&mut self, from: NodeId) {
        self.arrived.insert(from);
    }

    /// Rows for notifying nodes only, ascending.
    pub fn entries(&self) -> Vec<ProbeCheckEntry> {
        self.notifiers
            .iter()
            .map(|&n| ProbeCheckEntry {
                node_id: n,
                probe_status: self.arrived.contains(&n),
            })
            .collect()
    }

    /// A notifier none of whose probes arrived is a victim.
    pub fn verdict(&self) -> CoopOutcome {
        if self.notifiers.is_empty() {
            return CoopOutcome::NotConfirmed(NotConfirmedReason::InsufficientWitnesses);
        }
        let victims: BTreeSet<NodeId> = self
            .entries()
            .into_iter()
            .filter(|e| !e.probe_status)
            .map(|e| e.node_id)
            .collect();
        if victims.is_empty() {
            CoopOutcome::NotConfirmed(NotConfirmedReason::AllProbesArrived)
        } else {
            CoopOutcome::Malicious(victims)
        }
    }
}

/// Which of the three further probes were handed to the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParticipantState {
    AwaitingRrep,
    Probing { sent: u8, handed: u8 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Participation {
    pub initiator: NodeId,
    pub suspect: NodeId,
    pub state: ParticipantState,
}

/// Bookkeeping a node keeps for every round it plays a part in.
#[derive(Debug, Clone, Default)]
pub struct Rounds {
    pub active: BTreeMap<u64, ProbeRound>,
    pub by_suspect: BTreeMap<NodeId, u64>,
    pub participations: BTreeMap<u64, Participation>,
    /// Nonces of probes this node received as CN.
    pub received_probes: BTreeSet<u64>,
}

impl Rounds {
    pub fn insert(&mut self, round: ProbeRound) {
        self.by_suspect.insert(round.suspect, round.nonce);
        self.active.insert(round.nonce, round);
    }

    pub fn remove(&mut self, nonce: u64) -> Option<ProbeRound> {
        let r = self.active.remove(&nonce)?;
        self.by_suspect.remove(&r.suspect);
        Some(r)
    }

    pub fn has_round_for(&self, suspect: NodeId) -> bool {
        self.by_suspect.contains_key(&suspect)
    }
}
