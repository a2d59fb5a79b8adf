//! Gray-hole behaviour: spurious route replies and Markov-modulated dropping.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::id::NodeId;
use crate::message::{Rrep, Rreq};
use crate::rng::SimRng;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Good,
    Bad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropDecision {
    Forward,
    Drop,
}

/// How far a spurious reply inflates the destination sequence number.
pub const SEQ_INFLATION: u32 = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayHoleState {
    pub phase: Phase,
    pub p_good_to_bad: f64,
    pub p_bad_to_good: f64,
    pub phase_tick: SimTime,
    pub min_rate: f64,
    pub max_rate: f64,
    /// Drop probability while Bad; redrawn on every Good -> Bad switch.
    pub current_drop_rate: f64,
    /// When set, only packets from or to these nodes are dropped.
    pub victim_set: Option<BTreeSet<NodeId>>,
    pub colluding_group: Option<BTreeSet<NodeId>>,
    /// Fellow adversaries; no spurious replies are sent to them.
    pub accomplices: BTreeSet<NodeId>,
    /// Highest sequence number advertised in a spurious reply, per target.
    pub advertised: BTreeMap<NodeId, u32>,
    /// Honest nodes the colluders falsely accuse.
    pub bad_mouth: BTreeSet<NodeId>,
    /// Stay Good around the neighbours' detection invocations.
    pub sync_evasion: bool,
}

impl GrayHoleState {
    /// A machine whose initial phase is drawn from the chain's stationary law.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        p_good_to_bad: f64,
        p_bad_to_good: f64,
        phase_tick: SimTime,
        min_rate: f64,
        max_rate: f64,
        rng: &mut SimRng,
    ) -> Self {
        let mut s = GrayHoleState {
            phase: Phase::Good,
            p_good_to_bad,
            p_bad_to_good,
            phase_tick,
            min_rate,
            max_rate,
            current_drop_rate: 0.0,
            victim_set: None,
            colluding_group: None,
            accomplices: BTreeSet::new(),
            advertised: BTreeMap::new(),
            bad_mouth: BTreeSet::new(),
            sync_evasion: false,
        };
        if rng.random::<f64>() < s.stationary_bad() {
            s.enter_bad(rng);
        }
        s
    }

    /// Long-run fraction of ticks spent Bad.
    pub fn stationary_bad(&self) -> f64 {
        let total = self.p_good_to_bad + self.p_bad_to_good;
        if total == 0.0 {
            if self.phase == Phase::Bad {
                1.0
            } else {
                0.0
            }
        } else {
            self.p_good_to_bad / total
        }
    }

    fn enter_bad(&mut self, rng: &mut SimRng) {
        self.phase = Phase::Bad;
        self.current_drop_rate = if self.max_rate > self.min_rate {
            rng.random_range(self.min_rate..=self.max_rate)
        } else {
            self.min_rate
        };
    }

    /// One step of the two-state chain.
    pub fn phase_transition(&mut self, rng: &mut SimRng) {
        match self.phase {
            Phase::Good => {
                if rng.random::<f64>() < self.p_good_to_bad {
                    self.enter_bad(rng);
                }
            }
            Phase::Bad => {
                if rng.random::<f64>() < self.p_bad_to_good {
                    self.phase = Phase::Good;
                }
            }
        }
    }

    pub fn effective_drop_rate(&self) -> f64 {
        match self.phase {
            Phase::Good => 0.0,
            Phase::Bad => self.current_drop_rate,
        }
    }

    /// Verdict for a data-class packet in transit from `src` to `dst`.
    pub fn drop_decision(&self, src: NodeId, dst: NodeId, rng: &mut SimRng) -> DropDecision {
        if self.phase == Phase::Good {
            return DropDecision::Forward;
        }
        if let Some(v) = &self.victim_set {
            if !v.contains(&src) && !v.contains(&dst) {
                return DropDecision::Forward;
            }
        }
        if rng.random::<f64>() < self.current_drop_rate {
            DropDecision::Drop
        } else {
            DropDecision::Forward
        }
    }

    pub fn colludes_with(&self, other: NodeId) -> bool {
        self.colluding_group
            .as_ref()
            .is_some_and(|g| g.contains(&other))
    }
}

/// The attractor: claim a one-hop route with a fresher sequence number than
/// anything the requester has seen, whether or not a route exists.
pub fn spurious_rrep(me: NodeId, rreq: &Rreq, lifetime: SimTime) -> Rrep {
    Rrep {
        origin: rreq.origin,
        target: rreq.target,
        hop_count: if rreq.target == me { 0 } else { 1 },
        target_seq: rreq.target_seq_known.saturating_add(SEQ_INFLATION),
        lifetime,
        probe: rreq.probe,
        faulty: None,
    }
}
