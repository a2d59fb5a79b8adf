//! Data Routing Information table: per-neighbour forwarding history.

use std::collections::BTreeMap;

use crate::id::NodeId;
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub struct DriEntry {
    pub neighbor: NodeId,
    /// Owner forwarded a data packet that came from this neighbour.
    pub from_bit: bool,
    /// Owner forwarded a data packet to this neighbour.
    pub through_bit: bool,
    pub rts_count: u64,
    pub cts_count: u64,
    /// Set by a probe confirmation; expires after the clearance validity.
    pub check_bit: bool,
    pub checked_at: Option<SimTime>,
    pub last_interaction: Option<SimTime>,
    /// Currently within radio range.
    pub present: bool,
    pub last_seen: SimTime,
}

impl DriEntry {
    pub fn new(neighbor: NodeId, now: SimTime) -> Self {
        DriEntry {
            neighbor,
            from_bit: false,
            through_bit: false,
            rts_count: 0,
            cts_count: 0,
            check_bit: false,
            checked_at: None,
            last_interaction: None,
            present: true,
            last_seen: now,
        }
    }

    fn score(&self) -> u8 {
        self.from_bit as u8 + self.through_bit as u8
    }

    /// The RTS/CTS column as a quotient; `None` before any grant.
    pub fn rts_cts_ratio(&self) -> Option<f64> {
        (self.cts_count > 0).then(|| self.rts_count as f64 / self.cts_count as f64)
    }
}

#[derive(Debug, Clone)]
pub struct DriTable {
    pub owner: NodeId,
    pub entries: BTreeMap<NodeId, DriEntry>,
    pub epoch_started: SimTime,
}

impl DriTable {
    pub fn new(owner: NodeId) -> Self {
        DriTable {
            owner,
            entries: BTreeMap::new(),
            epoch_started: SimTime::ZERO,
        }
    }

    fn entry(&mut self, n: NodeId, now: SimTime) -> Option<&mut DriEntry> {
        if n == self.owner {
            return None;
        }
        Some(
            self.entries
                .entry(n)
                .or_insert_with(|| DriEntry::new(n, now)),
        )
    }

    pub fn get(&self, n: NodeId) -> Option<&DriEntry> {
        self.entries.get(&n)
    }

    /// Owner forwarded a data packet received from `prev` (if any) to `next`.
    pub fn observe_forward(&mut self, prev: Option<NodeId>, next: NodeId, now: SimTime) {
        if let Some(p) = prev {
            if let Some(e) = self.entry(p, now) {
                e.from_bit = true;
                e.last_interaction = Some(now);
            }
        }
        if let Some(e) = self.entry(next, now) {
            e.through_bit = true;
            e.last_interaction = Some(now);
        }
    }

    /// One unicast attempt toward `n`; `granted` when the link accepted it.
    pub fn note_attempt(&mut self, n: NodeId, granted: bool, now: SimTime) {
        if let Some(e) = self.entry(n, now) {
            e.rts_count += 1;
            if granted {
                e.cts_count += 1;
            }
        }
    }

    pub fn set_check_bit(&mut self, n: NodeId, now: SimTime) {
        if let Some(e) = self.entry(n, now) {
            e.check_bit = true;
            e.checked_at = Some(now);
        }
    }

    /// Syncs presence with the current neighbour set. Entries for neighbours
    /// gone longer than `forget_after` are dropped, which resets all their bits.
    pub fn refresh_presence(&mut self, neighbors: &[NodeId], now: SimTime, forget_after: SimTime) {
        for e in self.entries.values_mut() {
            e.present = false;
        }
        for &n in neighbors {
            if let Some(e) = self.entry(n, now) {
                e.present = true;
                e.last_seen = now;
            }
        }
        self.entries
            .retain(|_, e| e.present || now.saturating_sub(e.last_seen) <= forget_after);
    }

    /// Clearances older than `validity` lapse so the neighbour can be re-probed.
    pub fn expire_checks(&mut self, now: SimTime, validity: SimTime) {
        for e in self.entries.values_mut() {
            if e.check_bit
                && e.checked_at
                    .is_some_and(|c| now.saturating_sub(c) >= validity)
            {
                e.check_bit = false;
                e.checked_at = None;
            }
        }
    }

    /// Opens a new observation window: From/Through start over.
    pub fn start_epoch(&mut self, now: SimTime) {
        self.epoch_started = now;
        for e in self.entries.values_mut() {
            e.from_bit = false;
            e.through_bit = false;
        }
    }

    /// Present neighbours with no forwarding interaction and no standing
    /// clearance, ascending. Empty until `threshold` has elapsed in the epoch.
    pub fn scan_suspects(&self, threshold: SimTime, now: SimTime) -> Vec<NodeId> {
        if now.saturating_sub(self.epoch_started) < threshold {
            return vec![];
        }
        self.entries
            .values()
            .filter(|e| e.present && !e.from_bit && !e.through_bit && !e.check_bit)
            .map(|e| e.neighbor)
            .collect()
    }

    /// Most reliable present neighbour other than `suspect`: most of
    /// From/Through set, then most recent interaction, then lowest id.
    pub fn select_cooperative_node(&self, suspect: NodeId) -> Option<NodeId> {
        self.select_cooperative_node_where(suspect, |_| true)
    }

    pub fn select_cooperative_node_where(
        &self,
        suspect: NodeId,
        mut allowed: impl FnMut(NodeId) -> bool,
    ) -> Option<NodeId> {
        let mut best: Option<&DriEntry> = None;
        for e in self.entries.values() {
            if !e.present || e.neighbor == suspect || e.score() == 0 || !allowed(e.neighbor) {
                continue;
            }
            best = match best {
                None => Some(e),
                Some(b) => {
                    // Iteration is ascending by id, so ties keep the earlier (lower) id.
                    let better = (e.score(), e.last_interaction) > (b.score(), b.last_interaction);
                    Some(if better { e } else { b })
                }
            };
        }
        best.map(|e| e.neighbor)
    }
}
