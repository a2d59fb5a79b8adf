//! Global alarm: k-of-n signed accusations, the faulty list, and isolation.

mod faulty;
mod signature;

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

pub use faulty::{alarm_payload, AlarmAggregate, AlarmError, AlarmMessage, FaultyList};
pub use signature::{KeyedDigestScheme, SignatureScheme, Token};

use crate::id::NodeId;
use crate::message::{AlarmGossip, FaultySnapshot, Message};
use crate::network::{Ctx, Node, Propagation, Timer};
use crate::trace::{Outcome, RecordKind};

/// One node's view of accusations and convictions.
#[derive(Debug, Clone, Default)]
pub struct AlarmState {
    pub faulty: FaultyList,
    /// Attach the faulty list to RREQ/RREP.
    pub piggyback: bool,
    /// Epoch of this node's latest Malicious verdict per suspect.
    verdicts: BTreeMap<NodeId, u64>,
    pending: BTreeMap<(NodeId, u64), AlarmAggregate>,
    signed: BTreeSet<(NodeId, u64)>,
    snapshot: Option<Rc<FaultySnapshot>>,
    last_neighbors: Vec<NodeId>,
    /// Signatures or proofs discarded because they did not verify.
    pub rejected: u64,
}

impl AlarmState {
    pub fn isolates(&self, n: NodeId) -> bool {
        self.faulty.contains(n)
    }

    pub fn record_verdict(&mut self, suspect: NodeId, epoch: u64) {
        self.verdicts.insert(suspect, epoch);
    }

    pub fn pending(&self) -> impl Iterator<Item = &AlarmAggregate> {
        self.pending.values()
    }

    /// Signs an accusation. Requires this node's own Malicious verdict
    /// within `window` epochs, and at most one alarm per (suspect, epoch).
    pub fn raise_alarm(
        &mut self,
        accuser: NodeId,
        suspect: NodeId,
        epoch: u64,
        evidence_nonce: u64,
        window: u64,
        scheme: &dyn SignatureScheme,
    ) -> Result<AlarmMessage, AlarmError> {
        match self.verdicts.get(&suspect) {
            Some(&v) if v.abs_diff(epoch) < window => {}
            _ => return Err(AlarmError::NoVerdict { accuser, suspect }),
        }
        self.sign_unchecked(accuser, suspect, epoch, evidence_nonce, scheme)
    }

    /// Signs without evidence. Only colluders call this.
    pub fn sign_unchecked(
        &mut self,
        accuser: NodeId,
        suspect: NodeId,
        epoch: u64,
        evidence_nonce: u64,
        scheme: &dyn SignatureScheme,
    ) -> Result<AlarmMessage, AlarmError> {
        if !self.signed.insert((suspect, epoch)) {
            return Err(AlarmError::Duplicate {
                accuser,
                suspect,
                epoch,
            });
        }
        Ok(AlarmMessage {
            suspect,
            accuser,
            epoch,
            evidence_nonce,
            signature: scheme.sign(accuser, &alarm_payload(suspect, epoch)),
        })
    }

    /// Drops aggregates, verdicts and signing records older than `expiry` epochs.
    pub fn expire(&mut self, current: u64, expiry: u64) {
        let live = |e: u64| e + expiry > current;
        self.pending.retain(|&(_, e), _| live(e));
        self.signed.retain(|&(_, e)| live(e));
        self.verdicts.retain(|_, e| live(*e));
    }

    pub fn snapshot(&mut self) -> Option<Rc<FaultySnapshot>> {
        if self.faulty.is_empty() {
            return None;
        }
        let stale = self
            .snapshot
            .as_ref()
            .is_none_or(|s| s.version != self.faulty.version());
        if stale {
            self.snapshot = Some(Rc::new(FaultySnapshot {
                version: self.faulty.version(),
                proofs: self.faulty.proofs().cloned().collect(),
            }));
        }
        self.snapshot.clone()
    }
}

impl Node {
    /// The list to attach to an outgoing RREQ/RREP, if any.
    pub(crate) fn faulty_snapshot(&mut self) -> Option<Rc<FaultySnapshot>> {
        if self.alarm.piggyback {
            self.alarm.snapshot()
        } else {
            None
        }
    }

    pub(crate) fn merge_faulty(&mut self, ctx: &mut Ctx<'_>, snap: &FaultySnapshot) {
        let Some(d) = ctx.detection() else { return };
        let local_only = d.propagation == Propagation::Neighborhood;
        for agg in &snap.proofs {
            if agg.suspect == self.id || self.isolates(agg.suspect) {
                continue;
            }
            if local_only && !ctx.is_neighbor(self.id, agg.suspect) {
                continue;
            }
            self.commit(ctx, agg);
        }
    }

    /// Adds a complete aggregate's suspect to the faulty list and isolates it.
    pub(crate) fn commit(&mut self, ctx: &mut Ctx<'_>, agg: &AlarmAggregate) -> bool {
        match self.alarm.faulty.commit(agg, ctx.scheme.as_ref()) {
            Ok(true) => {}
            Ok(false) => return false,
            Err(_) => {
                self.alarm.rejected += 1;
                return false;
            }
        }
        let s = agg.suspect;
        ctx.record_event(RecordKind::Commit, self.id, s, Outcome::Committed, None);
        self.routing.table.invalidate_via(s);
        self.purge_pending_for(ctx, s);
        self.abort_rounds_against(s);
        self.alarm.pending.retain(|&(p, _), _| p != s);
        true
    }

    /// Called when this node's own cooperative round convicts `suspect`.
    pub(crate) fn on_malicious_verdict(&mut self, ctx: &mut Ctx<'_>, suspect: NodeId, nonce: u64) {
        let epoch = ctx.epoch();
        self.alarm.record_verdict(suspect, epoch);
        let mut epochs: BTreeSet<u64> = self
            .alarm
            .pending
            .keys()
            .filter(|(s, _)| *s == suspect)
            .map(|&(_, e)| e)
            .collect();
        epochs.insert(epoch);
        for e in epochs {
            self.sign_and_spread(ctx, suspect, e, nonce, false);
        }
    }

    fn sign_and_spread(
        &mut self,
        ctx: &mut Ctx<'_>,
        suspect: NodeId,
        epoch: u64,
        nonce: u64,
        forged: bool,
    ) -> bool {
        let Some(d) = ctx.detection() else {
            return false;
        };
        let window = d.alarm_expiry_epochs;
        let scheme = ctx.scheme.as_ref();
        let msg = if forged {
            self.alarm
                .sign_unchecked(self.id, suspect, epoch, nonce, scheme)
        } else {
            self.alarm
                .raise_alarm(self.id, suspect, epoch, nonce, window, scheme)
        };
        let Ok(msg) = msg else { return false };
        let agg = self
            .alarm
            .pending
            .entry((suspect, epoch))
            .or_insert_with(|| AlarmAggregate::new(suspect, epoch));
        if !agg.add(msg.accuser, msg.signature, scheme) {
            return false;
        }
        let budget = ctx.detection().map_or(0, |d| d.alarm_budget);
        self.after_growth(ctx, (suspect, epoch), budget, None);
        true
    }

    /// Commits a complete aggregate, then relays it within `budget` hops.
    fn after_growth(
        &mut self,
        ctx: &mut Ctx<'_>,
        key: (NodeId, u64),
        budget: u8,
        except: Option<NodeId>,
    ) {
        let Some(agg) = self.alarm.pending.get(&key).cloned() else {
            return;
        };
        let mut budget = budget;
        // A freshly completed proof always goes at least one hop further.
        if agg.verify_complete(ctx.scheme.as_ref()) && self.commit(ctx, &agg) {
            budget = budget.max(1);
        }
        if budget == 0 {
            return;
        }
        let gossip = Message::Alarm(AlarmGossip {
            aggregate: agg,
            budget: budget - 1,
        });
        for n in ctx.neighbors(self.id) {
            if n == key.0 || Some(n) == except || self.isolates(n) {
                continue;
            }
            ctx.transmit(self.id, n, gossip.clone());
        }
    }

    pub(crate) fn handle_alarm(&mut self, ctx: &mut Ctx<'_>, from: NodeId, g: AlarmGossip) {
        let Some(d) = ctx.detection() else { return };
        let expiry = d.alarm_expiry_epochs;
        let AlarmGossip { aggregate, budget } = g;
        let key = (aggregate.suspect, aggregate.epoch);
        let suspect = aggregate.suspect;
        if suspect == self.id || self.isolates(suspect) || aggregate.epoch + expiry <= ctx.epoch() {
            return;
        }
        let entry = self
            .alarm
            .pending
            .entry(key)
            .or_insert_with(|| AlarmAggregate::new(suspect, aggregate.epoch));
        let Ok((grew, rejected)) = entry.merge(&aggregate, ctx.scheme.as_ref()) else {
            return;
        };
        self.alarm.rejected += rejected as u64;
        if !grew {
            return;
        }
        // The sender only needs the merge back if it taught us less than we hold.
        let except = (entry.signatures.len() <= aggregate.signatures.len()).then_some(from);
        let colluder = self
            .adversary
            .as_ref()
            .filter(|gh| gh.colluding_group.is_some());
        let signed = match colluder {
            Some(gh) if gh.colludes_with(suspect) => false,
            Some(gh) if gh.bad_mouth.contains(&suspect) => {
                self.sign_and_spread(ctx, suspect, key.1, 0, true)
            }
            _ => self.sign_and_spread(ctx, suspect, key.1, 0, false),
        };
        if signed {
            return;
        }
        self.after_growth(ctx, key, budget, except);
        if ctx.is_neighbor(self.id, suspect) && !self.isolates(suspect) {
            self.trigger_round(ctx, suspect);
        }
    }

    /// Colluders accuse their bad-mouthing targets once per epoch.
    pub(crate) fn forge_alarms(&mut self, ctx: &mut Ctx<'_>) {
        let targets: Vec<NodeId> = match &self.adversary {
            Some(gh) if gh.colluding_group.is_some() => gh.bad_mouth.iter().copied().collect(),
            _ => return,
        };
        let epoch = ctx.epoch();
        for t in targets {
            if t != self.id && !self.isolates(t) {
                self.sign_and_spread(ctx, t, epoch, 0, true);
            }
        }
    }

    /// Neighbourhood mode: keep only convicted neighbours and hand the
    /// list to nodes that just came into range.
    pub(crate) fn neighborhood_check(&mut self, ctx: &mut Ctx<'_>) {
        let Some(d) = ctx.detection() else { return };
        let interval = d.neighborhood_interval;
        let nbrs = ctx.neighbors(self.id);
        self.alarm.faulty.retain(|m| nbrs.binary_search(&m).is_ok());
        if let Some(snap) = self.alarm.snapshot() {
            let fresh: Vec<NodeId> = nbrs
                .iter()
                .copied()
                .filter(|n| {
                    self.alarm.last_neighbors.binary_search(n).is_err() && !self.isolates(*n)
                })
                .collect();
            for n in fresh {
                ctx.transmit(self.id, n, Message::FaultyList(snap.clone()));
            }
        }
        self.alarm.last_neighbors = nbrs;
        ctx.timer(self.id, interval, Timer::NeighborhoodCheck);
    }
}
