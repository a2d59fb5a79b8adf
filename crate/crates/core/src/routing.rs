//! Minimal AODV: route table, RREQ flood with reverse routes, RREP return,
//! data forwarding with a bounded pending buffer.

use std::collections::{BTreeMap, HashSet, VecDeque};

use crate::adversary::spurious_rrep;
use crate::id::NodeId;
use crate::link::DeliveryOutcome;
use crate::message::{DataClass, DataPacket, Message, Rrep, Rreq};
use crate::network::{Ctx, Node, Timer};
use crate::time::SimTime;
use crate::trace::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteEntry {
    pub destination: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u8,
    pub dest_seq: u32,
    pub expires_at: SimTime,
    pub valid: bool,
}

#[derive(Debug, Clone)]
pub struct RouteTable {
    pub owner: NodeId,
    entries: BTreeMap<NodeId, RouteEntry>,
}

impl RouteTable {
    pub fn new(owner: NodeId) -> Self {
        RouteTable {
            owner,
            entries: BTreeMap::new(),
        }
    }

    /// A usable route: valid and unexpired.
    pub fn lookup(&self, dst: NodeId, now: SimTime) -> Option<&RouteEntry> {
        self.entries
            .get(&dst)
            .filter(|e| e.valid && e.expires_at > now)
    }

    /// Installs `cand` when it is fresher than what is known, or equally
    /// fresh and either shorter or replacing an unusable route. Older
    /// sequence numbers never win. Returns whether it was installed.
    pub fn offer(&mut self, cand: RouteEntry, now: SimTime) -> bool {
        if cand.destination == self.owner {
            return false;
        }
        let install = match self.entries.get(&cand.destination) {
            None => true,
            Some(old) => {
                let usable = old.valid && old.expires_at > now;
                cand.dest_seq > old.dest_seq
                    || (cand.dest_seq == old.dest_seq
                        && (!usable || cand.hop_count < old.hop_count))
            }
        };
        if install {
            self.entries.insert(
                cand.destination,
                RouteEntry {
                    valid: true,
                    ..cand
                },
            );
        } else if let Some(old) = self.entries.get_mut(&cand.destination) {
            // Same path re-advertised: extend it.
            if old.next_hop == cand.next_hop
                && old.dest_seq == cand.dest_seq
                && cand.expires_at > old.expires_at
            {
                old.expires_at = cand.expires_at;
            }
        }
        install
    }

    pub fn refresh(&mut self, dst: NodeId, until: SimTime) {
        if let Some(e) = self.entries.get_mut(&dst) {
            if e.valid && e.expires_at < until {
                e.expires_at = until;
            }
        }
    }

    /// Marks the route broken. The sequence number moves past the broken
    /// path so stale copies of it elsewhere are never accepted again.
    pub fn invalidate(&mut self, dst: NodeId) {
        if let Some(e) = self.entries.get_mut(&dst) {
            if e.valid {
                e.valid = false;
                e.dest_seq = e.dest_seq.wrapping_add(1);
            }
        }
    }

    /// Invalidates every route through `hop`; returns how many.
    pub fn invalidate_via(&mut self, hop: NodeId) -> usize {
        let mut n = 0;
        for e in self.entries.values_mut() {
            if e.valid && (e.next_hop == hop || e.destination == hop) {
                e.valid = false;
                e.dest_seq = e.dest_seq.wrapping_add(1);
                n += 1;
            }
        }
        n
    }

    /// Last destination sequence number heard for `dst`, valid or not.
    pub fn known_seq(&self, dst: NodeId) -> u32 {
        self.entries.get(&dst).map_or(0, |e| e.dest_seq)
    }

    pub fn entries(&self) -> impl Iterator<Item = &RouteEntry> {
        self.entries.values()
    }
}

type Pending = VecDeque<(Option<NodeId>, DataPacket)>;

#[derive(Debug, Clone)]
pub struct RoutingState {
    pub table: RouteTable,
    pub seq: u32,
    broadcast_id: u32,
    seen: HashSet<(NodeId, u32)>,
    pending: BTreeMap<NodeId, Pending>,
    pending_len: usize,
    /// Open discoveries, by target: (attempt id, retries already spent).
    discoveries: BTreeMap<NodeId, (u32, u32)>,
    attempts: u32,
}

impl RoutingState {
    pub fn new(owner: NodeId) -> Self {
        RoutingState {
            table: RouteTable::new(owner),
            seq: 0,
            broadcast_id: 0,
            seen: HashSet::new(),
            pending: BTreeMap::new(),
            pending_len: 0,
            discoveries: BTreeMap::new(),
            attempts: 0,
        }
    }

    pub fn pending_len(&self) -> usize {
        self.pending_len
    }

    pub(crate) fn next_broadcast_id(&mut self) -> u32 {
        self.broadcast_id += 1;
        self.broadcast_id
    }
}

impl Node {
    /// Injects a locally generated packet.
    pub(crate) fn originate_data(&mut self, ctx: &mut Ctx<'_>, pkt: DataPacket) {
        if pkt.is_cbr() {
            ctx.record_packet(&pkt, Outcome::Originated);
        }
        self.forward_data(ctx, None, pkt);
    }

    pub(crate) fn handle_data(&mut self, ctx: &mut Ctx<'_>, from: NodeId, pkt: DataPacket) {
        if pkt.dst == self.id {
            match pkt.class {
                DataClass::Cbr { .. } => ctx.record_packet(&pkt, Outcome::Received),
                DataClass::Probe { nonce, .. } => self.on_probe_arrival(ctx, nonce),
                DataClass::FurtherProbe { nonce, .. } => {
                    self.on_further_probe_arrival(ctx, nonce, pkt.src)
                }
            }
            return;
        }
        self.forward_data(ctx, Some(from), pkt);
    }

    /// Sends `pkt` one hop onward. Returns the link outcome when a
    /// transmission was attempted.
    pub(crate) fn forward_data(
        &mut self,
        ctx: &mut Ctx<'_>,
        prev: Option<NodeId>,
        mut pkt: DataPacket,
    ) -> Option<DeliveryOutcome> {
        if self.isolates(pkt.src) || self.isolates(pkt.dst) {
            ctx.record_packet(&pkt, Outcome::Isolated);
            return None;
        }
        if pkt.ttl == 0 {
            ctx.record_packet(&pkt, Outcome::TtlExpired);
            return None;
        }
        let forced = pkt.forced_next.take();
        let next = match forced {
            Some(n) => n,
            None => match self.next_hop_for(ctx, pkt.dst) {
                Some(n) => n,
                None => {
                    self.enqueue_pending(ctx, prev, pkt);
                    return None;
                }
            },
        };
        if self.isolates(next) {
            ctx.record_packet(&pkt, Outcome::Isolated);
            return None;
        }
        pkt.ttl -= 1;
        let now = ctx.now();
        let out = ctx.transmit(self.id, next, Message::Data(pkt.clone()));
        let granted = out != DeliveryOutcome::OutOfRange;
        self.dri
            .note_attempt(next, out == DeliveryOutcome::Delivered, now);
        if granted {
            if pkt.is_cbr() {
                self.dri.observe_forward(prev, next, now);
            }
            let until = now + ctx.params.route_lifetime;
            self.routing.table.refresh(pkt.dst, until);
        } else if forced.is_none() {
            self.routing.table.invalidate_via(next);
            if !pkt.salvaged {
                pkt.salvaged = true;
                pkt.ttl += 1;
                self.enqueue_pending(ctx, prev, pkt);
            }
        }
        Some(out)
    }

    fn next_hop_for(&mut self, ctx: &mut Ctx<'_>, dst: NodeId) -> Option<NodeId> {
        if ctx.is_neighbor(self.id, dst) {
            return Some(dst);
        }
        let now = ctx.now();
        let e = self.routing.table.lookup(dst, now)?;
        let lie = self.adversary.as_ref().and_then(|g| g.advertised.get(&dst));
        if lie.is_some_and(|&l| e.dest_seq <= l) {
            // Older than the gray hole's own spurious reply, so possibly
            // pointing back into the poisoned region.
            return None;
        }
        let hop = e.next_hop;
        if self.isolates(hop) {
            self.routing.table.invalidate(dst);
            return None;
        }
        Some(hop)
    }

    fn enqueue_pending(&mut self, ctx: &mut Ctx<'_>, prev: Option<NodeId>, pkt: DataPacket) {
        if self.routing.pending_len >= ctx.params.pending_capacity {
            ctx.record_packet(&pkt, Outcome::BufferOverflow);
            return;
        }
        let dst = pkt.dst;
        self.routing
            .pending
            .entry(dst)
            .or_default()
            .push_back((prev, pkt));
        self.routing.pending_len += 1;
        if !self.routing.discoveries.contains_key(&dst) {
            self.originate_rreq(ctx, dst);
        }
    }

    pub(crate) fn originate_rreq(&mut self, ctx: &mut Ctx<'_>, target: NodeId) {
        self.send_rreq(ctx, target, 0);
    }

    fn send_rreq(&mut self, ctx: &mut Ctx<'_>, target: NodeId, retry: u32) {
        if target == self.id {
            return;
        }
        let r = &mut self.routing;
        r.seq += 1;
        let broadcast_id = r.next_broadcast_id();
        r.seen.insert((self.id, broadcast_id));
        r.attempts += 1;
        let attempt = r.attempts;
        r.discoveries.insert(target, (attempt, retry));
        let mut target_seq_known = r.table.known_seq(target);
        // A gray hole needs a real route; asking above its own lie keeps
        // poisoned caches from answering.
        if let Some(&lie) = self
            .adversary
            .as_ref()
            .and_then(|g| g.advertised.get(&target))
        {
            target_seq_known = target_seq_known.max(lie.saturating_add(1));
        }
        let r = &mut self.routing;
        let rreq = Rreq {
            origin: self.id,
            target,
            broadcast_id,
            hop_count: 0,
            origin_seq: r.seq,
            target_seq_known,
            ttl: ctx.params.rreq_ttl,
            probe: None,
            faulty: self.faulty_snapshot(),
        };
        self.broadcast(ctx, Message::Rreq(rreq), None);
        // Binary exponential backoff between retries.
        let timeout = SimTime::from_micros(ctx.params.discovery_timeout.as_micros() << retry);
        ctx.timer(
            self.id,
            timeout,
            Timer::DiscoveryTimeout { target, attempt },
        );
    }

    pub(crate) fn on_discovery_timeout(&mut self, ctx: &mut Ctx<'_>, target: NodeId, attempt: u32) {
        let Some(&(open, retry)) = self.routing.discoveries.get(&target) else {
            return;
        };
        if open != attempt {
            return;
        }
        if retry < ctx.params.rreq_retries && !self.isolates(target) {
            return self.send_rreq(ctx, target, retry + 1);
        }
        self.routing.discoveries.remove(&target);
        for (_, pkt) in self.take_pending(target) {
            ctx.record_packet(&pkt, Outcome::DiscoveryTimeout);
        }
    }

    fn take_pending(&mut self, target: NodeId) -> Pending {
        let q = self.routing.pending.remove(&target).unwrap_or_default();
        self.routing.pending_len -= q.len();
        q
    }

    fn flush_pending(&mut self, ctx: &mut Ctx<'_>, target: NodeId) {
        self.routing.discoveries.remove(&target);
        for (prev, pkt) in self.take_pending(target) {
            self.forward_data(ctx, prev, pkt);
        }
    }

    /// Drops queued packets that can no longer be sent under isolation.
    pub(crate) fn purge_pending_for(&mut self, ctx: &mut Ctx<'_>, convicted: NodeId) {
        let q = self.take_pending(convicted);
        self.routing.discoveries.remove(&convicted);
        for (_, pkt) in q {
            ctx.record_packet(&pkt, Outcome::Isolated);
        }
    }

    pub(crate) fn handle_rreq(&mut self, ctx: &mut Ctx<'_>, from: NodeId, rreq: Rreq) {
        if rreq.probe.is_some() {
            return self.answer_probe_rreq(ctx, from, rreq);
        }
        if rreq.origin == self.id || !self.routing.seen.insert((rreq.origin, rreq.broadcast_id)) {
            return;
        }
        if self.isolates(rreq.origin) {
            return;
        }
        if let Some(s) = &rreq.faulty {
            self.merge_faulty(ctx, s);
        }
        let now = ctx.now();
        let lifetime = ctx.params.route_lifetime;
        self.routing.table.offer(
            RouteEntry {
                destination: rreq.origin,
                next_hop: from,
                hop_count: rreq.hop_count.saturating_add(1),
                dest_seq: rreq.origin_seq,
                expires_at: now + lifetime,
                valid: true,
            },
            now,
        );
        if let Some(gh) = &self.adversary {
            if rreq.target != self.id && gh.accomplices.contains(&rreq.origin) {
                return;
            }
        }
        if let Some(gh) = self.adversary.as_mut().filter(|_| rreq.target != self.id) {
            let mut rrep = spurious_rrep(self.id, &rreq, lifetime);
            let top = gh.advertised.entry(rreq.target).or_default();
            *top = (*top).max(rrep.target_seq);
            rrep.faulty = self.faulty_snapshot();
            ctx.transmit(self.id, from, Message::Rrep(rrep));
            return;
        }
        if rreq.target == self.id {
            self.routing.seq = self.routing.seq.max(rreq.target_seq_known) + 1;
            let rrep = Rrep {
                origin: rreq.origin,
                target: self.id,
                hop_count: 0,
                target_seq: self.routing.seq,
                lifetime,
                probe: None,
                faulty: self.faulty_snapshot(),
            };
            ctx.transmit(self.id, from, Message::Rrep(rrep));
            return;
        }
        if let Some(e) = self.routing.table.lookup(rreq.target, now).copied() {
            let fresh = e.dest_seq > 0 && e.dest_seq >= rreq.target_seq_known;
            if fresh && e.next_hop != from && e.next_hop != rreq.origin {
                let rrep = Rrep {
                    origin: rreq.origin,
                    target: rreq.target,
                    hop_count: e.hop_count,
                    target_seq: e.dest_seq,
                    lifetime: e.expires_at.saturating_sub(now),
                    probe: None,
                    faulty: self.faulty_snapshot(),
                };
                ctx.transmit(self.id, from, Message::Rrep(rrep));
                return;
            }
        }
        if rreq.ttl == 0 {
            return;
        }
        let fwd = Rreq {
            hop_count: rreq.hop_count.saturating_add(1),
            ttl: rreq.ttl - 1,
            faulty: self.faulty_snapshot(),
            ..rreq
        };
        self.broadcast(ctx, Message::Rreq(fwd), Some(from));
    }

    pub(crate) fn handle_rrep(&mut self, ctx: &mut Ctx<'_>, from: NodeId, rrep: Rrep) {
        if rrep.probe.is_some() {
            return self.on_probe_rrep(ctx, from, rrep);
        }
        if let Some(s) = &rrep.faulty {
            self.merge_faulty(ctx, s);
        }
        if self.isolates(rrep.target) {
            return;
        }
        let now = ctx.now();
        let hop_count = rrep.hop_count.saturating_add(1);
        let installed = self.routing.table.offer(
            RouteEntry {
                destination: rrep.target,
                next_hop: from,
                hop_count,
                dest_seq: rrep.target_seq,
                expires_at: now + rrep.lifetime,
                valid: true,
            },
            now,
        );
        if rrep.origin == self.id {
            if self.routing.table.lookup(rrep.target, now).is_some() {
                self.flush_pending(ctx, rrep.target);
            }
            return;
        }
        if !installed {
            return;
        }
        let Some(back) = self
            .routing
            .table
            .lookup(rrep.origin, now)
            .map(|e| e.next_hop)
        else {
            ctx.record_event(
                crate::trace::RecordKind::Rrep,
                self.id,
                rrep.origin,
                Outcome::NoRoute,
                None,
            );
            return;
        };
        let fwd = Rrep {
            hop_count,
            faulty: self.faulty_snapshot(),
            ..rrep
        };
        ctx.transmit(self.id, back, Message::Rrep(fwd));
    }

    /// One transmission per current, non-isolated neighbour.
    pub(crate) fn broadcast(
        &mut self,
        ctx: &mut Ctx<'_>,
        msg: Message,
        except: Option<NodeId>,
    ) -> usize {
        let mut sent = 0;
        for n in ctx.neighbors(self.id) {
            if Some(n) == except || self.isolates(n) {
                continue;
            }
            ctx.transmit(self.id, n, msg.clone());
            sent += 1;
        }
        sent
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::id::nid;

    fn entry(dst: u32, hop: u32, count: u8, seq: u32, exp: u64) -> RouteEntry {
        RouteEntry {
            destination: nid(dst),
            next_hop: nid(hop),
            hop_count: count,
            dest_seq: seq,
            expires_at: SimTime::from_secs(exp),
            valid: true,
        }
    }

    #[test]
    fn shorter_path_wins_at_equal_seq() {
        let mut t = RouteTable::new(nid(1));
        assert!(t.offer(entry(9, 2, 4, 5, 10), SimTime::ZERO));
        assert!(t.offer(entry(9, 3, 2, 5, 10), SimTime::ZERO));
        assert_eq!(t.lookup(nid(9), SimTime::ZERO).unwrap().hop_count, 2);
        assert!(!t.offer(entry(9, 4, 3, 5, 10), SimTime::ZERO));
    }

    #[test]
    fn fresher_seq_wins_regardless_of_length() {
        let mut t = RouteTable::new(nid(1));
        t.offer(entry(9, 2, 2, 5, 10), SimTime::ZERO);
        assert!(t.offer(entry(9, 6, 1, 105, 10), SimTime::ZERO));
        assert_eq!(t.lookup(nid(9), SimTime::ZERO).unwrap().next_hop, nid(6));
        assert!(!t.offer(entry(9, 2, 1, 6, 10), SimTime::ZERO));
    }

    #[test]
    fn expired_routes_are_replaced_but_never_by_older_seq() {
        let mut t = RouteTable::new(nid(1));
        t.offer(entry(9, 2, 1, 50, 1), SimTime::ZERO);
        assert!(t.lookup(nid(9), SimTime::from_secs(2)).is_none());
        assert!(!t.offer(entry(9, 3, 4, 1, 20), SimTime::from_secs(2)));
        assert!(t.offer(entry(9, 3, 4, 50, 20), SimTime::from_secs(2)));
    }

    #[test]
    fn no_self_route() {
        let mut t = RouteTable::new(nid(1));
        assert!(!t.offer(entry(1, 2, 1, 1, 10), SimTime::ZERO));
    }

    #[test]
    fn invalidate_via_hop() {
        let mut t = RouteTable::new(nid(1));
        t.offer(entry(9, 2, 2, 1, 10), SimTime::ZERO);
        t.offer(entry(8, 2, 3, 1, 10), SimTime::ZERO);
        t.offer(entry(7, 3, 3, 1, 10), SimTime::ZERO);
        assert_eq!(t.invalidate_via(nid(2)), 2);
        assert!(t.lookup(nid(9), SimTime::ZERO).is_none());
        assert!(t.lookup(nid(7), SimTime::ZERO).is_some());
        assert_eq!(t.known_seq(nid(9)), 2);
        // The broken path's own sequence number no longer qualifies.
        assert!(!t.offer(entry(9, 2, 2, 1, 10), SimTime::ZERO));
        assert!(t.offer(entry(9, 4, 5, 2, 10), SimTime::ZERO));
    }

    #[test]
    fn refresh_extends_only() {
        let mut t = RouteTable::new(nid(1));
        t.offer(entry(9, 2, 2, 1, 10), SimTime::ZERO);
        t.refresh(nid(9), SimTime::from_secs(5));
        assert_eq!(
            t.lookup(nid(9), SimTime::ZERO).unwrap().expires_at,
            SimTime::from_secs(10)
        );
        t.refresh(nid(9), SimTime::from_secs(15));
        assert_eq!(
            t.lookup(nid(9), SimTime::ZERO).unwrap().expires_at,
            SimTime::from_secs(15)
        );
    }
}
