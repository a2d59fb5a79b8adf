//! The detector: periodic DRI scans, the local IN/CN/SN probe, and the
//! cooperative cross-check that feeds the alarm.

pub mod cadence;
pub mod dri;
pub mod probe;

use std::collections::{BTreeMap, HashSet};

use crate::id::NodeId;
use crate::link::DeliveryOutcome;
use crate::message::{DataClass, DataPacket, DetectionBody, Message, Rrep, Rreq, Steer, Steered};
use crate::network::{Ctx, Node, RoundStage, Timer};
use crate::time::SimTime;
use crate::trace::{Outcome, RecordKind};

pub use cadence::{how_often_to_detect, period_for_budget, CadenceError, CadenceInput};
pub use dri::{DriEntry, DriTable};
pub use probe::{
    probe_deadline, CoopOutcome, LocalOutcome, NotConfirmedReason, ParticipantState, Participation,
    ProbeCheckEntry, ProbeCheckTable, ProbeRound, RoundState, Rounds,
};

/// Further probes each cooperating neighbour sends.
pub const FURTHER_PROBES: u8 = 3;

/// Threshold interval stretched in proportion to neighbour churn.
pub fn threshold_for_churn(base: SimTime, churn_rate: f64, reference: f64) -> SimTime {
    if reference <= 0.0 || churn_rate <= reference {
        return base;
    }
    SimTime::from_secs_f64(base.as_secs_f64() * churn_rate / reference)
}

#[derive(Debug, Clone, Default)]
pub struct DetectorState {
    last_neighbors: Vec<NodeId>,
    last_tick: Option<SimTime>,
    /// Smoothed neighbour changes per second.
    pub churn_rate: f64,
    /// Epoch in which an alarm last prompted a round per suspect.
    triggered: BTreeMap<NodeId, u64>,
    seen_steered: HashSet<u64>,
}

fn symmetric_difference(a: &[NodeId], b: &[NodeId]) -> usize {
    a.iter().filter(|x| b.binary_search(x).is_err()).count()
        + b.iter().filter(|x| a.binary_search(x).is_err()).count()
}

impl Node {
    fn colludes_with(&self, n: NodeId) -> bool {
        self.adversary.as_ref().is_some_and(|g| g.colludes_with(n))
    }

    pub(crate) fn detection_tick(&mut self, ctx: &mut Ctx<'_>) {
        let Some(d) = ctx.detection().cloned() else {
            return;
        };
        let now = ctx.now();
        let nbrs: Vec<NodeId> = ctx
            .neighbors(self.id)
            .into_iter()
            .filter(|n| !self.isolates(*n))
            .collect();
        if let Some(last) = self.detector.last_tick {
            let dt = now.saturating_sub(last).as_secs_f64();
            if dt > 0.0 {
                let rate = symmetric_difference(&nbrs, &self.detector.last_neighbors) as f64 / dt;
                self.detector.churn_rate = 0.5 * self.detector.churn_rate + 0.5 * rate;
            }
        }
        self.detector.last_tick = Some(now);
        self.detector.last_neighbors = nbrs.clone();
        let threshold = threshold_for_churn(
            d.threshold_interval,
            self.detector.churn_rate,
            d.churn_reference,
        );
        self.dri.refresh_presence(&nbrs, now, threshold.times(2));
        self.dri.expire_checks(now, d.clear_validity);
        self.alarm.expire(ctx.epoch(), d.alarm_expiry_epochs);
        self.forge_alarms(ctx);
        if now.saturating_sub(self.dri.epoch_started) >= threshold {
            let suspects = self.dri.scan_suspects(threshold, now);
            for s in suspects {
                if self.isolates(s) || self.colludes_with(s) || self.rounds.has_round_for(s) {
                    continue;
                }
                ctx.record_event(RecordKind::DriScan, self.id, s, Outcome::Suspect, None);
                self.start_round(ctx, s);
            }
            // Cooperators are chosen from the closing window, so reset after.
            self.dri.start_epoch(now);
        }
        ctx.timer(self.id, d.period, Timer::DetectionTick);
    }

    /// Independent check of a suspect someone else raised an alarm about.
    pub(crate) fn trigger_round(&mut self, ctx: &mut Ctx<'_>, suspect: NodeId) {
        if self.colludes_with(suspect) || self.rounds.has_round_for(suspect) {
            return;
        }
        let epoch = ctx.epoch();
        if self.detector.triggered.get(&suspect) == Some(&epoch) {
            return;
        }
        self.detector.triggered.insert(suspect, epoch);
        if !self.start_round(ctx, suspect) && ctx.is_neighbor(self.id, suspect) {
            self.corroborate(ctx, suspect);
        }
    }

    /// Alarm-triggered check without a cooperator: go straight to the
    /// cooperative stage, so the verdict is still this node's own evidence.
    fn corroborate(&mut self, ctx: &mut Ctx<'_>, suspect: NodeId) {
        let nonce = ctx.next_nonce();
        let now = ctx.now();
        self.rounds
            .insert(ProbeRound::new(self.id, suspect, self.id, nonce, now));
        self.escalate(ctx, nonce);
    }

    /// Opens a local round: ask all neighbours for a route to the CN.
    pub(crate) fn start_round(&mut self, ctx: &mut Ctx<'_>, suspect: NodeId) -> bool {
        let Some(d) = ctx.detection() else {
            return false;
        };
        let wait = d.rrep_wait;
        let me = self.id;
        let alarm = &self.alarm;
        let Some(cn) = self.dri.select_cooperative_node_where(suspect, |n| {
            !alarm.isolates(n) && ctx.is_neighbor(me, n)
        }) else {
            return false;
        };
        let nonce = ctx.next_nonce();
        let now = ctx.now();
        self.rounds
            .insert(ProbeRound::new(me, suspect, cn, nonce, now));
        let rreq = Rreq {
            origin: me,
            target: cn,
            broadcast_id: self.routing.next_broadcast_id(),
            hop_count: 0,
            origin_seq: self.routing.seq,
            target_seq_known: 0,
            ttl: 0,
            probe: Some(nonce),
            faulty: self.faulty_snapshot(),
        };
        self.broadcast(ctx, Message::Rreq(rreq), None);
        ctx.timer(
            me,
            wait,
            Timer::Round {
                nonce,
                stage: RoundStage::RrepWait,
            },
        );
        true
    }

    /// Probe-round RREQs are one hop and install nothing.
    pub(crate) fn answer_probe_rreq(&mut self, ctx: &mut Ctx<'_>, from: NodeId, rreq: Rreq) {
        if ctx.detection().is_none() || self.isolates(rreq.origin) {
            return;
        }
        let now = ctx.now();
        let hop_count = if rreq.target == self.id {
            Some(0)
        } else if self.adversary.is_some() || ctx.is_neighbor(self.id, rreq.target) {
            Some(1)
        } else {
            self.routing
                .table
                .lookup(rreq.target, now)
                .filter(|e| !self.isolates(e.next_hop))
                .map(|e| e.hop_count)
        };
        let Some(hop_count) = hop_count else { return };
        let rrep = Rrep {
            origin: rreq.origin,
            target: rreq.target,
            hop_count,
            target_seq: 0,
            lifetime: ctx.params.route_lifetime,
            probe: rreq.probe,
            faulty: self.faulty_snapshot(),
        };
        ctx.transmit(self.id, from, Message::Rrep(rrep));
    }

    pub(crate) fn on_probe_rrep(&mut self, ctx: &mut Ctx<'_>, from: NodeId, rrep: Rrep) {
        let (Some(nonce), Some(d)) = (rrep.probe, ctx.detection()) else {
            return;
        };
        let (slack, latency) = (d.probe_slack, ctx.link.per_hop_latency);
        if rrep.origin != self.id {
            return;
        }
        if let Some(round) = self.rounds.active.get_mut(&nonce) {
            if round.state != RoundState::AwaitingRrep
                || from != round.suspect
                || rrep.target != round.cooperator
            {
                return;
            }
            let deadline = probe_deadline(1 + u32::from(rrep.hop_count), latency, slack);
            round.state = RoundState::ProbeSent;
            round.ttl_deadline = ctx.now() + deadline;
            let (suspect, cn) = (round.suspect, round.cooperator);
            let pkt = self.probe_packet(ctx, cn, suspect, DataClass::Probe { nonce, suspect });
            match self.forward_data(ctx, None, pkt) {
                Some(DeliveryOutcome::OutOfRange) | None => {
                    self.end_round(ctx, nonce, Outcome::SuspectDeparted);
                }
                Some(_) => ctx.timer(
                    self.id,
                    deadline,
                    Timer::Round {
                        nonce,
                        stage: RoundStage::ProbeDeadline,
                    },
                ),
            }
            return;
        }
        if let Some(p) = self.rounds.participations.get_mut(&nonce) {
            if p.state == ParticipantState::AwaitingRrep
                && from == p.suspect
                && rrep.target == p.initiator
            {
                p.state = ParticipantState::Probing { sent: 0, handed: 0 };
                self.send_further_probe(ctx, nonce);
            }
        }
    }

    fn probe_packet(
        &self,
        ctx: &mut Ctx<'_>,
        dst: NodeId,
        via: NodeId,
        class: DataClass,
    ) -> DataPacket {
        DataPacket {
            id: ctx.next_packet_id(),
            src: self.id,
            dst,
            class,
            payload_bytes: ctx.params.probe_payload,
            ttl: ctx.params.data_ttl,
            forced_next: Some(via),
            salvaged: true,
        }
    }

    fn send_further_probe(&mut self, ctx: &mut Ctx<'_>, nonce: u64) {
        let Some(p) = self.rounds.participations.get(&nonce) else {
            return;
        };
        let ParticipantState::Probing { sent, handed } = p.state else {
            return;
        };
        let (initiator, suspect) = (p.initiator, p.suspect);
        if self.isolates(suspect) {
            self.rounds.participations.remove(&nonce);
            return;
        }
        let attempt = sent + 1;
        let pkt = self.probe_packet(
            ctx,
            initiator,
            suspect,
            DataClass::FurtherProbe {
                nonce,
                suspect,
                attempt,
            },
        );
        let out = self.forward_data(ctx, None, pkt);
        let handed = handed + u8::from(matches!(out, Some(o) if o != DeliveryOutcome::OutOfRange));
        if let Some(p) = self.rounds.participations.get_mut(&nonce) {
            p.state = ParticipantState::Probing {
                sent: attempt,
                handed,
            };
        }
        if attempt < FURTHER_PROBES {
            let gap = ctx.detection().map_or(SimTime::ZERO, |d| d.probe_gap);
            ctx.timer(
                self.id,
                gap,
                Timer::Participant {
                    nonce,
                    attempt: attempt + 1,
                },
            );
            return;
        }
        self.rounds.participations.remove(&nonce);
        if handed > 0 {
            let body = DetectionBody::Notification {
                nonce,
                sender: self.id,
                handed,
            };
            self.send_steered(ctx, Some(initiator), suspect, body, None);
        }
    }

    pub(crate) fn on_participant_timer(&mut self, ctx: &mut Ctx<'_>, nonce: u64, attempt: u8) {
        if attempt == 0 {
            if self
                .rounds
                .participations
                .get(&nonce)
                .is_some_and(|p| p.state == ParticipantState::AwaitingRrep)
            {
                self.rounds.participations.remove(&nonce);
            }
            return;
        }
        self.send_further_probe(ctx, nonce);
    }

    pub(crate) fn on_probe_arrival(&mut self, _ctx: &mut Ctx<'_>, nonce: u64) {
        self.rounds.received_probes.insert(nonce);
    }

    pub(crate) fn on_further_probe_arrival(
        &mut self,
        _ctx: &mut Ctx<'_>,
        nonce: u64,
        from: NodeId,
    ) {
        if let Some(r) = self.rounds.active.get_mut(&nonce) {
            if r.state == RoundState::Escalated {
                r.check.mark_probe(from);
            }
        }
    }

    pub(crate) fn on_round_timer(&mut self, ctx: &mut Ctx<'_>, nonce: u64, stage: RoundStage) {
        let Some(d) = ctx.detection().cloned() else {
            return;
        };
        let Some(round) = self.rounds.active.get_mut(&nonce) else {
            return;
        };
        match (stage, round.state) {
            (RoundStage::RrepWait, RoundState::AwaitingRrep) => {
                self.end_round(ctx, nonce, Outcome::NoRrep)
            }
            (RoundStage::ProbeDeadline, RoundState::ProbeSent) => {
                round.state = RoundState::QueryingCn;
                let (cn, sn) = (round.cooperator, round.suspect);
                let body = DetectionBody::ProbeQuery {
                    nonce,
                    initiator: self.id,
                    suspect: sn,
                };
                if self.send_steered(ctx, Some(cn), sn, body, None) == 0 {
                    self.end_round(ctx, nonce, Outcome::UnreachableCn);
                } else {
                    ctx.timer(
                        self.id,
                        d.query_timeout,
                        Timer::Round {
                            nonce,
                            stage: RoundStage::QueryTimeout,
                        },
                    );
                }
            }
            (RoundStage::QueryTimeout, RoundState::QueryingCn) => self.escalate(ctx, nonce),
            (RoundStage::CoopDeadline, RoundState::Escalated) => self.conclude(ctx, nonce),
            _ => {}
        }
    }

    fn escalate(&mut self, ctx: &mut Ctx<'_>, nonce: u64) {
        let Some(d) = ctx.detection().cloned() else {
            return;
        };
        let me = self.id;
        let Some(round) = self.rounds.active.get_mut(&nonce) else {
            return;
        };
        round.state = RoundState::Escalated;
        let sn = round.suspect;
        round.suspect_adjacent = ctx.is_neighbor(me, sn);
        ctx.record_event(
            RecordKind::Verdict,
            me,
            sn,
            Outcome::Escalate,
            Some((nonce, sn)),
        );
        let body = DetectionBody::CoopRequest {
            nonce,
            initiator: me,
            suspect: sn,
        };
        self.send_steered(ctx, None, sn, body, None);
        ctx.timer(
            me,
            d.coop_window,
            Timer::Round {
                nonce,
                stage: RoundStage::CoopDeadline,
            },
        );
    }

    fn conclude(&mut self, ctx: &mut Ctx<'_>, nonce: u64) {
        let Some(round) = self.rounds.remove(nonce) else {
            return;
        };
        let sn = round.suspect;
        let now = ctx.now();
        let outcome = if !round.suspect_adjacent || !ctx.is_neighbor(self.id, sn) {
            Outcome::SuspectDeparted
        } else {
            match round.check.verdict() {
                CoopOutcome::Malicious(_) => Outcome::Malicious,
                CoopOutcome::NotConfirmed(reason) => {
                    self.dri.set_check_bit(sn, now);
                    match reason {
                        NotConfirmedReason::AllProbesArrived => Outcome::NotConfirmed,
                        NotConfirmedReason::InsufficientWitnesses => Outcome::InsufficientWitnesses,
                    }
                }
            }
        };
        ctx.record_event(RecordKind::Verdict, self.id, sn, outcome, Some((nonce, sn)));
        if outcome == Outcome::Malicious {
            self.on_malicious_verdict(ctx, sn, nonce);
        }
    }

    /// Terminates a round before the cooperative stage.
    fn end_round(&mut self, ctx: &mut Ctx<'_>, nonce: u64, outcome: Outcome) {
        let Some(round) = self.rounds.remove(nonce) else {
            return;
        };
        let sn = round.suspect;
        if outcome == Outcome::Cleared {
            let now = ctx.now();
            self.dri.set_check_bit(sn, now);
        }
        ctx.record_event(RecordKind::Verdict, self.id, sn, outcome, Some((nonce, sn)));
    }

    pub(crate) fn abort_rounds_against(&mut self, suspect: NodeId) {
        if let Some(nonce) = self.rounds.by_suspect.get(&suspect).copied() {
            self.rounds.remove(nonce);
        }
        self.rounds
            .participations
            .retain(|_, p| p.suspect != suspect);
    }

    /// Sends detection traffic that must never pass through `avoid`:
    /// directly when `dst` is adjacent, else a scoped flood. Returns the
    /// number of copies sent.
    fn send_steered(
        &mut self,
        ctx: &mut Ctx<'_>,
        dst: Option<NodeId>,
        avoid: NodeId,
        body: DetectionBody,
        except: Option<NodeId>,
    ) -> usize {
        let Some(ttl) = ctx.detection().map(|d| d.steer_ttl) else {
            return 0;
        };
        let steer = Steer {
            flood_id: ctx.next_flood_id(),
            origin: self.id,
            dst,
            avoid,
            ttl,
        };
        self.detector.seen_steered.insert(steer.flood_id);
        self.relay_steered(ctx, Steered { steer, body }, except)
    }

    fn relay_steered(&mut self, ctx: &mut Ctx<'_>, msg: Steered, except: Option<NodeId>) -> usize {
        let avoid = msg.steer.avoid;
        if let Some(d) = msg.steer.dst {
            if d != avoid && ctx.is_neighbor(self.id, d) && !self.isolates(d) {
                ctx.transmit(self.id, d, Message::Steered(msg));
                return 1;
            }
        }
        let mut sent = 0;
        for n in ctx.neighbors(self.id) {
            if n == avoid || Some(n) == except || self.isolates(n) {
                continue;
            }
            ctx.transmit(self.id, n, Message::Steered(msg));
            sent += 1;
        }
        sent
    }

    pub(crate) fn handle_steered(&mut self, ctx: &mut Ctx<'_>, from: NodeId, msg: Steered) {
        if ctx.detection().is_none() || from == msg.steer.avoid {
            return;
        }
        if !self.detector.seen_steered.insert(msg.steer.flood_id) {
            return;
        }
        let for_me = msg.steer.dst.is_none_or(|d| d == self.id);
        if for_me {
            self.consume_steered(ctx, msg.body);
        }
        let relay =
            msg.steer.dst != Some(self.id) && msg.steer.ttl > 1 && self.id != msg.steer.avoid;
        if relay {
            let mut fwd = msg;
            fwd.steer.ttl -= 1;
            self.relay_steered(ctx, fwd, Some(from));
        }
    }

    fn consume_steered(&mut self, ctx: &mut Ctx<'_>, body: DetectionBody) {
        match body {
            DetectionBody::CoopRequest {
                nonce,
                initiator,
                suspect,
            } => self.join_cooperative_round(ctx, nonce, initiator, suspect),
            DetectionBody::Notification { nonce, sender, .. } => {
                if let Some(r) = self.rounds.active.get_mut(&nonce) {
                    if r.state == RoundState::Escalated {
                        r.check.add_notifier(sender);
                    }
                }
            }
            DetectionBody::ProbeQuery {
                nonce,
                initiator,
                suspect,
            } => {
                let received = self.rounds.received_probes.contains(&nonce);
                let reply = DetectionBody::ProbeQueryReply { nonce, received };
                self.send_steered(ctx, Some(initiator), suspect, reply, None);
            }
            DetectionBody::ProbeQueryReply { nonce, received } => {
                let querying = self
                    .rounds
                    .active
                    .get(&nonce)
                    .is_some_and(|r| r.state == RoundState::QueryingCn);
                if !querying {
                    return;
                }
                if received {
                    self.end_round(ctx, nonce, Outcome::Cleared);
                } else {
                    self.escalate(ctx, nonce);
                }
            }
        }
    }

    fn join_cooperative_round(
        &mut self,
        ctx: &mut Ctx<'_>,
        nonce: u64,
        initiator: NodeId,
        suspect: NodeId,
    ) {
        if self.id == initiator
            || self.id == suspect
            || self.isolates(suspect)
            || self.isolates(initiator)
            || self.colludes_with(suspect)
            || self.rounds.participations.contains_key(&nonce)
            || !ctx.is_neighbor(self.id, suspect)
        {
            return;
        }
        let Some(wait) = ctx.detection().map(|d| d.rrep_wait) else {
            return;
        };
        self.rounds.participations.insert(
            nonce,
            Participation {
                initiator,
                suspect,
                state: ParticipantState::AwaitingRrep,
            },
        );
        let rreq = Rreq {
            origin: self.id,
            target: initiator,
            broadcast_id: self.routing.next_broadcast_id(),
            hop_count: 0,
            origin_seq: self.routing.seq,
            target_seq_known: 0,
            ttl: 0,
            probe: Some(nonce),
            faulty: self.faulty_snapshot(),
        };
        ctx.transmit(self.id, suspect, Message::Rreq(rreq));
        ctx.timer(self.id, wait, Timer::Participant { nonce, attempt: 0 });
    }
}
