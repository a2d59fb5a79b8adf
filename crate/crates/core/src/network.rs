//! Event dispatch: the per-run context shared by node handlers, the node
//! record, and the loop that drives them.

use std::collections::BTreeMap;

use crate::adversary::{DropDecision, GrayHoleState};
use crate::alarm::{AlarmState, SignatureScheme};
use crate::detection::dri::DriTable;
use crate::detection::probe::Rounds;
use crate::detection::DetectorState;
use crate::engine::Scheduler;
use crate::id::NodeId;
use crate::link::{DeliveryOutcome, LinkModel};
use crate::message::{DataClass, DataPacket, Message};
use crate::mobility::{Mobility, Position};
use crate::rng::{RngStreams, SimRng, StreamId};
use crate::routing::RoutingState;
use crate::time::SimTime;
use crate::trace::{Outcome, RecordKind, TraceRecord, TraceSink};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagation {
    /// Faulty list rides on RREQ/RREP.
    Piggyback,
    /// Each node keeps only convicted neighbours and trades them on contact.
    Neighborhood,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionParams {
    pub period: SimTime,
    pub threshold_interval: SimTime,
    /// Neighbour changes per second above which the threshold stretches.
    pub churn_reference: f64,
    pub clear_validity: SimTime,
    pub rrep_wait: SimTime,
    pub probe_slack: SimTime,
    pub query_timeout: SimTime,
    pub probe_gap: SimTime,
    pub coop_window: SimTime,
    pub steer_ttl: u8,
    pub alarm_budget: u8,
    pub alarm_expiry_epochs: u64,
    pub propagation: Propagation,
    pub neighborhood_interval: SimTime,
    pub evasion_guard: SimTime,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            period: SimTime::from_secs(10),
            threshold_interval: SimTime::from_secs(10),
            churn_reference: 0.5,
            clear_validity: SimTime::from_secs(30),
            rrep_wait: SimTime::from_millis(100),
            probe_slack: SimTime::from_millis(100),
            query_timeout: SimTime::from_millis(200),
            probe_gap: SimTime::from_millis(50),
            coop_window: SimTime::from_millis(600),
            steer_ttl: 3,
            alarm_budget: 3,
            alarm_expiry_epochs: 3,
            propagation: Propagation::Piggyback,
            neighborhood_interval: SimTime::from_secs(1),
            evasion_guard: SimTime::from_secs(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    pub route_lifetime: SimTime,
    pub discovery_timeout: SimTime,
    pub pending_capacity: usize,
    /// Extra route requests after the first times out.
    pub rreq_retries: u32,
    pub data_ttl: u8,
    pub rreq_ttl: u8,
    pub probe_payload: u32,
    /// `None` runs plain AODV.
    pub detection: Option<DetectionParams>,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            route_lifetime: SimTime::from_secs(10),
            discovery_timeout: SimTime::from_secs(1),
            pending_capacity: 64,
            rreq_retries: 2,
            data_ttl: 32,
            rreq_ttl: 32,
            probe_payload: 64,
            detection: Some(DetectionParams::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundStage {
    RrepWait,
    ProbeDeadline,
    QueryTimeout,
    CoopDeadline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timer {
    DiscoveryTimeout {
        target: NodeId,
        attempt: u32,
    },
    PhaseTick,
    DetectionTick,
    Round {
        nonce: u64,
        stage: RoundStage,
    },
    /// Attempt 0 is the wait for the suspect's reply.
    Participant {
        nonce: u64,
        attempt: u8,
    },
    NeighborhoodCheck,
}

#[derive(Debug, Clone)]
pub enum Event {
    Deliver {
        from: NodeId,
        to: NodeId,
        msg: Message,
    },
    Timer {
        node: NodeId,
        timer: Timer,
    },
    Traffic {
        flow: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub id: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub interval: SimTime,
    pub start: SimTime,
    pub payload_bytes: u32,
    pub next_seq: u32,
}

/// Everything a handler may touch besides its own node.
pub struct Ctx<'a> {
    pub(crate) sched: Scheduler<Event>,
    pub link: LinkModel,
    mobility: Mobility,
    static_topology: bool,
    positions: Vec<Position>,
    pos_stamp: Vec<Option<SimTime>>,
    neighbor_cache: Vec<Vec<NodeId>>,
    nbr_stamp: Vec<Option<SimTime>>,
    link_rng: SimRng,
    adv_rng: SimRng,
    in_flight: Vec<usize>,
    sink: &'a mut dyn TraceSink,
    pub(crate) scheme: Box<dyn SignatureScheme>,
    pub params: ProtocolParams,
    /// Per-node detection tick offsets within a period.
    pub(crate) tick_offsets: Vec<SimTime>,
    nonce: u64,
    packet_id: u64,
    flood_id: u64,
}

impl<'a> Ctx<'a> {
    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn detection(&self) -> Option<&DetectionParams> {
        self.params.detection.as_ref()
    }

    /// Current detection epoch.
    pub fn epoch(&self) -> u64 {
        self.detection()
            .map_or(0, |d| self.now().window_index(d.period))
    }

    pub fn position(&mut self, id: NodeId) -> Position {
        let i = id.index();
        let now = self.now();
        if !self.static_topology && self.pos_stamp[i] != Some(now) {
            self.positions[i] = self.mobility.position_at(i, now);
            self.pos_stamp[i] = Some(now);
        }
        self.positions[i]
    }

    pub fn is_neighbor(&mut self, a: NodeId, b: NodeId) -> bool {
        if a == b || b.index() >= self.node_count() {
            return false;
        }
        let (pa, pb) = (self.position(a), self.position(b));
        self.link.in_range(&pa, &pb)
    }

    /// Current neighbours of `of`, ascending.
    pub fn neighbors(&mut self, of: NodeId) -> Vec<NodeId> {
        let i = of.index();
        let now = self.now();
        let fresh =
            self.nbr_stamp[i].is_some() && (self.static_topology || self.nbr_stamp[i] == Some(now));
        if !fresh {
            let me = self.position(of);
            let mut out = Vec::new();
            for j in 0..self.node_count() {
                if j == i {
                    continue;
                }
                let other = NodeId::from_index(j);
                let p = self.position(other);
                if self.link.in_range(&me, &p) {
                    out.push(other);
                }
            }
            self.neighbor_cache[i] = out;
            self.nbr_stamp[i] = Some(now);
        }
        self.neighbor_cache[i].clone()
    }

    pub fn adv_rng(&mut self) -> &mut SimRng {
        &mut self.adv_rng
    }

    pub fn next_nonce(&mut self) -> u64 {
        self.nonce += 1;
        self.nonce
    }

    pub fn next_packet_id(&mut self) -> u64 {
        self.packet_id += 1;
        self.packet_id
    }

    pub fn next_flood_id(&mut self) -> u64 {
        self.flood_id += 1;
        self.flood_id
    }

    pub fn timer(&mut self, node: NodeId, delay: SimTime, timer: Timer) {
        self.sched.schedule_in(delay, Event::Timer { node, timer });
    }

    /// One unicast over the link model. Everything but a delivery is
    /// recorded now; deliveries are recorded on arrival.
    pub fn transmit(&mut self, src: NodeId, dst: NodeId, msg: Message) -> DeliveryOutcome {
        debug_assert_ne!(src, dst);
        let (ps, pd) = (self.position(src), self.position(dst));
        let out = self
            .link
            .decide(&ps, &pd, self.in_flight[dst.index()], &mut self.link_rng);
        match out {
            DeliveryOutcome::Delivered => {
                self.in_flight[dst.index()] += 1;
                let lat = self.link.per_hop_latency;
                self.sched.schedule_in(
                    lat,
                    Event::Deliver {
                        from: src,
                        to: dst,
                        msg,
                    },
                );
            }
            DeliveryOutcome::LostChannel => self.record_tx(src, dst, &msg, Outcome::LostChannel),
            DeliveryOutcome::DroppedBuffer => {
                self.record_tx(src, dst, &msg, Outcome::DroppedBuffer)
            }
            DeliveryOutcome::OutOfRange => self.record_tx(src, dst, &msg, Outcome::OutOfRange),
        }
        out
    }

    pub fn record(&mut self, r: &TraceRecord) {
        self.sink.record(r);
    }

    pub fn record_tx(&mut self, from: NodeId, to: NodeId, msg: &Message, outcome: Outcome) {
        let mut r = TraceRecord::new(
            self.now(),
            msg.kind(),
            from.get(),
            to.get(),
            outcome,
            msg.bytes(),
        );
        if let Some((nonce, sn)) = msg.round() {
            r = r.with_round(nonce, sn.get());
        }
        if let Some(f) = msg.faulty() {
            r.faulty = Some(f.digest());
        }
        if let Message::Data(p) = msg {
            r.packet = Some(p.id);
        }
        self.sink.record(&r);
    }

    /// End-to-end fate of a packet (origination, arrival, or a routing drop).
    pub fn record_packet(&mut self, pkt: &DataPacket, outcome: Outcome) {
        let msg_kind = match pkt.class {
            DataClass::Cbr { .. } => RecordKind::Data,
            DataClass::Probe { .. } => RecordKind::Probe,
            DataClass::FurtherProbe { .. } => RecordKind::FurtherProbe,
        };
        let mut r = TraceRecord::new(
            self.now(),
            msg_kind,
            pkt.src.get(),
            pkt.dst.get(),
            outcome,
            pkt.payload_bytes,
        );
        match pkt.class {
            DataClass::Probe { nonce, suspect }
            | DataClass::FurtherProbe { nonce, suspect, .. } => {
                r = r.with_round(nonce, suspect.get());
            }
            DataClass::Cbr { .. } => {}
        }
        r.packet = Some(pkt.id);
        self.sink.record(&r);
    }

    pub fn record_event(
        &mut self,
        kind: RecordKind,
        src: NodeId,
        dst: NodeId,
        outcome: Outcome,
        round: Option<(u64, NodeId)>,
    ) {
        let mut r = TraceRecord::new(self.now(), kind, src.get(), dst.get(), outcome, 0);
        if let Some((nonce, sn)) = round {
            r = r.with_round(nonce, sn.get());
        }
        self.sink.record(&r);
    }

    /// Whether any neighbour of `node` is within the guard of its detection tick.
    pub(crate) fn near_neighbor_tick(&mut self, node: NodeId) -> bool {
        let Some(d) = self.params.detection.as_ref() else {
            return false;
        };
        let (period, guard) = (d.period.as_micros(), d.evasion_guard.as_micros());
        let now = self.now().as_micros();
        for n in self.neighbors(node) {
            let off = self.tick_offsets[n.index()].as_micros();
            let phase = (now + period - off % period) % period;
            if phase < guard || period - phase < guard {
                return true;
            }
        }
        false
    }
}

/// Per-node protocol state.
pub struct Node {
    pub id: NodeId,
    pub adversary: Option<GrayHoleState>,
    pub routing: RoutingState,
    pub dri: DriTable,
    pub rounds: Rounds,
    pub detector: DetectorState,
    pub alarm: AlarmState,
}

impl Node {
    pub fn new(id: NodeId, adversary: Option<GrayHoleState>) -> Self {
        Node {
            id,
            adversary,
            routing: RoutingState::new(id),
            dri: DriTable::new(id),
            rounds: Rounds::default(),
            detector: DetectorState::default(),
            alarm: AlarmState::default(),
        }
    }

    pub fn is_adversary(&self) -> bool {
        self.adversary.is_some()
    }

    pub fn isolates(&self, n: NodeId) -> bool {
        self.alarm.isolates(n)
    }

    fn on_deliver(&mut self, ctx: &mut Ctx<'_>, from: NodeId, msg: Message) {
        if let (Some(gh), Message::Data(p)) = (&self.adversary, &msg) {
            if p.dst != self.id {
                let evading = gh.sync_evasion && ctx.near_neighbor_tick(self.id);
                if !evading
                    && gh.drop_decision(p.src, p.dst, &mut ctx.adv_rng) == DropDecision::Drop
                {
                    ctx.record_tx(from, self.id, &msg, Outcome::MaliciouslyDropped);
                    return;
                }
            }
        }
        ctx.record_tx(from, self.id, &msg, Outcome::Delivered);
        if self.isolates(from) {
            return;
        }
        match msg {
            Message::Rreq(r) => self.handle_rreq(ctx, from, r),
            Message::Rrep(r) => self.handle_rrep(ctx, from, r),
            Message::Data(p) => self.handle_data(ctx, from, p),
            Message::Steered(s) => self.handle_steered(ctx, from, s),
            Message::Alarm(a) => self.handle_alarm(ctx, from, a),
            Message::FaultyList(f) => self.merge_faulty(ctx, &f),
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_>, timer: Timer) {
        match timer {
            Timer::DiscoveryTimeout { target, attempt } => {
                self.on_discovery_timeout(ctx, target, attempt)
            }
            Timer::PhaseTick => {
                if let Some(gh) = self.adversary.as_mut() {
                    gh.phase_transition(&mut ctx.adv_rng);
                    let tick = gh.phase_tick;
                    ctx.timer(self.id, tick, Timer::PhaseTick);
                }
            }
            Timer::DetectionTick => self.detection_tick(ctx),
            Timer::Round { nonce, stage } => self.on_round_timer(ctx, nonce, stage),
            Timer::Participant { nonce, attempt } => self.on_participant_timer(ctx, nonce, attempt),
            Timer::NeighborhoodCheck => self.neighborhood_check(ctx),
        }
    }
}

/// A fully assembled network ready to run.
pub struct NetworkSetup {
    pub mobility: Mobility,
    pub link: LinkModel,
    pub params: ProtocolParams,
    pub adversaries: BTreeMap<NodeId, GrayHoleState>,
    pub flows: Vec<Flow>,
    pub scheme: Box<dyn SignatureScheme>,
    pub streams: RngStreams,
}

pub struct Network<'a> {
    pub ctx: Ctx<'a>,
    pub nodes: Vec<Node>,
    pub flows: Vec<Flow>,
}

impl<'a> Network<'a> {
    /// Builds the network and writes the roster at t=0.
    pub fn new(setup: NetworkSetup, sink: &'a mut dyn TraceSink) -> Self {
        let n = setup.mobility.len();
        let static_topology = setup.mobility.params().max_speed <= 0.0;
        let mut mobility = setup.mobility;
        let positions: Vec<Position> = (0..n)
            .map(|i| mobility.position_at(i, SimTime::ZERO))
            .collect();
        let tick_offsets = match &setup.params.detection {
            Some(d) => (0..n as u64)
                .map(|i| SimTime::from_micros(d.period.as_micros() * i / n.max(1) as u64))
                .collect(),
            None => vec![SimTime::ZERO; n],
        };
        let mut ctx = Ctx {
            sched: Scheduler::new(),
            link: setup.link,
            mobility,
            static_topology,
            positions,
            pos_stamp: vec![None; n],
            neighbor_cache: vec![Vec::new(); n],
            nbr_stamp: vec![None; n],
            link_rng: setup.streams.stream(StreamId::Link),
            adv_rng: setup.streams.stream(StreamId::Adversary),
            in_flight: vec![0; n],
            sink,
            scheme: setup.scheme,
            params: setup.params,
            tick_offsets,
            nonce: 0,
            packet_id: 0,
            flood_id: 0,
        };
        let mut adversaries = setup.adversaries;
        let piggyback = ctx
            .params
            .detection
            .as_ref()
            .is_some_and(|d| d.propagation == Propagation::Piggyback);
        let nodes: Vec<Node> = (0..n)
            .map(|i| {
                let id = NodeId::from_index(i);
                let mut node = Node::new(id, adversaries.remove(&id));
                node.alarm.piggyback = piggyback;
                node
            })
            .collect();
        for node in &nodes {
            let outcome = if node.is_adversary() {
                Outcome::Adversary
            } else {
                Outcome::Honest
            };
            ctx.record_event(RecordKind::Roster, node.id, node.id, outcome, None);
            if let Some(gh) = &node.adversary {
                ctx.timer(node.id, gh.phase_tick, Timer::PhaseTick);
            }
            if let Some(d) = ctx.params.detection.clone() {
                let first = d.period + ctx.tick_offsets[node.id.index()];
                ctx.timer(node.id, first, Timer::DetectionTick);
                if d.propagation == Propagation::Neighborhood {
                    ctx.timer(node.id, d.neighborhood_interval, Timer::NeighborhoodCheck);
                }
            }
        }
        for (i, f) in setup.flows.iter().enumerate() {
            ctx.sched
                .schedule(f.start, Event::Traffic { flow: i })
                .expect("flow start is not in the past");
        }
        Network {
            ctx,
            nodes,
            flows: setup.flows,
        }
    }

    pub fn now(&self) -> SimTime {
        self.ctx.now()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    /// Processes every event due at or before `end`; the clock ends at `end`.
    pub fn run_until(&mut self, end: SimTime) {
        while let Some((_, ev)) = self.ctx.sched.pop_until(end) {
            self.dispatch(ev);
        }
        self.ctx.sched.advance_to(end);
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::Deliver { from, to, msg } => {
                self.ctx.in_flight[to.index()] -= 1;
                self.nodes[to.index()].on_deliver(&mut self.ctx, from, msg);
            }
            Event::Timer { node, timer } => self.nodes[node.index()].on_timer(&mut self.ctx, timer),
            Event::Traffic { flow } => {
                let f = &mut self.flows[flow];
                let seq = f.next_seq;
                f.next_seq += 1;
                let (src, dst, interval, payload, id) =
                    (f.src, f.dst, f.interval, f.payload_bytes, f.id);
                let pkt = DataPacket {
                    id: self.ctx.next_packet_id(),
                    src,
                    dst,
                    class: DataClass::Cbr { flow: id, seq },
                    payload_bytes: payload,
                    ttl: self.ctx.params.data_ttl,
                    forced_next: None,
                    salvaged: false,
                };
                self.nodes[src.index()].originate_data(&mut self.ctx, pkt);
                self.ctx
                    .sched
                    .schedule_in(interval, Event::Traffic { flow });
            }
        }
    }

    /// Writes the closing record. Call once, after the last `run_until`.
    pub fn finish(&mut self) {
        let t = self.now();
        self.ctx.record(&TraceRecord::new(
            t,
            RecordKind::End,
            0,
            0,
            Outcome::Complete,
            0,
        ));
    }
}
