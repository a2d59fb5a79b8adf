//! Everything that crosses a link.

use std::rc::Rc;

use crate::alarm::AlarmAggregate;
use crate::id::NodeId;
use crate::time::SimTime;
use crate::trace::{FaultyDigest, RecordKind};

/// Faulty-list snapshot carried on routing messages in piggyback mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultySnapshot {
    pub version: u64,
    pub proofs: Vec<AlarmAggregate>,
}

impl FaultySnapshot {
    pub fn digest(&self) -> FaultyDigest {
        FaultyDigest {
            version: self.version,
            members: self.proofs.iter().map(|p| p.suspect.get()).collect(),
        }
    }

    pub fn wire_bytes(&self) -> u32 {
        8 + self
            .proofs
            .iter()
            .map(|p| 12 + 20 * p.signatures.len() as u32)
            .sum::<u32>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rreq {
    pub origin: NodeId,
    pub target: NodeId,
    pub broadcast_id: u32,
    pub hop_count: u8,
    pub origin_seq: u32,
    pub target_seq_known: u32,
    /// Remaining rebroadcasts. Zero for one-hop detection queries.
    pub ttl: u8,
    /// Set when the request belongs to a probe round.
    pub probe: Option<u64>,
    pub faulty: Option<Rc<FaultySnapshot>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rrep {
    pub origin: NodeId,
    pub target: NodeId,
    pub hop_count: u8,
    pub target_seq: u32,
    pub lifetime: SimTime,
    pub probe: Option<u64>,
    pub faulty: Option<Rc<FaultySnapshot>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataClass {
    Cbr {
        flow: u32,
        seq: u32,
    },
    Probe {
        nonce: u64,
        suspect: NodeId,
    },
    FurtherProbe {
        nonce: u64,
        suspect: NodeId,
        attempt: u8,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    pub id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub class: DataClass,
    pub payload_bytes: u32,
    pub ttl: u8,
    /// Source-chosen first hop; cleared once the packet leaves the source.
    pub forced_next: Option<NodeId>,
    /// Already re-queued once after a broken link.
    pub salvaged: bool,
}

impl DataPacket {
    pub fn is_cbr(&self) -> bool {
        matches!(self.class, DataClass::Cbr { .. })
    }
}

/// Header for detection control traffic that must never touch the suspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Steer {
    pub flood_id: u64,
    pub origin: NodeId,
    /// `None` delivers to every eligible receiver within scope.
    pub dst: Option<NodeId>,
    pub avoid: NodeId,
    /// Hops this copy may still travel, itself included.
    pub ttl: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionBody {
    CoopRequest {
        nonce: u64,
        initiator: NodeId,
        suspect: NodeId,
    },
    Notification {
        nonce: u64,
        sender: NodeId,
        handed: u8,
    },
    ProbeQuery {
        nonce: u64,
        initiator: NodeId,
        suspect: NodeId,
    },
    ProbeQueryReply {
        nonce: u64,
        received: bool,
    },
}

impl DetectionBody {
    pub fn nonce(&self) -> u64 {
        match *self {
            DetectionBody::CoopRequest { nonce, .. }
            | DetectionBody::Notification { nonce, .. }
            | DetectionBody::ProbeQuery { nonce, .. }
            | DetectionBody::ProbeQueryReply { nonce, .. } => nonce,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Steered {
    pub steer: Steer,
    pub body: DetectionBody,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlarmGossip {
    pub aggregate: AlarmAggregate,
    /// Further neighbourhood hops this copy may be relayed.
    pub budget: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Rreq(Rreq),
    Rrep(Rrep),
    Data(DataPacket),
    Steered(Steered),
    Alarm(AlarmGossip),
    /// Neighbourhood-mode exchange of proofs.
    FaultyList(Rc<FaultySnapshot>),
}

const IP_HEADER: u32 = 20;

impl Message {
    pub fn kind(&self) -> RecordKind {
        match self {
            Message::Rreq(_) => RecordKind::Rreq,
            Message::Rrep(_) => RecordKind::Rrep,
            Message::Data(d) => match d.class {
                DataClass::Cbr { .. } => RecordKind::Data,
                DataClass::Probe { .. } => RecordKind::Probe,
                DataClass::FurtherProbe { .. } => RecordKind::FurtherProbe,
            },
            Message::Steered(s) => match s.body {
                DetectionBody::CoopRequest { .. } => RecordKind::CoopRequest,
                DetectionBody::Notification { .. } => RecordKind::Notify,
                DetectionBody::ProbeQuery { .. } => RecordKind::ProbeQuery,
                DetectionBody::ProbeQueryReply { .. } => RecordKind::ProbeReply,
            },
            Message::Alarm(_) => RecordKind::Alarm,
            Message::FaultyList(_) => RecordKind::FaultyList,
        }
    }

    pub fn bytes(&self) -> u32 {
        let piggy = |f: &Option<Rc<FaultySnapshot>>| f.as_ref().map_or(0, |s| s.wire_bytes());
        IP_HEADER
            + match self {
                Message::Rreq(r) => 24 + piggy(&r.faulty),
                Message::Rrep(r) => 20 + piggy(&r.faulty),
                Message::Data(d) => d.payload_bytes,
                Message::Steered(_) => 28,
                Message::Alarm(a) => 16 + 20 * a.aggregate.signatures.len() as u32,
                Message::FaultyList(s) => s.wire_bytes(),
            }
    }

    /// Round nonce and suspect, for detection traffic.
    pub fn round(&self) -> Option<(u64, NodeId)> {
        match self {
            Message::Data(d) => match d.class {
                DataClass::Probe { nonce, suspect }
                | DataClass::FurtherProbe { nonce, suspect, .. } => Some((nonce, suspect)),
                DataClass::Cbr { .. } => None,
            },
            Message::Steered(s) => Some((s.body.nonce(), s.steer.avoid)),
            _ => None,
        }
    }

    pub fn faulty(&self) -> Option<&FaultySnapshot> {
        match self {
            Message::Rreq(r) => r.faulty.as_deref(),
            Message::Rrep(r) => r.faulty.as_deref(),
            _ => None,
        }
    }
}
