//! Run trace: one record per terminal packet outcome and per detection event.
//!
//! Line format:
//! `t=<sec> kind=<class> src=<id> dst=<id> outcome=<enum> bytes=<n>`
//! optionally followed by `nonce=<n> sn=<id>` for detection traffic,
//! `pkt=<n>` for data-class packets, and `fl=<version>:<id,id,...>` when a
//! faulty list rides on an RREQ/RREP.
//! Id `0` means "not applicable".

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::time::SimTime;

macro_rules! wire_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} `{}`", stringify!($name), other)),
                }
            }
        }
    };
}

wire_enum! {
    /// Packet class or bookkeeping event a record describes.
    RecordKind {
        Rreq => "rreq",
        Rrep => "rrep",
        Data => "data",
        Probe => "probe",
        FurtherProbe => "further_probe",
        ProbeQuery => "probe_query",
        ProbeReply => "probe_reply",
        CoopRequest => "coop_request",
        Notify => "notify",
        Alarm => "alarm",
        FaultyList => "faulty_list",
        DriScan => "dri_scan",
        Verdict => "verdict",
        Commit => "commit",
        Roster => "roster",
        End => "end",
    }
}

wire_enum! {
    Outcome {
        // per-hop transmission outcomes
        Delivered => "delivered",
        LostChannel => "lost_channel",
        DroppedBuffer => "dropped_buffer",
        OutOfRange => "out_of_range",
        MaliciouslyDropped => "maliciously_dropped",
        // end-to-end and in-node packet fates
        Originated => "originated",
        Received => "received",
        NoRoute => "no_route",
        TtlExpired => "ttl_expired",
        DiscoveryTimeout => "discovery_timeout",
        BufferOverflow => "buffer_overflow",
        Isolated => "isolated",
        // detection
        Suspect => "suspect",
        Cleared => "cleared",
        Escalate => "escalate",
        Malicious => "malicious",
        NotConfirmed => "not_confirmed",
        NoRrep => "no_rrep",
        UnreachableCn => "unreachable_cn",
        InsufficientWitnesses => "insufficient_witnesses",
        SuspectDeparted => "suspect_departed",
        Committed => "committed",
        // roster and framing
        Honest => "honest",
        Adversary => "adversary",
        Complete => "complete",
    }
}

impl Outcome {
    /// True for the terminal outcome of one hop on the channel.
    pub fn is_transmission(self) -> bool {
        matches!(
            self,
            Outcome::Delivered
                | Outcome::LostChannel
                | Outcome::DroppedBuffer
                | Outcome::OutOfRange
                | Outcome::MaliciouslyDropped
        )
    }
}

impl RecordKind {
    /// Control class for the overhead metric: everything except CBR payload.
    pub fn is_control(self) -> bool {
        !matches!(self, RecordKind::Data)
    }
}

/// `fl=<version>:<ids>` attachment.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FaultyDigest {
    pub version: u64,
    pub members: Vec<u32>,
}

impl fmt::Display for FaultyDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.version)?;
        for (i, m) in self.members.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{m}")?;
        }
        Ok(())
    }
}

impl FromStr for FaultyDigest {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (v, ids) = s.split_once(':').ok_or_else(|| format!("bad fl `{s}`"))?;
        let version = v.parse().map_err(|_| format!("bad fl version `{v}`"))?;
        let members = if ids.is_empty() {
            vec![]
        } else {
            ids.split(',')
                .map(|x| x.parse().map_err(|_| format!("bad fl id `{x}`")))
                .collect::<Result<_, _>>()?
        };
        Ok(FaultyDigest { version, members })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub t: SimTime,
    pub kind: RecordKind,
    pub src: u32,
    pub dst: u32,
    pub outcome: Outcome,
    pub bytes: u32,
    pub nonce: Option<u64>,
    pub suspect: Option<u32>,
    /// Data-class packet id.
    pub packet: Option<u64>,
    pub faulty: Option<FaultyDigest>,
}

impl TraceRecord {
    pub fn new(
        t: SimTime,
        kind: RecordKind,
        src: u32,
        dst: u32,
        outcome: Outcome,
        bytes: u32,
    ) -> Self {
        TraceRecord {
            t,
            kind,
            src,
            dst,
            outcome,
            bytes,
            nonce: None,
            suspect: None,
            packet: None,
            faulty: None,
        }
    }

    pub fn with_round(mut self, nonce: u64, suspect: u32) -> Self {
        self.nonce = Some(nonce);
        self.suspect = Some(suspect);
        self
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t={} kind={} src={} dst={} outcome={} bytes={}",
            self.t, self.kind, self.src, self.dst, self.outcome, self.bytes
        )?;
        if let Some(n) = self.nonce {
            write!(f, " nonce={n}")?;
        }
        if let Some(s) = self.suspect {
            write!(f, " sn={s}")?;
        }
        if let Some(p) = self.packet {
            write!(f, " pkt={p}")?;
        }
        if let Some(fl) = &self.faulty {
            write!(f, " fl={fl}")?;
        }
        Ok(())
    }
}

impl FromStr for TraceRecord {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut t = None;
        let mut kind = None;
        let mut src = None;
        let mut dst = None;
        let mut outcome = None;
        let mut bytes = None;
        let mut rec_nonce = None;
        let mut rec_sn = None;
        let mut packet = None;
        let mut faulty = None;
        for tok in line.split_ascii_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| format!("token `{tok}` is not key=value"))?;
            let num = |v: &str| {
                v.parse::<u64>()
                    .map_err(|_| format!("bad number `{v}` for {k}"))
            };
            match k {
                "t" => t = Some(v.parse::<SimTime>()?),
                "kind" => kind = Some(v.parse::<RecordKind>()?),
                "src" => src = Some(num(v)? as u32),
                "dst" => dst = Some(num(v)? as u32),
                "outcome" => outcome = Some(v.parse::<Outcome>()?),
                "bytes" => bytes = Some(num(v)? as u32),
                "nonce" => rec_nonce = Some(num(v)?),
                "sn" => rec_sn = Some(num(v)? as u32),
                "pkt" => packet = Some(num(v)?),
                "fl" => faulty = Some(v.parse::<FaultyDigest>()?),
                other => return Err(format!("unknown field `{other}`")),
            }
        }
        let missing = |name: &str| format!("missing field `{name}`");
        Ok(TraceRecord {
            t: t.ok_or_else(|| missing("t"))?,
            kind: kind.ok_or_else(|| missing("kind"))?,
            src: src.ok_or_else(|| missing("src"))?,
            dst: dst.ok_or_else(|| missing("dst"))?,
            outcome: outcome.ok_or_else(|| missing("outcome"))?,
            bytes: bytes.ok_or_else(|| missing("bytes"))?,
            nonce: rec_nonce,
            suspect: rec_sn,
            packet,
            faulty,
        })
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(
        "trace truncated: line {line} is unreadable ({reason}); last valid timestamp {last_valid}"
    )]
    Corrupt {
        line: usize,
        reason: String,
        last_valid: SimTime,
    },
    #[error("trace truncated: no end record; last valid timestamp {last_valid}")]
    MissingEnd { last_valid: SimTime },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parses a whole trace. A trailing `kind=end` record is required.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    let mut out = Vec::new();
    let mut last_valid = SimTime::ZERO;
    let mut ended = false;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = line.parse().map_err(|reason| TraceError::Corrupt {
            line: i + 1,
            reason,
            last_valid,
        })?;
        last_valid = rec.t;
        ended = rec.kind == RecordKind::End;
        out.push(rec);
    }
    if !ended {
        return Err(TraceError::MissingEnd { last_valid });
    }
    Ok(out)
}

/// Consumer of trace records as the simulation emits them.
pub trait TraceSink {
    fn record(&mut self, rec: &TraceRecord);
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, rec: &TraceRecord) {
        self.push(rec.clone());
    }
}

/// Discards everything.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _rec: &TraceRecord) {}
}

/// Writes one text line per record. Write errors are kept and surfaced by
/// [`LineWriter::finish`].
pub struct LineWriter<W: Write> {
    out: W,
    error: Option<io::Error>,
}

impl<W: Write> LineWriter<W> {
    pub fn new(out: W) -> Self {
        LineWriter { out, error: None }
    }

    pub fn finish(mut self) -> io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> TraceSink for LineWriter<W> {
    fn record(&mut self, rec: &TraceRecord) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.out, "{rec}") {
                self.error = Some(e);
            }
        }
    }
}

/// Fans a record out to two sinks.
pub struct Tee<'a> {
    pub first: &'a mut dyn TraceSink,
    pub second: &'a mut dyn TraceSink,
}

impl TraceSink for Tee<'_> {
    fn record(&mut self, rec: &TraceRecord) {
        self.first.record(rec);
        self.second.record(rec);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_round_trip() {
        let mut r = TraceRecord::new(
            SimTime::from_millis(1500),
            RecordKind::Rreq,
            3,
            0,
            Outcome::Delivered,
            48,
        )
        .with_round(9, 4);
        r.faulty = Some(FaultyDigest {
            version: 2,
            members: vec![1, 8],
        });
        let line = r.to_string();
        assert_eq!(
            line,
            "t=1.500000 kind=rreq src=3 dst=0 outcome=delivered bytes=48 nonce=9 sn=4 fl=2:1,8"
        );
        assert_eq!(line.parse::<TraceRecord>().unwrap(), r);
        let mut d = TraceRecord::new(
            SimTime::ZERO,
            RecordKind::Data,
            1,
            2,
            Outcome::Originated,
            512,
        );
        d.packet = Some(77);
        assert!(d.to_string().ends_with(" pkt=77"));
        assert_eq!(d.to_string().parse::<TraceRecord>().unwrap(), d);
    }

    #[test]
    fn truncated_trace_reports_last_timestamp() {
        let text = "t=0.000000 kind=roster src=1 dst=0 outcome=honest bytes=0\n\
                    t=1.250000 kind=data src=1 dst=2 outcome=originated bytes=512\n\
                    t=1.2";
        match parse_trace(text) {
            Err(TraceError::Corrupt {
                line, last_valid, ..
            }) => {
                assert_eq!(line, 3);
                assert_eq!(last_valid, SimTime::from_millis(1250));
            }
            other => panic!("unexpected {other:?}"),
        }
        let no_end = "t=0.000000 kind=roster src=1 dst=0 outcome=honest bytes=0\n";
        assert!(matches!(
            parse_trace(no_end),
            Err(TraceError::MissingEnd { .. })
        ));
    }

    #[test]
    fn empty_faulty_digest() {
        let d: FaultyDigest = "0:".parse().unwrap();
        assert!(d.members.is_empty());
        assert_eq!(d.to_string(), "0:");
    }
}
