//! Signed accusations, their k-of-n aggregation, and the proof-carrying
//! faulty list.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::signature::{SignatureScheme, Token};
use crate::id::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlarmError {
    #[error("alarms disagree on suspect or epoch")]
    MixedAlarms,
    #[error("no alarms to aggregate")]
    Empty,
    #[error("aggregate against node {suspect} has {have} of {need} signatures")]
    Incomplete {
        suspect: NodeId,
        have: usize,
        need: usize,
    },
    #[error("node {accuser} holds no malicious verdict against node {suspect}")]
    NoVerdict { accuser: NodeId, suspect: NodeId },
    #[error("node {accuser} already raised an alarm against node {suspect} in epoch {epoch}")]
    Duplicate {
        accuser: NodeId,
        suspect: NodeId,
        epoch: u64,
    },
}

/// Bytes every signer of an accusation signs.
pub fn alarm_payload(suspect: NodeId, epoch: u64) -> [u8; 13] {
    let mut m = [0u8; 13];
    m[0] = b'A';
    m[1..5].copy_from_slice(&suspect.get().to_be_bytes());
    m[5..13].copy_from_slice(&epoch.to_be_bytes());
    m
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlarmMessage {
    pub suspect: NodeId,
    pub accuser: NodeId,
    pub epoch: u64,
    /// Probe round that produced the accuser's verdict.
    pub evidence_nonce: u64,
    pub signature: Token,
}

impl AlarmMessage {
    pub fn verifies(&self, scheme: &dyn SignatureScheme) -> bool {
        scheme.verify(
            self.accuser,
            &alarm_payload(self.suspect, self.epoch),
            &self.signature,
        )
    }
}

/// Signatures collected against one suspect in one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlarmAggregate {
    pub suspect: NodeId,
    pub epoch: u64,
    pub signatures: BTreeMap<NodeId, Token>,
    pub complete: bool,
}

impl AlarmAggregate {
    pub fn new(suspect: NodeId, epoch: u64) -> Self {
        AlarmAggregate {
            suspect,
            epoch,
            signatures: BTreeMap::new(),
            complete: false,
        }
    }

    /// Builds an aggregate from individually signed alarms. Returns the
    /// aggregate and how many alarms were discarded for bad signatures.
    pub fn aggregate(
        pending: &[AlarmMessage],
        scheme: &dyn SignatureScheme,
    ) -> Result<(AlarmAggregate, usize), AlarmError> {
        let first = pending.first().ok_or(AlarmError::Empty)?;
        if pending
            .iter()
            .any(|a| a.suspect != first.suspect || a.epoch != first.epoch)
        {
            return Err(AlarmError::MixedAlarms);
        }
        let mut agg = AlarmAggregate::new(first.suspect, first.epoch);
        let mut rejected = 0;
        for a in pending {
            if a.verifies(scheme) {
                agg.signatures.entry(a.accuser).or_insert(a.signature);
            } else {
                rejected += 1;
            }
        }
        agg.refresh(scheme);
        Ok((agg, rejected))
    }

    fn payload(&self) -> [u8; 13] {
        alarm_payload(self.suspect, self.epoch)
    }

    /// Number of distinct signers whose token verifies.
    pub fn valid_signers(&self, scheme: &dyn SignatureScheme) -> usize {
        let m = self.payload();
        self.signatures
            .iter()
            .filter(|(n, t)| scheme.verify(**n, &m, t))
            .count()
    }

    fn refresh(&mut self, scheme: &dyn SignatureScheme) {
        self.complete = self.signatures.len() >= scheme.threshold();
    }

    /// Adds one signer's token if it verifies and is new.
    pub fn add(&mut self, signer: NodeId, token: Token, scheme: &dyn SignatureScheme) -> bool {
        if self.signatures.contains_key(&signer) || !scheme.verify(signer, &self.payload(), &token)
        {
            return false;
        }
        self.signatures.insert(signer, token);
        self.refresh(scheme);
        true
    }

    /// Folds in another aggregate's verifying signatures. Returns `(grew, rejected)`.
    pub fn merge(
        &mut self,
        other: &AlarmAggregate,
        scheme: &dyn SignatureScheme,
    ) -> Result<(bool, usize), AlarmError> {
        if other.suspect != self.suspect || other.epoch != self.epoch {
            return Err(AlarmError::MixedAlarms);
        }
        let mut grew = false;
        let mut rejected = 0;
        for (n, t) in &other.signatures {
            if self.signatures.contains_key(n) {
                continue;
            }
            if self.add(*n, *t, scheme) {
                grew = true;
            } else {
                rejected += 1;
            }
        }
        Ok((grew, rejected))
    }

    /// Re-checks every signature rather than trusting the `complete` flag.
    pub fn verify_complete(&self, scheme: &dyn SignatureScheme) -> bool {
        self.valid_signers(scheme) >= scheme.threshold()
    }
}

/// Roster of convicted nodes; every member carries its proof.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultyList {
    members: BTreeSet<NodeId>,
    version: u64,
    proofs: BTreeMap<NodeId, AlarmAggregate>,
}

impl FaultyList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.members.contains(&n)
    }

    pub fn members(&self) -> &BTreeSet<NodeId> {
        &self.members
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn proof(&self, n: NodeId) -> Option<&AlarmAggregate> {
        self.proofs.get(&n)
    }

    pub fn proofs(&self) -> impl Iterator<Item = &AlarmAggregate> {
        self.proofs.values()
    }

    /// Adds the aggregate's suspect. Returns `Ok(true)` if it was not yet a member.
    pub fn commit(
        &mut self,
        agg: &AlarmAggregate,
        scheme: &dyn SignatureScheme,
    ) -> Result<bool, AlarmError> {
        let have = agg.valid_signers(scheme);
        if have < scheme.threshold() {
            return Err(AlarmError::Incomplete {
                suspect: agg.suspect,
                have,
                need: scheme.threshold(),
            });
        }
        if !self.members.insert(agg.suspect) {
            return Ok(false);
        }
        self.version += 1;
        self.proofs.insert(agg.suspect, agg.clone());
        Ok(true)
    }

    /// Merges proofs received from a peer. Unverifiable entries are skipped.
    /// Returns the newly added members and the number of rejected entries.
    pub fn merge<'a>(
        &mut self,
        entries: impl IntoIterator<Item = &'a AlarmAggregate>,
        scheme: &dyn SignatureScheme,
    ) -> (Vec<NodeId>, usize) {
        let mut added = vec![];
        let mut rejected = 0;
        for agg in entries {
            if self.members.contains(&agg.suspect) {
                continue;
            }
            match self.commit(agg, scheme) {
                Ok(true) => added.push(agg.suspect),
                Ok(false) => {}
                Err(_) => rejected += 1,
            }
        }
        (added, rejected)
    }

    /// Keeps only members accepted by `keep` (the neighbourhood-list mode).
    /// The version still moves forward so peers never see a regression.
    pub fn retain(&mut self, mut keep: impl FnMut(NodeId) -> bool) -> Vec<NodeId> {
        let dropped: Vec<NodeId> = self.members.iter().copied().filter(|n| !keep(*n)).collect();
        for n in &dropped {
            self.members.remove(n);
            self.proofs.remove(n);
        }
        if !dropped.is_empty() {
            self.version += 1;
        }
        dropped
    }
}
