//! Pluggable signature schemes for alarm messages.

use sha2::{Digest, Sha256};

use crate::id::NodeId;
use crate::rng::{RngStreams, StreamId};
use rand::RngCore;

pub type Token = [u8; 16];

/// Signing interface used by the alarm protocol. `threshold` is `k`, the number
/// of distinct signers that makes an accusation authoritative.
pub trait SignatureScheme {
    fn sign(&self, signer: NodeId, message: &[u8]) -> Token;
    fn verify(&self, signer: NodeId, message: &[u8], token: &Token) -> bool;
    fn threshold(&self) -> usize;
}

/// Simulation-grade scheme: each node holds a secret drawn from the run seed
/// and a token is a truncated SHA-256 over `secret || message`. Only the
/// engine holds the secrets and it signs on a node's behalf exclusively from
/// that node's own handlers.
pub struct KeyedDigestScheme {
    secrets: Vec<[u8; 32]>,
    k: usize,
}

impl KeyedDigestScheme {
    pub fn new(node_count: usize, k: usize, streams: &RngStreams) -> Self {
        let mut rng = streams.stream(StreamId::Keys);
        let secrets = (0..node_count)
            .map(|_| {
                let mut s = [0u8; 32];
                rng.fill_bytes(&mut s);
                s
            })
            .collect();
        KeyedDigestScheme { secrets, k }
    }

    fn mac(&self, signer: NodeId, message: &[u8]) -> Option<Token> {
        let secret = self.secrets.get(signer.index())?;
        let mut h = Sha256::new();
        h.update(secret);
        h.update(signer.get().to_be_bytes());
        h.update(message);
        let digest = h.finalize();
        let mut out = [0u8; 16];
        out.copy_from_slice(&digest[..16]);
        Some(out)
    }
}

impl SignatureScheme for KeyedDigestScheme {
    fn sign(&self, signer: NodeId, message: &[u8]) -> Token {
        self.mac(signer, message)
            .expect("signer must be a registered node")
    }

    fn verify(&self, signer: NodeId, message: &[u8], token: &Token) -> bool {
        self.mac(signer, message).is_some_and(|t| &t == token)
    }

    fn threshold(&self) -> usize {
        self.k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::id::nid;

    #[test]
    fn sign_verify_and_forgery() {
        let s = KeyedDigestScheme::new(10, 3, &RngStreams::new(1));
        let t = s.sign(nid(4), b"alarm 1");
        assert!(s.verify(nid(4), b"alarm 1", &t));
        assert!(!s.verify(nid(5), b"alarm 1", &t));
        assert!(!s.verify(nid(4), b"alarm 2", &t));
        assert!(!s.verify(nid(40), b"alarm 1", &t));
        assert_eq!(s.threshold(), 3);
    }

    #[test]
    fn keys_depend_on_seed() {
        let a = KeyedDigestScheme::new(3, 3, &RngStreams::new(1));
        let b = KeyedDigestScheme::new(3, 3, &RngStreams::new(2));
        assert_ne!(a.sign(nid(1), b"m"), b.sign(nid(1), b"m"));
    }
}
