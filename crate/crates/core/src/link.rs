//! Abstract wireless link: range, Bernoulli loss, finite receive buffers and a
//! fixed per-hop latency in place of a PHY/MAC.

use rand::Rng;

use crate::mobility::Position;
use crate::rng::SimRng;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    pub range: f64,
    pub base_loss_prob: f64,
    /// Packets a node can hold in flight toward it; `None` means unbounded.
    pub buffer_capacity: Option<usize>,
    pub per_hop_latency: SimTime,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            range: 200.0,
            base_loss_prob: 0.01,
            buffer_capacity: Some(50),
            per_hop_latency: SimTime::from_millis(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryOutcome {
    /// Accepted; the receiver gets it after `per_hop_latency`.
    Delivered,
    LostChannel,
    DroppedBuffer,
    OutOfRange,
}

impl LinkModel {
    pub fn in_range(&self, a: &Position, b: &Position) -> bool {
        a.distance(b) <= self.range
    }

    /// Decides the fate of one hop. Draws from `rng` only when in range.
    pub fn decide(
        &self,
        src: &Position,
        dst: &Position,
        dst_buffered: usize,
        rng: &mut SimRng,
    ) -> DeliveryOutcome {
        if !self.in_range(src, dst) {
            return DeliveryOutcome::OutOfRange;
        }
        if self.base_loss_prob > 0.0 && rng.random::<f64>() < self.base_loss_prob {
            return DeliveryOutcome::LostChannel;
        }
        if self.buffer_capacity.is_some_and(|cap| dst_buffered >= cap) {
            return DeliveryOutcome::DroppedBuffer;
        }
        DeliveryOutcome::Delivered
    }
}

/// Slots (zero-based) of every node within `range` of slot `of`, ascending.
pub fn neighbors_in(positions: &[Position], of: usize, range: f64) -> Vec<usize> {
    let me = positions[of];
    positions
        .iter()
        .enumerate()
        .filter(|&(i, p)| i != of && me.distance(p) <= range)
        .map(|(i, _)| i)
        .collect()
}
