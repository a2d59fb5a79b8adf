//! Event queue with a deterministic total order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("event scheduled at {at} but the clock is already at {now}")]
    ScheduledInPast { at: SimTime, now: SimTime },
    #[error("unknown node id {0}")]
    UnknownNode(u32),
}

struct Scheduled<E> {
    at: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    // Reversed so the max-heap pops the earliest (at, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at
            .cmp(&self.at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Virtual clock plus pending events. Equal timestamps fire in insertion order.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Scheduled<E>>,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
        }
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn schedule(&mut self, at: SimTime, event: E) -> Result<(), EngineError> {
        if at < self.now {
            return Err(EngineError::ScheduledInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Scheduled { at, seq, event });
        Ok(())
    }

    /// Schedules `delay` after the current clock; never in the past.
    pub fn schedule_in(&mut self, delay: SimTime, event: E) {
        let at = self.now + delay;
        self.schedule(at, event)
            .expect("a non-negative delay cannot land in the past");
    }

    /// Pops the next event due at or before `end`, advancing the clock to it.
    pub fn pop_until(&mut self, end: SimTime) -> Option<(SimTime, E)> {
        if self.queue.peek().is_some_and(|s| s.at <= end) {
            let s = self.queue.pop().expect("peeked");
            self.now = s.at;
            Some((s.at, s.event))
        } else {
            None
        }
    }

    /// Moves the clock forward to `t` if nothing earlier is pending.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }

    /// Processes every event with `fire_at <= end`, then sets the clock to `end`.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F)
    where
        F: FnMut(&mut Self, SimTime, E),
    {
        while let Some((at, ev)) = self.pop_until(end) {
            handler(self, at, ev);
        }
        self.advance_to(end);
    }
}
