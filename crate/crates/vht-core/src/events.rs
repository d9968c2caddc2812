//! Discrete-event scheduler.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("event scheduled at {at} is in the past (now = {now})")]
    InThePast { at: SimTime, now: SimTime },
}

#[derive(Debug)]
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
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Scheduled<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Time first, then insertion sequence: FIFO among ties.
        self.at.cmp(&other.at).then(self.seq.cmp(&other.seq))
    }
}

/// Events fire in nondecreasing time order; ties break by insertion order.
/// `now` never decreases.
#[derive(Debug)]
pub struct EventQueue<E> {
    pending: BinaryHeap<Reverse<Scheduled<E>>>,
    now: SimTime,
    next_seq: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            pending: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_seq: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    /// Schedules `event` at time `at`. Scheduling in the past is a contract
    /// violation reported as an error, never silently reordered.
    pub fn schedule(&mut self, at: SimTime, event: E) -> Result<(), ScheduleError> {
        if at < self.now {
            return Err(ScheduleError::InThePast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.push(Reverse(Scheduled { at, seq, event }));
        Ok(())
    }

    /// Pops the next event due at or before `t_end`, advancing `now` to its
    /// timestamp. Returns None when nothing is due (without touching `now`,
    /// so the caller decides when the run is over).
    pub fn pop_due(&mut self, t_end: SimTime) -> Option<(SimTime, E)> {
        match self.pending.peek() {
            Some(Reverse(s)) if s.at <= t_end => {
                let Reverse(s) = self.pending.pop().expect("peeked");
                self.now = s.at;
                Some((s.at, s.event))
            }
            _ => None,
        }
    }

    /// Dispatches every event with time <= `t_end` to `handler` in order, then
    /// sets `now = t_end`. The handler may schedule further events (including
    /// for the current instant).
    pub fn run_until(&mut self, t_end: SimTime, mut handler: impl FnMut(&mut Self, SimTime, E)) {
        while let Some((t, ev)) = self.pop_due(t_end) {
            handler(self, t, ev);
        }
        self.now = t_end;
    }
}
