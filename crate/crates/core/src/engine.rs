//! Deterministic discrete-event kernel.
//!
//! Events are ordered by `(fire_at, seqno)`. The sequence number is a
//! monotone insertion counter, so events sharing a timestamp are dispatched
//! in the order they were scheduled.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::time::SimTime;

/// A scheduled event. `payload` carries the target component and whatever
/// the component needs to handle it.
#[derive(Debug, Clone)]
pub struct Event<E> {
    pub fire_at: SimTime,
    pub seqno: u64,
    pub payload: E,
}

impl<E> PartialEq for Event<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seqno == other.seqno
    }
}

impl<E> Eq for Event<E> {}

impl<E> PartialOrd for Event<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// BinaryHeap is a max-heap; invert so the earliest (fire_at, seqno) pops first.
impl<E> Ord for Event<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.seqno).cmp(&(self.fire_at, self.seqno))
    }
}

#[derive(Debug)]
pub struct Scheduler<E> {
    now: SimTime,
    next_seqno: u64,
    queue: BinaryHeap<Event<E>>,
    dispatched: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_seqno: 0,
            queue: BinaryHeap::new(),
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Total number of events dispatched since creation.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Schedules `payload` at absolute time `at` and returns its sequence number.
    ///
    /// Scheduling in the past is a programming error and aborts the run.
    pub fn schedule(&mut self, at: SimTime, payload: E) -> u64 {
        assert!(
            at >= self.now,
            "event scheduled in the past: fire_at={at} now={} (seqno would be {})",
            self.now,
            self.next_seqno
        );
        let seqno = self.next_seqno;
        self.next_seqno += 1;
        self.queue.push(Event {
            fire_at: at,
            seqno,
            payload,
        });
        seqno
    }

    pub fn schedule_in(&mut self, delay: SimTime, payload: E) -> u64 {
        let at = self.now + delay;
        self.schedule(at, payload)
    }

    /// Pops the next event if it fires no later than `limit`, advancing the clock to it.
    pub fn pop_due(&mut self, limit: SimTime) -> Option<Event<E>> {
        if self.queue.peek()?.fire_at > limit {
            return None;
        }
        let ev = self.queue.pop()?;
        debug_assert!(ev.fire_at >= self.now);
        self.now = ev.fire_at;
        self.dispatched += 1;
        Some(ev)
    }

    /// Dispatches every event with `fire_at <= t_end` to `handler`, then sets
    /// the clock to `t_end`. Handlers may schedule further events.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, Event<E>),
    {
        assert!(
            t_end >= self.now,
            "run_until({t_end}) is before now ({})",
            self.now
        );
        let mut count = 0;
        while let Some(ev) = self.pop_due(t_end) {
            handler(self, ev);
            count += 1;
        }
        self.now = t_end;
        count
    }
}
