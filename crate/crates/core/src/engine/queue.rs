use crate::time::SimTime;
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

/// A dispatched event: when it fired, its tie-break sequence number, and the
/// caller-defined payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event<P> {
    pub at: SimTime,
    pub seq: u64,
    pub payload: P,
}

/// Handle for a scheduled event, usable to cancel it before it fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, PartialEq, Eq)]
struct Entry<P> {
    at: SimTime,
    seq: u64,
    payload: P,
}

impl<P: Eq> Ord for Entry<P> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

impl<P: Eq> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-heap event queue ordered by `(fire_at, seq)`.
///
/// `seq` is a per-queue monotone counter assigned at schedule time, so
/// simultaneous events dispatch in the order they were scheduled and the
/// dispatch order is a strict total order. Scheduling in the past is engine
/// misuse and panics.
#[derive(Debug)]
pub struct EventQueue<P> {
    heap: BinaryHeap<Reverse<Entry<P>>>,
    cancelled: HashSet<u64>,
    clock: SimTime,
    next_seq: u64,
}

impl<P: Eq> EventQueue<P> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            clock: SimTime::ZERO,
            next_seq: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    /// Number of live (not cancelled) scheduled events.
    pub fn len(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: P) -> EventHandle {
        assert!(
            fire_at >= self.clock,
            "scheduled event at {} behind clock {}",
            fire_at,
            self.clock
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry {
            at: fire_at,
            seq,
            payload,
        }));
        EventHandle(seq)
    }

    pub fn schedule_in(&mut self, delay_us: u64, payload: P) -> EventHandle {
        self.schedule(self.clock + delay_us, payload)
    }

    /// Cancel a scheduled event. Cancelling one that already fired (or was
    /// already cancelled) is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        self.cancelled.insert(handle.0);
    }

    /// Pop the next event with `fire_at <= end`, advancing the clock to its
    /// fire time. When no such event remains the clock advances to `end` and
    /// `None` is returned.
    pub fn pop_until(&mut self, end: SimTime) -> Option<Event<P>> {
        while let Some(Reverse(head)) = self.heap.peek() {
            if head.at > end {
                break;
            }
            let Reverse(entry) = self.heap.pop().unwrap();
            if self.cancelled.remove(&entry.seq) {
                continue;
            }
            debug_assert!(entry.at >= self.clock);
            self.clock = entry.at;
            return Some(Event {
                at: entry.at,
                seq: entry.seq,
                payload: entry.payload,
            });
        }
        self.clock = end;
        None
    }

    /// Dispatch every event with `fire_at <= end` through `handler`, leaving
    /// the clock at `end`. Returns the dispatch count. The handler receives
    /// the queue so it can schedule follow-up events; children that land at or
    /// before `end` are dispatched in the same call.
    pub fn run_until<F: FnMut(&mut Self, Event<P>)>(
        &mut self,
        end: SimTime,
        mut handler: F,
    ) -> u64 {
        let mut dispatched = 0;
        while let Some(event) = self.pop_until(end) {
            dispatched += 1;
            handler(self, event);
        }
        dispatched
    }
}

impl<P: Eq> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}
