//! Ordered event store and virtual clock.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use super::time::{SimDuration, SimTime};
use crate::error::{Error, Result};

/// Identifier of the node or module an event is addressed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: EntityId,
    pub payload: P,
}

impl<P> Event<P> {
    pub fn id(&self) -> EventId {
        EventId(self.seq)
    }
}

struct Entry<P>(Event<P>);

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.fire_at == other.0.fire_at && self.0.seq == other.0.seq
    }
}

impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

/// Event queue dispatching in `(fire_at, seq)` order.
pub struct EventQueue<P> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Entry<P>>,
    live: HashSet<u64>,
    cancelled: HashSet<u64>,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            live: HashSet::new(),
            cancelled: HashSet::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.live.len()
    }

    pub fn schedule(&mut self, fire_at: SimTime, target: EntityId, payload: P) -> Result<EventId> {
        if fire_at < self.now {
            return Err(Error::PastEvent {
                at: fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.live.insert(seq);
        self.heap.push(Entry(Event {
            fire_at,
            seq,
            target,
            payload,
        }));
        Ok(EventId(seq))
    }

    /// Schedules `delay` after the current clock; cannot fail.
    pub fn schedule_in(&mut self, delay: SimDuration, target: EntityId, payload: P) -> EventId {
        self.schedule(self.now + delay, target, payload)
            .expect("relative schedule is never in the past")
    }

    /// Returns false if the event already dispatched or was cancelled.
    pub fn cancel(&mut self, id: EventId) -> bool {
        if !self.live.remove(&id.0) {
            return false;
        }
        self.cancelled.insert(id.0)
    }

    /// Pops the next live event with `fire_at <= t_end`, advancing the clock.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<P>> {
        while let Some(top) = self.heap.peek() {
            if top.0.fire_at > t_end {
                return None;
            }
            let Entry(ev) = self.heap.pop().expect("peeked");
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            self.live.remove(&ev.seq);
            self.now = ev.fire_at;
            return Some(ev);
        }
        None
    }

    /// Dispatches every event due by `t_end` through `handler`, then moves
    /// the clock to `t_end`. Returns the number of events dispatched.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> Result<usize>
    where
        F: FnMut(&mut Self, Event<P>),
    {
        if t_end < self.now {
            return Err(Error::PastHorizon {
                target: t_end,
                now: self.now,
            });
        }
        let mut dispatched = 0;
        while let Some(ev) = self.pop_until(t_end) {
            dispatched += 1;
            handler(self, ev);
        }
        self.now = t_end;
        Ok(dispatched)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: EntityId = EntityId(0);

    #[test]
    fn zero_delay_event_keeps_clock() {
        let mut q: EventQueue<()> = EventQueue::new();
        q.run_until(SimTime::from_us(5), |_, _| {}).unwrap();
        let id = q.schedule(q.now(), T, ()).unwrap();
        assert_eq!(id, EventId(0));
        assert_eq!(q.now(), SimTime::from_us(5));
    }

    #[test]
    fn same_time_events_dispatch_in_schedule_order() {
        let mut q = EventQueue::new();
        let t = SimTime::from_us(10);
        for k in 0..5u32 {
            q.schedule(t, EntityId(k), k).unwrap();
        }
        let mut order = Vec::new();
        q.run_until(t, |_, ev| order.push(ev.payload)).unwrap();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn past_schedule_rejected() {
        let mut q: EventQueue<()> = EventQueue::new();
        q.run_until(SimTime::from_ns(100), |_, _| {}).unwrap();
        let err = q.schedule(SimTime::from_ns(99), T, ()).unwrap_err();
        assert!(matches!(err, Error::PastEvent { .. }));
    }

    #[test]
    fn empty_queue_dispatches_nothing() {
        let mut q: EventQueue<()> = EventQueue::new();
        let n = q.run_until(SimTime::from_ms(1_000), |_, _| {}).unwrap();
        assert_eq!(n, 0);
        assert_eq!(q.now(), SimTime::from_ms(1_000));
    }

    #[test]
    fn only_due_events_dispatch() {
        let mut q = EventQueue::new();
        for us in [1, 2, 3, 50] {
            q.schedule(SimTime::from_us(us), T, us).unwrap();
        }
        let n = q.run_until(SimTime::from_us(10), |_, _| {}).unwrap();
        assert_eq!(n, 3);
        assert_eq!(q.now(), SimTime::from_us(10));
        assert_eq!(q.pending(), 1);
    }

    #[test]
    fn run_until_rejects_past_horizon() {
        let mut q: EventQueue<()> = EventQueue::new();
        q.run_until(SimTime::from_us(10), |_, _| {}).unwrap();
        assert!(q.run_until(SimTime::from_us(9), |_, _| {}).is_err());
    }

    #[test]
    fn cancelled_event_never_dispatches() {
        let mut q = EventQueue::new();
        let a = q.schedule(SimTime::from_us(1), T, "a").unwrap();
        q.schedule(SimTime::from_us(2), T, "b").unwrap();
        assert!(q.cancel(a));
        assert!(!q.cancel(a));
        let mut seen = Vec::new();
        q.run_until(SimTime::from_us(5), |_, ev| seen.push(ev.payload))
            .unwrap();
        assert_eq!(seen, vec!["b"]);
        assert!(!q.cancel(a));
    }

    #[test]
    fn handler_can_schedule_followups() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::ZERO, T, 0u32).unwrap();
        let mut trace = Vec::new();
        q.run_until(SimTime::from_us(100), |q, ev| {
            trace.push((ev.fire_at, ev.payload));
            if ev.payload < 4 {
                q.schedule_in(SimDuration::from_us(9), T, ev.payload + 1);
            }
        })
        .unwrap();
        assert_eq!(trace.len(), 5);
        assert!(trace.windows(2).all(|w| w[0].0 <= w[1].0));
        assert_eq!(trace[4].0, SimTime::from_us(36));
    }
}
