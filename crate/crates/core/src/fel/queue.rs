use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::{FelError, SimTime};

struct Entry<K> {
    time: SimTime,
    seq: u64,
    kind: K,
}

impl<K> PartialEq for Entry<K> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl<K> Eq for Entry<K> {}

impl<K> Ord for Entry<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .cmp(&other.time)
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

impl<K> PartialOrd for Entry<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-heap of events ordered by `(time, seq)`; `seq` is assigned at
/// insertion so same-time events pop in insertion order.
pub struct EventQueue<K> {
    heap: BinaryHeap<Reverse<Entry<K>>>,
    next_seq: u64,
    now: SimTime,
    processed: u64,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: SimTime::ZERO,
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn push(&mut self, time: SimTime, kind: K) -> Result<u64, FelError> {
        if time < self.now {
            return Err(FelError::EventInPast {
                now: self.now,
                at: time,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry { time, seq, kind }));
        Ok(seq)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    /// Pops the next event if it is due no later than `limit`.
    pub fn pop_until(&mut self, limit: SimTime) -> Option<(SimTime, K)> {
        if self.peek_time()? > limit {
            return None;
        }
        let Reverse(e) = self.heap.pop()?;
        self.now = e.time;
        self.processed += 1;
        Some((e.time, e.kind))
    }

    /// Moves the clock forward without processing anything.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_then_insertion_order() {
        let mut q = EventQueue::new();
        q.push(SimTime::from_ns(5), 'a').unwrap();
        q.push(SimTime::from_ns(1), 'b').unwrap();
        q.push(SimTime::from_ns(5), 'c').unwrap();
        q.push(SimTime::from_ns(1), 'd').unwrap();
        let order: Vec<char> = std::iter::from_fn(|| q.pop_until(SimTime::MAX))
            .map(|(_, k)| k)
            .collect();
        assert_eq!(order, vec!['b', 'd', 'a', 'c']);
    }

    #[test]
    fn past_events_rejected() {
        let mut q = EventQueue::new();
        q.push(SimTime::from_ns(10), ()).unwrap();
        q.pop_until(SimTime::MAX);
        assert_eq!(
            q.push(SimTime::from_ns(9), ()),
            Err(FelError::EventInPast {
                now: SimTime::from_ns(10),
                at: SimTime::from_ns(9)
            })
        );
    }

    #[test]
    fn limit_is_inclusive() {
        let mut q = EventQueue::new();
        q.push(SimTime::from_ns(10), ()).unwrap();
        assert!(q.pop_until(SimTime::from_ns(9)).is_none());
        assert!(q.pop_until(SimTime::from_ns(10)).is_some());
    }
}
