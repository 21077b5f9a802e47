use std::collections::VecDeque;

use super::{CpuId, SimTime};

/// One line transfer as observed by the bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusTransfer {
    pub cpu: CpuId,
    pub requested_at: SimTime,
    pub granted_at: SimTime,
    pub done_at: SimTime,
}

/// Single-transfer shared bus with round-robin arbitration.
///
/// Requests queue per CPU in FIFO order. Arbitration only happens when the
/// bus is idle, starting from `grant_pointer` and moving it one past the
/// winner.
#[derive(Debug, Clone)]
pub struct SharedBus {
    pending: Vec<VecDeque<SimTime>>,
    grant_pointer: usize,
    transfer_time: SimTime,
    in_flight: Option<BusTransfer>,
    arbitration_pending: bool,
    granted_count: u64,
    completed_busy_ns: u64,
    log: Option<Vec<BusTransfer>>,
}

impl SharedBus {
    pub fn new(num_cpus: usize, transfer_time: SimTime, record: bool) -> Self {
        Self {
            pending: vec![VecDeque::new(); num_cpus],
            grant_pointer: 0,
            transfer_time,
            in_flight: None,
            arbitration_pending: false,
            granted_count: 0,
            completed_busy_ns: 0,
            log: record.then(Vec::new),
        }
    }

    /// Queues a line fill for `cpu`. Returns true when the caller must
    /// schedule an arbitration at `now` (bus idle, none scheduled yet).
    pub fn request(&mut self, cpu: CpuId, now: SimTime) -> bool {
        self.pending[cpu].push_back(now);
        self.claim_arbitration()
    }

    fn claim_arbitration(&mut self) -> bool {
        if self.in_flight.is_none() && !self.arbitration_pending && self.has_pending() {
            self.arbitration_pending = true;
            true
        } else {
            false
        }
    }

    pub fn has_pending(&self) -> bool {
        self.pending.iter().any(|q| !q.is_empty())
    }

    /// Grants the bus to the next pending CPU in round-robin order.
    pub fn arbitrate(&mut self, now: SimTime) -> Option<BusTransfer> {
        self.arbitration_pending = false;
        if self.in_flight.is_some() {
            return None;
        }
        let n = self.pending.len();
        let cpu = (0..n)
            .map(|i| (self.grant_pointer + i) % n)
            .find(|&c| !self.pending[c].is_empty())?;
        let requested_at = self.pending[cpu].pop_front().unwrap();
        self.grant_pointer = (cpu + 1) % n;
        self.granted_count += 1;
        let t = BusTransfer {
            cpu,
            requested_at,
            granted_at: now,
            done_at: now + self.transfer_time,
        };
        self.in_flight = Some(t);
        Some(t)
    }

    /// Retires the in-flight transfer. Returns it together with whether a
    /// new arbitration must be scheduled.
    pub fn complete(&mut self) -> Option<(BusTransfer, bool)> {
        let t = self.in_flight.take()?;
        self.completed_busy_ns += (t.done_at - t.granted_at).as_ns();
        if let Some(log) = &mut self.log {
            log.push(t);
        }
        Some((t, self.claim_arbitration()))
    }

    pub fn is_idle(&self) -> bool {
        self.in_flight.is_none()
    }

    pub fn in_flight(&self) -> Option<BusTransfer> {
        self.in_flight
    }

    pub fn grant_pointer(&self) -> usize {
        self.grant_pointer
    }

    pub fn granted_count(&self) -> u64 {
        self.granted_count
    }

    pub fn transfer_time(&self) -> SimTime {
        self.transfer_time
    }

    /// Nanoseconds the bus spent transferring within `[0, horizon)`.
    pub fn busy_ns(&self, horizon: SimTime) -> u64 {
        let running = self.in_flight.map_or(0, |t| {
            t.done_at.min(horizon).saturating_sub(t.granted_at).as_ns()
        });
        self.completed_busy_ns + running
    }

    /// Completed transfers, when recording was enabled.
    pub fn transfers(&self) -> &[BusTransfer] {
        self.log.as_deref().unwrap_or(&[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simultaneous_requests_rotate() {
        let mut bus = SharedBus::new(3, SimTime::from_ns(200), true);
        let now = SimTime::ZERO;
        assert!(bus.request(2, now));
        assert!(!bus.request(0, now));
        assert!(!bus.request(1, now));
        let first = bus.arbitrate(now).unwrap();
        assert_eq!(first.cpu, 0);
        let (_, again) = bus.complete().unwrap();
        assert!(again);
        assert_eq!(bus.arbitrate(first.done_at).unwrap().cpu, 1);
        bus.complete();
        assert_eq!(bus.arbitrate(SimTime::from_ns(400)).unwrap().cpu, 2);
        assert_eq!(bus.grant_pointer(), 0);
    }

    #[test]
    fn busy_time_clips_to_horizon() {
        let mut bus = SharedBus::new(1, SimTime::from_ns(200), false);
        bus.request(0, SimTime::ZERO);
        bus.arbitrate(SimTime::from_ns(100));
        assert_eq!(bus.busy_ns(SimTime::from_ns(150)), 50);
        bus.complete();
        assert_eq!(bus.busy_ns(SimTime::from_ns(1000)), 200);
    }
}
