use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use super::FelError;

/// Simulated time in nanoseconds since the start of the run.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn as_ns(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Cycle/time conversion for one clock domain. Only frequencies whose cycle
/// time is a whole number of nanoseconds are accepted, so conversions are
/// exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Clock {
    freq_hz: u64,
    cycle_ns: u64,
}

impl Clock {
    pub fn new(freq_hz: u64) -> Result<Self, FelError> {
        if freq_hz == 0 || 1_000_000_000 % freq_hz != 0 {
            return Err(FelError::InvalidFrequency(freq_hz));
        }
        Ok(Self {
            freq_hz,
            cycle_ns: 1_000_000_000 / freq_hz,
        })
    }

    pub fn freq_hz(&self) -> u64 {
        self.freq_hz
    }

    pub fn cycle_ns(&self) -> u64 {
        self.cycle_ns
    }

    pub fn cycles(&self, cycles: u64) -> SimTime {
        SimTime(cycles * self.cycle_ns)
    }

    /// Whole cycles elapsed by `t`.
    pub fn cycles_at(&self, t: SimTime) -> u64 {
        t.0 / self.cycle_ns
    }
}
