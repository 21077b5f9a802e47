use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::FelError;

/// Rational hit rate `hits / period`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HitRate {
    hits: u32,
    period: u32,
}

impl HitRate {
    pub fn new(hits: u32, period: u32) -> Result<Self, FelError> {
        if period == 0 || hits > period {
            return Err(FelError::InvalidHitRate(format!("{hits}/{period}")));
        }
        Ok(Self { hits, period })
    }

    pub fn hits(&self) -> u32 {
        self.hits
    }

    pub fn period(&self) -> u32 {
        self.period
    }
}

impl Default for HitRate {
    fn default() -> Self {
        Self { hits: 3, period: 4 }
    }
}

impl fmt::Display for HitRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.hits, self.period)
    }
}

impl FromStr for HitRate {
    type Err = FelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FelError::InvalidHitRate(s.to_string());
        let (p, q) = s.split_once('/').ok_or_else(bad)?;
        let p = p.trim().parse().map_err(|_| bad())?;
        let q = q.trim().parse().map_err(|_| bad())?;
        HitRate::new(p, q).map_err(|_| bad())
    }
}

impl Serialize for HitRate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HitRate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    Hit,
    Miss,
}

/// Private L1 cache modeled by a deterministic hit pattern: within every
/// window of `q` accesses the first `p` hit and the rest miss.
#[derive(Debug, Clone)]
pub struct CacheModel {
    size_bits: u64,
    line_bits: u64,
    hit_rate: HitRate,
    access_count: u64,
    hit_count: u64,
    phase: u32,
}

impl CacheModel {
    pub fn new(size_bits: u64, line_bits: u64, hit_rate: HitRate) -> Self {
        Self {
            size_bits,
            line_bits,
            hit_rate,
            access_count: 0,
            hit_count: 0,
            phase: 0,
        }
    }

    /// Reads and writes share one phase counter.
    pub fn access(&mut self, _kind: AccessKind) -> CacheOutcome {
        let hit = self.phase < self.hit_rate.hits;
        self.phase = (self.phase + 1) % self.hit_rate.period;
        self.access_count += 1;
        if hit {
            self.hit_count += 1;
            CacheOutcome::Hit
        } else {
            CacheOutcome::Miss
        }
    }

    pub fn access_count(&self) -> u64 {
        self.access_count
    }

    pub fn hit_count(&self) -> u64 {
        self.hit_count
    }

    pub fn miss_count(&self) -> u64 {
        self.access_count - self.hit_count
    }

    pub fn hit_rate(&self) -> HitRate {
        self.hit_rate
    }

    pub fn lines(&self) -> u64 {
        self.size_bits / self.line_bits.max(1)
    }
}
