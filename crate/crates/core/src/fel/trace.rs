use serde::{Deserialize, Serialize};

use super::FelError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSegment {
    pub compute_cycles: u64,
    pub mem_reads: u64,
    pub mem_writes: u64,
}

impl TraceSegment {
    pub fn compute(cycles: u64) -> Self {
        Self {
            compute_cycles: cycles,
            ..Self::default()
        }
    }
}

/// Non-empty sequence of segments replayed by one CPU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace(Vec<TraceSegment>);

impl Trace {
    pub fn new(segments: Vec<TraceSegment>) -> Result<Self, FelError> {
        if segments.is_empty() {
            return Err(FelError::EmptyTrace);
        }
        Ok(Self(segments))
    }

    pub fn segments(&self) -> &[TraceSegment] {
        &self.0
    }

    pub fn compute_cycles(&self) -> u64 {
        self.0.iter().map(|s| s.compute_cycles).sum()
    }

    pub fn mem_accesses(&self) -> u64 {
        self.0.iter().map(|s| s.mem_reads + s.mem_writes).sum()
    }
}
