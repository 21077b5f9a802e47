use std::collections::BTreeMap;

use super::{CpuId, FelError, SimTime};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpuMetrics {
    pub cpu_id: CpuId,
    pub busy_cycles: u64,
    pub idle_cycles: u64,
    pub cache_accesses: u64,
    pub cache_hits: u64,
}

impl CpuMetrics {
    pub fn total_cycles(&self) -> u64 {
        self.busy_cycles + self.idle_cycles
    }

    pub fn load(&self) -> f64 {
        match self.total_cycles() {
            0 => 0.0,
            t => self.busy_cycles as f64 / t as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BusMetrics {
    pub transfers: u64,
    pub busy_cycles: u64,
    pub total_cycles: u64,
}

impl BusMetrics {
    pub fn load(&self) -> f64 {
        match self.total_cycles {
            0 => 0.0,
            t => self.busy_cycles as f64 / t as f64,
        }
    }
}

/// One claim handed out by the resource manager.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationRecord {
    pub time: SimTime,
    pub app_id: String,
    pub iteration: u64,
    pub requested_min: usize,
    pub requested_max: usize,
    pub granted: usize,
    pub cpus: Vec<CpuId>,
    /// Number of requests decided together at this timestamp.
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationRecord {
    pub app_id: String,
    pub iteration: u64,
    pub triggered_at: SimTime,
    pub finished_at: SimTime,
    pub claim_size: usize,
}

impl IterationRecord {
    pub fn latency(&self) -> SimTime {
        self.finished_at - self.triggered_at
    }
}

/// Row of the run's event log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub time: SimTime,
    pub kind: &'static str,
    pub context: Option<u64>,
    pub app_id: Option<String>,
    pub node: Option<String>,
    pub cpus: Vec<CpuId>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub horizon: SimTime,
    pub cpus: Vec<CpuMetrics>,
    pub bus: BusMetrics,
    pub allocations: Vec<AllocationRecord>,
    pub iterations: Vec<IterationRecord>,
    pub skipped: BTreeMap<String, u64>,
    pub events: Vec<EventRecord>,
    /// Contexts still executing at the horizon.
    pub in_flight: Vec<u64>,
    /// Findings of the online claim checker; empty on a correct run.
    pub violations: Vec<String>,
    pub events_processed: u64,
}

impl MetricsReport {
    pub fn average_load(&self) -> f64 {
        if self.cpus.is_empty() {
            return 0.0;
        }
        self.cpus.iter().map(CpuMetrics::load).sum::<f64>() / self.cpus.len() as f64
    }

    pub fn total_cache_accesses(&self) -> u64 {
        self.cpus.iter().map(|c| c.cache_accesses).sum()
    }
}

pub fn cpu_load(report: &MetricsReport, cpu: CpuId) -> Result<f64, FelError> {
    report
        .cpus
        .iter()
        .find(|c| c.cpu_id == cpu)
        .map(CpuMetrics::load)
        .ok_or(FelError::UnknownCpu(cpu))
}
