//! Functional execution layer: a deterministic discrete-event model of CPUs
//! with private hit-ratio caches behind one round-robin shared bus.
//!
//! All timing is integer nanoseconds and integer cycles. The layer does not
//! own an event queue; [`Fel::handle`] consumes [`FelEvent`]s and leaves the
//! events it wants scheduled in an outbox that the driving loop drains.

mod bus;
mod cache;
mod kernel;
mod metrics;
mod platform;
mod queue;
mod time;
mod trace;

use thiserror::Error;

pub use bus::{BusTransfer, SharedBus};
pub use cache::{AccessKind, CacheModel, CacheOutcome, HitRate};
pub use kernel::Kernel;
pub use metrics::{
    cpu_load, AllocationRecord, BusMetrics, CpuMetrics, EventRecord, IterationRecord, MetricsReport,
};
pub use platform::{
    BusConfig, CacheConfig, Cpu, CpuState, Fel, FelEvent, PlatformConfig, TraceCompletion,
};
pub use queue::EventQueue;
pub use time::{Clock, SimTime};
pub use trace::{Trace, TraceSegment};

pub type CpuId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FelError {
    #[error("event scheduled at {at} before current time {now}")]
    EventInPast { now: SimTime, at: SimTime },
    #[error("CPU {0} is busy")]
    CpuBusy(CpuId),
    #[error("no CPU {0}")]
    UnknownCpu(CpuId),
    #[error("trace has no segments")]
    EmptyTrace,
    #[error("invalid hit rate `{0}`, expected \"p/q\" with 0 <= p <= q and q > 0")]
    InvalidHitRate(String),
    #[error("frequency {0} Hz does not give an integral cycle time in ns")]
    InvalidFrequency(u64),
    #[error("invalid platform: {0}")]
    InvalidPlatform(String),
}
