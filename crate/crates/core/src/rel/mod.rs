//! Resource-aware execution layer: one executor per application interpreting
//! its AIR, plus the central resource manager that answers `get_resource`
//! with a candidate set, carves claims out of it under a policy, and
//! restores reservation state on release.

mod executor;
mod manager;
mod policy;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::fel::{CpuId, SimTime};

pub use executor::{Action, Executor, ExecutorEvent, Phase};
pub use manager::{allocate_batch, get_resource, ResourceManager};
pub use policy::{first_fit, policy_load, policy_scalability, Policy, PolicyKind};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AppId(Arc<str>);

impl AppId {
    pub fn new(id: &str) -> Self {
        Self(Arc::from(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for AppId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

impl fmt::Display for AppId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RelError {
    #[error("CPU {cpu} already reserved by `{owner}`")]
    AlreadyReserved { cpu: CpuId, owner: AppId },
    #[error("grant of {grant} exceeds {available} candidates or cap {cap}")]
    GrantOutOfRange {
        grant: usize,
        available: usize,
        cap: usize,
    },
    #[error("claim of `{0}` is not live")]
    ClaimNotLive(AppId),
    #[error("CPU {0} is still executing")]
    CpuStillBusy(CpuId),
    #[error("no curve for `{0}`")]
    MissingCurve(AppId),
    #[error("invalid curve for `{app}`: {reason}")]
    InvalidCurve { app: AppId, reason: String },
    #[error("executor of `{app}` got {event} while {phase}")]
    ProtocolViolation {
        app: AppId,
        event: String,
        phase: String,
    },
    #[error(transparent)]
    Air(#[from] crate::air::AirError),
    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),
}

/// What one application asks for at a `get_resource` node.
#[derive(Debug, Clone, PartialEq)]
pub struct Demand {
    pub app_id: AppId,
    pub min_cpus: usize,
    pub max_cpus: usize,
    pub max_load: Option<f64>,
}

/// CPUs satisfying a demand, ascending and duplicate free.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CandidateSet {
    resources: Vec<CpuId>,
}

impl CandidateSet {
    pub fn new(mut resources: Vec<CpuId>) -> Self {
        resources.sort_unstable();
        resources.dedup();
        Self { resources }
    }

    pub fn resources(&self) -> &[CpuId] {
        &self.resources
    }

    pub fn len(&self) -> usize {
        self.resources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resources.is_empty()
    }

    pub fn contains(&self, cpu: CpuId) -> bool {
        self.resources.binary_search(&cpu).is_ok()
    }
}

/// CPUs exclusively reserved for one application iteration. May be empty
/// when the demand could not be met.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Claim {
    pub app_id: AppId,
    pub resources: Vec<CpuId>,
    pub granted_at: SimTime,
    pub iteration: u64,
}

impl Claim {
    pub fn empty(app_id: AppId, granted_at: SimTime, iteration: u64) -> Self {
        Self {
            app_id,
            resources: Vec::new(),
            granted_at,
            iteration,
        }
    }

    pub fn size(&self) -> usize {
        self.resources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resources.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceStatus {
    pub cpu_id: CpuId,
    pub reserved_by: Option<AppId>,
    pub recent_load: f64,
}

/// Speedup over CPU count, `speedup[n - 1]` for `n` CPUs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalabilityCurve {
    app_id: AppId,
    speedup: Vec<f64>,
}

impl ScalabilityCurve {
    pub fn new(app_id: AppId, speedup: Vec<f64>) -> Result<Self, RelError> {
        let bad = |reason: &str| RelError::InvalidCurve {
            app: app_id.clone(),
            reason: reason.to_string(),
        };
        if speedup.first() != Some(&1.0) {
            return Err(bad("speedup(1) must be exactly 1"));
        }
        if speedup.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(bad("speedups must be positive"));
        }
        if speedup.windows(2).any(|w| w[1] < w[0]) {
            return Err(bad("speedup must be non-decreasing"));
        }
        Ok(Self { app_id, speedup })
    }

    pub fn app_id(&self) -> &AppId {
        &self.app_id
    }

    /// Speedup on `n` CPUs; zero CPUs give zero. Beyond the tabulated range
    /// the last value holds.
    pub fn at(&self, n: usize) -> f64 {
        match n {
            0 => 0.0,
            n => self.speedup[(n - 1).min(self.speedup.len() - 1)],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.speedup
    }
}

/// Average utilization of the claimed CPUs when the application runs
/// alone, `load[n - 1]` for `n` CPUs.
#[derive(Debug, Clone, PartialEq)]
pub struct StandaloneLoadCurve {
    app_id: AppId,
    load: Vec<f64>,
}

impl StandaloneLoadCurve {
    pub fn new(app_id: AppId, load: Vec<f64>) -> Result<Self, RelError> {
        if load.is_empty() || load.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(RelError::InvalidCurve {
                app: app_id,
                reason: "loads must lie in [0, 1]".into(),
            });
        }
        Ok(Self { app_id, load })
    }

    pub fn app_id(&self) -> &AppId {
        &self.app_id
    }

    pub fn at(&self, n: usize) -> f64 {
        match n {
            0 => 0.0,
            n => self.load[(n - 1).min(self.load.len() - 1)],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.load
    }
}
