use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::config::{ConfigError, RunConfig};
use crate::fel::MetricsReport;
use crate::rel::PolicyKind;
use crate::sim::{SimError, Simulation};
use crate::workloads::{build_workload, AppSpec, WorkloadError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("run {run} (seed {seed}): {source}")]
    Sim {
        run: usize,
        seed: u64,
        source: SimError,
    },
    #[error("cannot write {path}: {source}")]
    Output {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// 1 for configuration problems, 2 for failures during simulation or
    /// output.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Workload(WorkloadError::Fel(_) | WorkloadError::Rel(_)) => 2,
            Self::Workload(_) => 1,
            Self::Sim { .. } | Self::Output { .. } => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run: usize,
    pub seed: u64,
    pub report: MetricsReport,
    pub wall: Duration,
}

/// All runs of one policy.
#[derive(Debug, Clone)]
pub struct SummaryReport {
    pub policy: PolicyKind,
    pub apps: Vec<Arc<AppSpec>>,
    pub runs: Vec<RunOutcome>,
}

impl SummaryReport {
    /// Mean CPU load over all CPUs and runs as an exact ratio of cycles.
    pub fn mean_load_ratio(&self) -> (u128, u128) {
        let mut busy = 0u128;
        let mut total = 0u128;
        for r in &self.runs {
            for c in &r.report.cpus {
                busy += u128::from(c.busy_cycles);
                total += u128::from(c.total_cycles());
            }
        }
        (busy, total)
    }

    pub fn mean_load(&self) -> f64 {
        let (b, t) = self.mean_load_ratio();
        if t == 0 {
            0.0
        } else {
            b as f64 / t as f64
        }
    }

    /// Total cache accesses summed over runs; divide by the run count for
    /// the mean.
    pub fn cache_accesses_sum(&self) -> u128 {
        self.runs
            .iter()
            .map(|r| u128::from(r.report.total_cache_accesses()))
            .sum()
    }

    pub fn mean_cache_accesses(&self) -> f64 {
        self.cache_accesses_sum() as f64 / self.runs.len().max(1) as f64
    }

    pub fn bus_load_ratio(&self) -> (u128, u128) {
        self.runs.iter().fold((0, 0), |(b, t), r| {
            (
                b + u128::from(r.report.bus.busy_cycles),
                t + u128::from(r.report.bus.total_cycles),
            )
        })
    }

    pub fn wall(&self) -> Duration {
        self.runs.iter().map(|r| r.wall).sum()
    }
}

pub fn build_apps(cfg: &RunConfig) -> Result<Vec<Arc<AppSpec>>, ExperimentError> {
    cfg.workloads
        .iter()
        .map(|w| Ok(Arc::new(build_workload(w, &cfg.platform)?)))
        .collect()
}

/// Executes `cfg.runs` independent simulations of one policy on seeds
/// `seed, seed + 1, ...`, in parallel.
pub fn run_policy(
    cfg: &RunConfig,
    policy: PolicyKind,
    apps: &[Arc<AppSpec>],
) -> Result<SummaryReport, ExperimentError> {
    let horizon = cfg.sim_time();
    let results: Vec<Result<RunOutcome, ExperimentError>> = thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.runs)
            .map(|run| {
                let seed = cfg.seed.wrapping_add(run as u64);
                let apps = apps.to_vec();
                s.spawn(move || {
                    let start = Instant::now();
                    let fail = |source| ExperimentError::Sim { run, seed, source };
                    let mut sim =
                        Simulation::new(&cfg.platform, apps, policy, cfg.sim_options(seed))
                            .map_err(fail)?;
                    let report = sim.run_until(horizon).map_err(fail)?;
                    Ok(RunOutcome {
                        run,
                        seed,
                        report,
                        wall: start.elapsed(),
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    Ok(SummaryReport {
        policy,
        apps: apps.to_vec(),
        runs: results.into_iter().collect::<Result<_, _>>()?,
    })
}

/// Runs the configured policy.
pub fn run_experiment(cfg: &RunConfig) -> Result<SummaryReport, ExperimentError> {
    cfg.validate()?;
    let apps = build_apps(cfg)?;
    run_policy(cfg, cfg.policy_kind()?, &apps)
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub columns: Vec<SummaryReport>,
}

/// Runs every listed policy on the same seeds and workloads.
pub fn compare_policies(
    cfg: &RunConfig,
    policies: &[PolicyKind],
) -> Result<Comparison, ExperimentError> {
    cfg.validate()?;
    let apps = build_apps(cfg)?;
    let columns = policies
        .iter()
        .map(|&p| run_policy(cfg, p, &apps))
        .collect::<Result<_, _>>()?;
    Ok(Comparison { columns })
}
