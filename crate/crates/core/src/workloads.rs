//! Bundled periodic applications and the synthetic trace generator.
//!
//! Each application is an AIR plus a trace table keyed by `(trace_ref,
//! claim_size)`. Scalability and standalone-load curves are not free
//! parameters: they are measured by replaying the table on an otherwise
//! idle platform.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::air::{parse_air, reachable_claim_sizes, validate_air, AirError, AirGraph, NodeKind};
use crate::fel::{FelError, Kernel, PlatformConfig, SimTime, Trace, TraceSegment};
use crate::rel::{AppId, Demand, RelError, ScalabilityCurve, StandaloneLoadCurve};

const AUDIO_EQ_AIR: &str = include_str!("../airs/audio_eq.json");
const CORNER_DETECTION_AIR: &str = include_str!("../airs/corner_detection.json");

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("workload `{app}`: {field} {reason}")]
    ConfigOutOfRange {
        app: String,
        field: &'static str,
        reason: String,
    },
    #[error("workload `{app}`: cannot read AIR {path}: {source}")]
    Io {
        app: String,
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("workload `{app}`: {source}")]
    Air { app: String, source: AirError },
    #[error("workload `{app}`: AIR rejected: {}", violations.join("; "))]
    InvalidAir {
        app: String,
        violations: Vec<String>,
    },
    #[error("workload `{app}`: AIR has no get_resource node")]
    NoDemand { app: String },
    #[error(transparent)]
    Fel(#[from] FelError),
    #[error(transparent)]
    Rel(#[from] RelError),
}

/// Parameters of one Amdahl-style synthetic workload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceParams {
    pub total_work_cycles: u64,
    pub parallel_fraction: f64,
    pub mem_accesses_per_kcycle: u64,
    pub segment_count: usize,
}

fn split(total: u64, parts: usize) -> impl Iterator<Item = u64> {
    let parts = parts as u64;
    (0..parts).map(move |i| total / parts + u64::from(i < total % parts))
}

/// One trace per CPU. The parallel share is split evenly, remainders to the
/// lowest CPUs, and the serial share runs on CPU 0. Memory accesses follow
/// compute at `mem_accesses_per_kcycle`, three reads per write.
pub fn synth_trace(params: &TraceParams, n_cpus: usize) -> Vec<Trace> {
    let n = n_cpus.max(1);
    let w = params.total_work_cycles;
    let parallel = ((w as f64 * params.parallel_fraction).round() as u64).min(w);
    let serial = w - parallel;
    let segs = params.segment_count.max(1);
    split(parallel, n)
        .enumerate()
        .map(|(cpu, share)| {
            let cycles = share + if cpu == 0 { serial } else { 0 };
            let accesses = cycles * params.mem_accesses_per_kcycle / 1000;
            let writes = accesses / 4;
            let reads = accesses - writes;
            let segments = split(cycles, segs)
                .zip(split(reads, segs))
                .zip(split(writes, segs))
                .map(|((c, r), wr)| TraceSegment {
                    compute_cycles: c,
                    mem_reads: r,
                    mem_writes: wr,
                })
                .collect();
            Trace::new(segments).expect("segment count is positive")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    AudioEq,
    CornerDetection,
}

impl WorkloadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::AudioEq => "audio_eq",
            Self::CornerDetection => "corner_detection",
        }
    }
}

/// Per-application section of the run configuration. Unset fields take the
/// defaults of the selected kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub kind: WorkloadKind,
    #[serde(default)]
    pub app_id: Option<String>,
    #[serde(default)]
    pub period_ms: Option<u64>,
    #[serde(default)]
    pub total_kcycles: Option<u64>,
    #[serde(default)]
    pub parallel_fraction: Option<f64>,
    /// Work scale per claim size; sizes not listed run the full workload.
    #[serde(default)]
    pub adaptation: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub mem_accesses_per_kcycle: Option<u64>,
    #[serde(default)]
    pub segment_count: Option<usize>,
    #[serde(default)]
    pub first_request_ms: u64,
    #[serde(default)]
    pub jitter_ms: f64,
    #[serde(default)]
    pub min_cpus: Option<usize>,
    #[serde(default)]
    pub max_cpus: Option<usize>,
    /// Replaces the bundled AIR.
    #[serde(default)]
    pub air: Option<PathBuf>,
    /// Replace the measured curves.
    #[serde(default)]
    pub scalability: Option<Vec<f64>>,
    #[serde(default)]
    pub standalone_load: Option<Vec<f64>>,
}

impl WorkloadConfig {
    pub fn new(kind: WorkloadKind) -> Self {
        Self {
            kind,
            app_id: None,
            period_ms: None,
            total_kcycles: None,
            parallel_fraction: None,
            adaptation: None,
            mem_accesses_per_kcycle: None,
            segment_count: None,
            first_request_ms: 0,
            jitter_ms: 0.0,
            min_cpus: None,
            max_cpus: None,
            air: None,
            scalability: None,
            standalone_load: None,
        }
    }
}

struct Defaults {
    air: &'static str,
    period_ms: u64,
    total_kcycles: u64,
    parallel_fraction: f64,
    adaptation: &'static [(usize, f64)],
    mem_accesses_per_kcycle: u64,
    segment_count: usize,
}

const AUDIO_EQ: Defaults = Defaults {
    air: AUDIO_EQ_AIR,
    period_ms: 400,
    total_kcycles: 28_000,
    parallel_fraction: 0.88,
    adaptation: &[(1, 0.5), (2, 0.7), (3, 0.8)],
    mem_accesses_per_kcycle: 4,
    segment_count: 8,
};

const CORNER_DETECTION: Defaults = Defaults {
    air: CORNER_DETECTION_AIR,
    period_ms: 1000,
    total_kcycles: 100_000,
    parallel_fraction: 0.90,
    adaptation: &[(1, 0.5), (2, 0.55), (3, 0.6)],
    mem_accesses_per_kcycle: 4,
    segment_count: 8,
};

/// A fully assembled application ready for simulation.
#[derive(Debug, Clone)]
pub struct AppSpec {
    pub app_id: AppId,
    pub air: Arc<AirGraph>,
    pub period: SimTime,
    pub trace_table: BTreeMap<(String, usize), Vec<Arc<Trace>>>,
    /// Scaled total work per claim size.
    pub work: BTreeMap<usize, u64>,
    pub demand: Demand,
    pub scalability: ScalabilityCurve,
    pub standalone_load: StandaloneLoadCurve,
    pub first_request: SimTime,
    pub jitter_bound: SimTime,
}

impl AppSpec {
    pub fn traces(&self, trace_ref: &str, claim_size: usize) -> Option<&[Arc<Trace>]> {
        self.trace_table
            .get(&(trace_ref.to_string(), claim_size))
            .map(Vec::as_slice)
    }
}

/// Makespan and busy cycles of one application replayed alone on `n` CPUs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StandaloneRun {
    pub makespan: SimTime,
    pub busy_cycles: u64,
}

/// Replays one trace per CPU from t = 0 on an idle platform.
pub fn run_standalone(
    platform: &PlatformConfig,
    traces: &[Arc<Trace>],
) -> Result<StandaloneRun, FelError> {
    let mut k = Kernel::new(platform, false)?;
    for (cpu, t) in traces.iter().enumerate() {
        k.execute_trace(cpu, Arc::clone(t), SimTime::ZERO)?;
    }
    let report = k.run_to_idle()?;
    let makespan = k
        .completions()
        .iter()
        .map(|c| c.finished)
        .max()
        .unwrap_or(SimTime::ZERO);
    Ok(StandaloneRun {
        makespan,
        busy_cycles: report.cpus.iter().map(|c| c.busy_cycles).sum(),
    })
}

pub fn build_audio_eq(
    cfg: &WorkloadConfig,
    platform: &PlatformConfig,
) -> Result<AppSpec, WorkloadError> {
    build(cfg, &AUDIO_EQ, platform)
}

pub fn build_corner_detection(
    cfg: &WorkloadConfig,
    platform: &PlatformConfig,
) -> Result<AppSpec, WorkloadError> {
    build(cfg, &CORNER_DETECTION, platform)
}

pub fn build_workload(
    cfg: &WorkloadConfig,
    platform: &PlatformConfig,
) -> Result<AppSpec, WorkloadError> {
    match cfg.kind {
        WorkloadKind::AudioEq => build_audio_eq(cfg, platform),
        WorkloadKind::CornerDetection => build_corner_detection(cfg, platform),
    }
}

fn build(
    cfg: &WorkloadConfig,
    def: &Defaults,
    platform: &PlatformConfig,
) -> Result<AppSpec, WorkloadError> {
    let app = cfg
        .app_id
        .clone()
        .unwrap_or_else(|| cfg.kind.as_str().to_string());
    let range = |field: &'static str, reason: String| WorkloadError::ConfigOutOfRange {
        app: app.clone(),
        field,
        reason,
    };

    let period_ms = cfg.period_ms.unwrap_or(def.period_ms);
    if period_ms == 0 {
        return Err(range("period_ms", "must be positive".into()));
    }
    let total_kcycles = cfg.total_kcycles.unwrap_or(def.total_kcycles);
    if total_kcycles == 0 {
        return Err(range("total_kcycles", "must be positive".into()));
    }
    let parallel_fraction = cfg.parallel_fraction.unwrap_or(def.parallel_fraction);
    if !(0.0..=1.0).contains(&parallel_fraction) {
        return Err(range("parallel_fraction", "must lie in [0, 1]".into()));
    }
    let segment_count = cfg.segment_count.unwrap_or(def.segment_count);
    if segment_count == 0 {
        return Err(range("segment_count", "must be positive".into()));
    }
    if !(cfg.jitter_ms.is_finite() && cfg.jitter_ms >= 0.0) {
        return Err(range("jitter_ms", "must be non-negative".into()));
    }
    let adaptation: BTreeMap<usize, f64> = match &cfg.adaptation {
        None => def.adaptation.iter().copied().collect(),
        Some(table) => table
            .iter()
            .map(|(k, v)| {
                let size =
                    k.parse::<usize>().ok().filter(|&s| s >= 1).ok_or_else(|| {
                        range("adaptation", format!("key `{k}` is not a claim size"))
                    })?;
                if !(v.is_finite() && *v > 0.0) {
                    return Err(range(
                        "adaptation",
                        format!("scale for {size} must be positive"),
                    ));
                }
                Ok((size, *v))
            })
            .collect::<Result<_, _>>()?,
    };

    let text = match &cfg.air {
        Some(path) => std::fs::read_to_string(path).map_err(|source| WorkloadError::Io {
            app: app.clone(),
            path: path.clone(),
            source,
        })?,
        None => def.air.to_string(),
    };
    let mut air = parse_air(&text).map_err(|source| WorkloadError::Air {
        app: app.clone(),
        source,
    })?;
    let demand_nodes: Vec<String> = air
        .nodes()
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::GetResource(_)))
        .map(|n| n.id.clone())
        .collect();
    for id in &demand_nodes {
        let d = air.demand_mut(id).expect("listed as get_resource");
        if let Some(min) = cfg.min_cpus {
            d.min_cpus = min;
        }
        if let Some(max) = cfg.max_cpus {
            d.max_cpus = max;
        }
    }
    let report = validate_air(&air, platform.num_cpus);
    if !report.is_empty() {
        return Err(WorkloadError::InvalidAir {
            app,
            violations: report.violations.iter().map(ToString::to_string).collect(),
        });
    }
    let first = demand_nodes
        .first()
        .ok_or_else(|| WorkloadError::NoDemand { app: app.clone() })?;
    let NodeKind::GetResource(rd) = &air.node(first).expect("validated").kind else {
        unreachable!("filtered to get_resource nodes");
    };
    let app_id = AppId::new(&app);
    let demand = Demand {
        app_id: app_id.clone(),
        min_cpus: rd.min_cpus,
        max_cpus: rd.max_cpus,
        max_load: rd.max_load,
    };

    let base = total_kcycles * 1000;
    let work_at = |n: usize| -> u64 {
        let scale = adaptation.get(&n).copied().unwrap_or(1.0);
        (base as f64 * scale).round() as u64
    };
    let params_at = |n: usize| TraceParams {
        total_work_cycles: work_at(n),
        parallel_fraction,
        mem_accesses_per_kcycle: cfg
            .mem_accesses_per_kcycle
            .unwrap_or(def.mem_accesses_per_kcycle),
        segment_count,
    };

    let reachable = reachable_claim_sizes(&air, platform.num_cpus);
    let mut trace_table = BTreeMap::new();
    let mut work = BTreeMap::new();
    for (fen, trace_ref) in air.trace_refs() {
        for &n in reachable.get(fen).into_iter().flatten() {
            let traces = synth_trace(&params_at(n), n)
                .into_iter()
                .map(Arc::new)
                .collect();
            trace_table.insert((trace_ref.to_string(), n), traces);
            work.insert(n, work_at(n));
        }
    }

    let clock = platform.clock()?;
    let period = SimTime::from_ms(period_ms);
    let period_cycles = clock.cycles_at(period);
    let top = demand.max_cpus.min(platform.num_cpus).max(1);
    let mut throughput = Vec::with_capacity(top);
    let mut load = Vec::with_capacity(top);
    for n in 1..=top {
        let traces: Vec<Arc<Trace>> = synth_trace(&params_at(n), n)
            .into_iter()
            .map(Arc::new)
            .collect();
        let run = run_standalone(platform, &traces)?;
        let cycles = clock.cycles_at(run.makespan).max(1);
        throughput.push(work_at(n) as f64 / cycles as f64);
        load.push((run.busy_cycles as f64 / (n as u64 * period_cycles) as f64).min(1.0));
    }
    let mut speedup: Vec<f64> = throughput.iter().map(|t| t / throughput[0]).collect();
    speedup[0] = 1.0;
    for i in 1..speedup.len() {
        speedup[i] = speedup[i].max(speedup[i - 1]);
    }
    let scalability =
        ScalabilityCurve::new(app_id.clone(), cfg.scalability.clone().unwrap_or(speedup))?;
    let standalone_load =
        StandaloneLoadCurve::new(app_id.clone(), cfg.standalone_load.clone().unwrap_or(load))?;

    Ok(AppSpec {
        app_id,
        air: Arc::new(air),
        period,
        trace_table,
        work,
        demand,
        scalability,
        standalone_load,
        first_request: SimTime::from_ms(cfg.first_request_ms),
        jitter_bound: SimTime::from_ns((cfg.jitter_ms * 1e6).round() as u64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(total: u64, pf: f64) -> TraceParams {
        TraceParams {
            total_work_cycles: total,
            parallel_fraction: pf,
            mem_accesses_per_kcycle: 0,
            segment_count: 4,
        }
    }

    #[test]
    fn fully_parallel_splits_evenly() {
        let t = synth_trace(&params(3000, 1.0), 3);
        assert_eq!(
            t.iter().map(Trace::compute_cycles).collect::<Vec<_>>(),
            vec![1000; 3]
        );
    }

    #[test]
    fn single_cpu_gets_everything() {
        let t = synth_trace(&params(12_345, 0.7), 1);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].compute_cycles(), 12_345);
    }

    #[test]
    fn serial_share_on_cpu_zero() {
        let w: u64 = 10_000;
        let pf = 0.9;
        let serial = w - (w as f64 * pf) as u64;
        let per = (w - serial) / 5;
        let t = synth_trace(&params(w, pf), 5);
        let got: Vec<u64> = t.iter().map(Trace::compute_cycles).collect();
        assert_eq!(got, vec![serial + per, per, per, per, per]);
        assert_eq!(got, vec![2800, 1800, 1800, 1800, 1800]);
        assert_eq!(got.iter().sum::<u64>(), w);
    }

    #[test]
    fn memory_accesses_three_to_one() {
        let p = TraceParams {
            total_work_cycles: 10_000,
            parallel_fraction: 0.0,
            mem_accesses_per_kcycle: 4,
            segment_count: 3,
        };
        let t = &synth_trace(&p, 1)[0];
        let reads: u64 = t.segments().iter().map(|s| s.mem_reads).sum();
        let writes: u64 = t.segments().iter().map(|s| s.mem_writes).sum();
        assert_eq!((reads, writes), (30, 10));
        let first = t.segments()[0];
        assert_eq!(first.compute_cycles, 3334);
        assert_eq!(first.mem_reads, 10);
        assert_eq!(first.mem_writes, 4);
    }

    #[test]
    fn remainders_go_to_earliest() {
        let t = synth_trace(&params(10, 1.0), 3);
        let got: Vec<u64> = t.iter().map(Trace::compute_cycles).collect();
        assert_eq!(got, vec![4, 3, 3]);
    }

    #[test]
    fn audio_defaults() {
        let p = PlatformConfig::default();
        let spec = build_audio_eq(&WorkloadConfig::new(WorkloadKind::AudioEq), &p).unwrap();
        assert_eq!(spec.period, SimTime::from_ns(400_000_000));
        assert_eq!((spec.demand.min_cpus, spec.demand.max_cpus), (1, 5));
        assert_eq!(spec.air.nodes().len(), 7);
        assert_eq!(spec.work[&1], 28_000_000 / 2);
        let sizes: Vec<usize> = spec.trace_table.keys().map(|(_, n)| *n).collect();
        assert_eq!(sizes, vec![1, 2, 3, 4, 5]);
        assert_eq!(spec.traces("eq_1", 1).unwrap().len(), 1);
        assert_eq!(spec.traces("eq_full", 5).unwrap().len(), 5);
        for ((_, n), traces) in &spec.trace_table {
            let total: u64 = traces.iter().map(|t| t.compute_cycles()).sum();
            assert_eq!(total, spec.work[n]);
        }
    }

    #[test]
    fn corner_defaults() {
        let p = PlatformConfig::default();
        let spec = build_corner_detection(&WorkloadConfig::new(WorkloadKind::CornerDetection), &p)
            .unwrap();
        assert_eq!(spec.period, SimTime::from_ns(1_000_000_000));
        assert_eq!((spec.demand.min_cpus, spec.demand.max_cpus), (1, 5));
        assert!(spec.traces("corner_reduced", 3).is_some());
        assert!(spec.traces("corner_full", 4).is_some());
        assert!(spec.traces("corner_full", 3).is_none());
    }

    #[test]
    fn bad_config_rejected() {
        let p = PlatformConfig::default();
        let mut c = WorkloadConfig::new(WorkloadKind::AudioEq);
        c.parallel_fraction = Some(1.5);
        assert!(matches!(
            build_audio_eq(&c, &p),
            Err(WorkloadError::ConfigOutOfRange {
                field: "parallel_fraction",
                ..
            })
        ));
        let mut c = WorkloadConfig::new(WorkloadKind::AudioEq);
        c.max_cpus = Some(9);
        assert!(matches!(
            build_audio_eq(&c, &p),
            Err(WorkloadError::InvalidAir { .. })
        ));
    }
}
