use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    AccessKind, BusMetrics, CacheModel, CacheOutcome, Clock, CpuId, CpuMetrics, FelError, HitRate,
    SharedBus, SimTime, Trace,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CacheConfig {
    pub size_bits: u64,
    pub line_bits: u64,
    pub hit_rate: HitRate,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            size_bits: 32 * 1024 * 8,
            line_bits: 1024,
            hit_rate: HitRate::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BusConfig {
    pub transfer_cycles: u64,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self {
            transfer_cycles: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlatformConfig {
    pub num_cpus: usize,
    pub freq_hz: u64,
    pub cache: CacheConfig,
    pub bus: BusConfig,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self {
            num_cpus: 6,
            freq_hz: 100_000_000,
            cache: CacheConfig::default(),
            bus: BusConfig::default(),
        }
    }
}

impl PlatformConfig {
    pub fn clock(&self) -> Result<Clock, FelError> {
        Clock::new(self.freq_hz)
    }

    pub fn validate(&self) -> Result<(), FelError> {
        if self.num_cpus == 0 {
            return Err(FelError::InvalidPlatform(
                "num_cpus must be positive".into(),
            ));
        }
        if self.cache.line_bits == 0 || self.cache.size_bits < self.cache.line_bits {
            return Err(FelError::InvalidPlatform(
                "cache must hold at least one line".into(),
            ));
        }
        self.clock().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpuState {
    Idle,
    Busy { tag: u64 },
}

/// Replay cursor of the trace a CPU is executing. `local` runs ahead of the
/// global clock: a CPU only interacts with the rest of the platform on a
/// cache miss, so everything up to the next miss is computed eagerly.
#[derive(Debug, Clone)]
struct Running {
    tag: u64,
    trace: Arc<Trace>,
    segment: usize,
    compute_done: bool,
    reads_done: u64,
    writes_done: u64,
    local: SimTime,
    started: SimTime,
    waiting_bus: bool,
    parked: bool,
}

#[derive(Debug, Clone)]
pub struct Cpu {
    id: CpuId,
    cache: CacheModel,
    running: Option<Running>,
    intervals: Vec<(SimTime, Option<SimTime>)>,
}

impl Cpu {
    pub fn id(&self) -> CpuId {
        self.id
    }

    pub fn state(&self) -> CpuState {
        match &self.running {
            Some(r) => CpuState::Busy { tag: r.tag },
            None => CpuState::Idle,
        }
    }

    pub fn cache(&self) -> &CacheModel {
        &self.cache
    }

    /// Busy intervals `[start, end)`; the last one is open while running.
    pub fn busy_intervals(&self) -> &[(SimTime, Option<SimTime>)] {
        &self.intervals
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FelEvent {
    Resume(CpuId),
    Finish(CpuId),
    BusRequest(CpuId),
    BusGrant,
    BusDone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceCompletion {
    pub cpu: CpuId,
    pub tag: u64,
    pub started: SimTime,
    pub finished: SimTime,
}

pub struct Fel {
    clock: Clock,
    cpus: Vec<Cpu>,
    bus: SharedBus,
    horizon: SimTime,
    outbox: Vec<(SimTime, FelEvent)>,
    completions: Vec<TraceCompletion>,
}

impl Fel {
    pub fn new(cfg: &PlatformConfig, record_bus: bool) -> Result<Self, FelError> {
        cfg.validate()?;
        let clock = cfg.clock()?;
        let cpus = (0..cfg.num_cpus)
            .map(|id| Cpu {
                id,
                cache: CacheModel::new(
                    cfg.cache.size_bits,
                    cfg.cache.line_bits,
                    cfg.cache.hit_rate,
                ),
                running: None,
                intervals: Vec::new(),
            })
            .collect();
        Ok(Self {
            clock,
            cpus,
            bus: SharedBus::new(
                cfg.num_cpus,
                clock.cycles(cfg.bus.transfer_cycles),
                record_bus,
            ),
            horizon: SimTime::MAX,
            outbox: Vec::new(),
            completions: Vec::new(),
        })
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    pub fn num_cpus(&self) -> usize {
        self.cpus.len()
    }

    pub fn cpu(&self, id: CpuId) -> Option<&Cpu> {
        self.cpus.get(id)
    }

    pub fn cpus(&self) -> &[Cpu] {
        &self.cpus
    }

    pub fn is_busy(&self, id: CpuId) -> bool {
        self.cpus.get(id).is_some_and(|c| c.running.is_some())
    }

    pub fn bus(&self) -> &SharedBus {
        &self.bus
    }

    /// Limits eager replay to `[0, horizon)`. CPUs parked at an earlier
    /// horizon are resumed.
    pub fn set_horizon(&mut self, horizon: SimTime) {
        self.horizon = horizon;
        for cpu in &mut self.cpus {
            if let Some(r) = &mut cpu.running {
                if r.parked && r.local < horizon {
                    r.parked = false;
                    self.outbox.push((r.local, FelEvent::Resume(cpu.id)));
                }
            }
        }
    }

    /// Starts replaying `trace` on `cpu` at `now`. Completion is reported
    /// through [`Fel::take_completions`] once the `Finish` event is handled.
    pub fn execute_trace(
        &mut self,
        cpu: CpuId,
        trace: Arc<Trace>,
        tag: u64,
        now: SimTime,
    ) -> Result<(), FelError> {
        let c = self.cpus.get_mut(cpu).ok_or(FelError::UnknownCpu(cpu))?;
        if c.running.is_some() {
            return Err(FelError::CpuBusy(cpu));
        }
        c.running = Some(Running {
            tag,
            trace,
            segment: 0,
            compute_done: false,
            reads_done: 0,
            writes_done: 0,
            local: now,
            started: now,
            waiting_bus: false,
            parked: false,
        });
        c.intervals.push((now, None));
        self.advance(cpu, now);
        Ok(())
    }

    pub fn handle(&mut self, now: SimTime, event: FelEvent) {
        match event {
            FelEvent::Resume(cpu) => {
                let ready = self.cpus[cpu]
                    .running
                    .as_ref()
                    .is_some_and(|r| !r.waiting_bus && !r.parked);
                if ready {
                    self.advance(cpu, now);
                }
            }
            FelEvent::Finish(cpu) => {
                let c = &mut self.cpus[cpu];
                let r = c.running.take().expect("finish on idle CPU");
                if let Some(last) = c.intervals.last_mut() {
                    last.1 = Some(now);
                }
                self.completions.push(TraceCompletion {
                    cpu,
                    tag: r.tag,
                    started: r.started,
                    finished: now,
                });
            }
            FelEvent::BusRequest(cpu) => {
                if self.bus.request(cpu, now) {
                    self.outbox.push((now, FelEvent::BusGrant));
                }
            }
            FelEvent::BusGrant => {
                if let Some(t) = self.bus.arbitrate(now) {
                    self.outbox.push((t.done_at, FelEvent::BusDone));
                }
            }
            FelEvent::BusDone => {
                let (t, again) = self.bus.complete().expect("bus done without transfer");
                if let Some(r) = self.cpus[t.cpu].running.as_mut() {
                    r.waiting_bus = false;
                }
                self.advance(t.cpu, now);
                if again {
                    self.outbox.push((now, FelEvent::BusGrant));
                }
            }
        }
    }

    fn advance(&mut self, cpu: CpuId, now: SimTime) {
        let cycle = self.clock.cycles(1);
        let horizon = self.horizon;
        let c = &mut self.cpus[cpu];
        let Some(r) = c.running.as_mut() else {
            return;
        };
        r.local = r.local.max(now);
        loop {
            let segments = r.trace.segments();
            if r.segment == segments.len() {
                self.outbox.push((r.local, FelEvent::Finish(cpu)));
                return;
            }
            if r.local >= horizon {
                r.parked = true;
                return;
            }
            let seg = segments[r.segment];
            if !r.compute_done {
                r.local = r.local + self.clock.cycles(seg.compute_cycles);
                r.compute_done = true;
                continue;
            }
            let kind = if r.reads_done < seg.mem_reads {
                r.reads_done += 1;
                AccessKind::Read
            } else if r.writes_done < seg.mem_writes {
                r.writes_done += 1;
                AccessKind::Write
            } else {
                r.segment += 1;
                r.compute_done = false;
                r.reads_done = 0;
                r.writes_done = 0;
                continue;
            };
            let outcome = c.cache.access(kind);
            r.local = r.local + cycle;
            if outcome == CacheOutcome::Miss {
                r.waiting_bus = true;
                self.outbox.push((r.local, FelEvent::BusRequest(cpu)));
                return;
            }
        }
    }

    /// Events the driver must schedule, in the order they were produced.
    pub fn take_events(&mut self) -> std::vec::Drain<'_, (SimTime, FelEvent)> {
        self.outbox.drain(..)
    }

    pub fn take_completions(&mut self) -> std::vec::Drain<'_, TraceCompletion> {
        self.completions.drain(..)
    }

    /// Busy nanoseconds of `cpu` inside `[from, to)`; an open interval is
    /// taken to extend to `to`.
    pub fn busy_ns_in(&self, cpu: CpuId, from: SimTime, to: SimTime) -> u64 {
        self.cpus[cpu]
            .intervals
            .iter()
            .rev()
            .take_while(|(_, end)| end.is_none_or(|e| e > from))
            .map(|&(start, end)| {
                let s = start.max(from);
                let e = end.unwrap_or(to).min(to);
                e.saturating_sub(s).as_ns()
            })
            .sum()
    }

    pub fn cpu_metrics(&self, horizon: SimTime) -> Vec<CpuMetrics> {
        let total = self.clock.cycles_at(horizon);
        self.cpus
            .iter()
            .map(|c| {
                let busy: u64 = c
                    .intervals
                    .iter()
                    .map(|&(start, end)| {
                        let s = start.min(horizon);
                        let e = end.unwrap_or(horizon).min(horizon);
                        self.clock.cycles_at(e) - self.clock.cycles_at(s)
                    })
                    .sum();
                CpuMetrics {
                    cpu_id: c.id,
                    busy_cycles: busy,
                    idle_cycles: total - busy,
                    cache_accesses: c.cache.access_count(),
                    cache_hits: c.cache.hit_count(),
                }
            })
            .collect()
    }

    pub fn bus_metrics(&self, horizon: SimTime) -> BusMetrics {
        BusMetrics {
            transfers: self.bus.granted_count(),
            busy_cycles: self.bus.busy_ns(horizon) / self.clock.cycle_ns(),
            total_cycles: self.clock.cycles_at(horizon),
        }
    }
}
