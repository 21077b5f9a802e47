use std::sync::Arc;

use super::{
    CpuId, EventQueue, Fel, FelError, FelEvent, MetricsReport, PlatformConfig, SimTime, Trace,
    TraceCompletion,
};

enum KernelEvent {
    Fel(FelEvent),
    Start(usize),
}

/// Stand-alone driver for the functional layer: replays traces placed
/// directly on CPUs, with no resource management on top. Used for
/// calibration runs and for exercising the platform model in isolation.
pub struct Kernel {
    fel: Fel,
    queue: EventQueue<KernelEvent>,
    staged: Vec<Option<(CpuId, Arc<Trace>)>>,
    completions: Vec<TraceCompletion>,
}

impl Kernel {
    pub fn new(cfg: &PlatformConfig, record_bus: bool) -> Result<Self, FelError> {
        Ok(Self {
            fel: Fel::new(cfg, record_bus)?,
            queue: EventQueue::new(),
            staged: Vec::new(),
            completions: Vec::new(),
        })
    }

    /// Schedules `trace` to start on `cpu` at `start`. The returned tag
    /// identifies the run in [`Kernel::completions`].
    pub fn execute_trace(
        &mut self,
        cpu: CpuId,
        trace: Arc<Trace>,
        start: SimTime,
    ) -> Result<u64, FelError> {
        if cpu >= self.fel.num_cpus() {
            return Err(FelError::UnknownCpu(cpu));
        }
        let tag = self.staged.len();
        self.queue.push(start, KernelEvent::Start(tag))?;
        self.staged.push(Some((cpu, trace)));
        Ok(tag as u64)
    }

    pub fn run_until(&mut self, t_end: SimTime) -> Result<MetricsReport, FelError> {
        self.fel.set_horizon(t_end);
        self.pump(t_end)?;
        self.queue.advance_to(t_end);
        Ok(self.report(t_end))
    }

    /// Runs until no events remain; the horizon is the last event time.
    pub fn run_to_idle(&mut self) -> Result<MetricsReport, FelError> {
        self.fel.set_horizon(SimTime::MAX);
        self.pump(SimTime::MAX)?;
        let end = self.queue.now();
        Ok(self.report(end))
    }

    fn pump(&mut self, limit: SimTime) -> Result<(), FelError> {
        self.flush()?;
        while let Some((now, ev)) = self.queue.pop_until(limit) {
            match ev {
                KernelEvent::Fel(e) => self.fel.handle(now, e),
                KernelEvent::Start(slot) => {
                    let (cpu, trace) = self.staged[slot].take().expect("start fired twice");
                    self.fel.execute_trace(cpu, trace, slot as u64, now)?;
                }
            }
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), FelError> {
        let events: Vec<_> = self.fel.take_events().collect();
        for (t, e) in events {
            self.queue.push(t, KernelEvent::Fel(e))?;
        }
        self.completions.extend(self.fel.take_completions());
        Ok(())
    }

    fn report(&self, horizon: SimTime) -> MetricsReport {
        MetricsReport {
            horizon,
            cpus: self.fel.cpu_metrics(horizon),
            bus: self.fel.bus_metrics(horizon),
            events_processed: self.queue.processed(),
            ..MetricsReport::default()
        }
    }

    pub fn completions(&self) -> &[TraceCompletion] {
        &self.completions
    }

    pub fn completion_of(&self, tag: u64) -> Option<SimTime> {
        self.completions
            .iter()
            .find(|c| c.tag == tag)
            .map(|c| c.finished)
    }

    pub fn fel(&self) -> &Fel {
        &self.fel
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }
}
