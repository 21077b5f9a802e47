//! Bridge between the layers. The execution controller places FENs on
//! claimed CPUs and turns per-CPU trace completions into one completion per
//! FEN; the status collector snapshots reservation state and recent load
//! for the resource manager.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::fel::{CpuId, Fel, FelError, SimTime, Trace, TraceCompletion};
use crate::rel::{AppId, ResourceManager, ResourceStatus};

#[derive(Debug, Error, PartialEq)]
pub enum InterfaceError {
    #[error("CPU {cpu} is not reserved by `{app}`")]
    CpuNotReserved { cpu: CpuId, app: AppId },
    #[error("CPU {0} is busy")]
    CpuBusy(CpuId),
    #[error("{traces} traces for {cpus} CPUs")]
    TraceCountMismatch { cpus: usize, traces: usize },
    #[error("dispatch names no CPUs")]
    EmptyDispatch,
    #[error("unknown context {0}")]
    UnknownContext(u64),
    #[error("context {0} already finished")]
    AlreadyFinished(u64),
    #[error(transparent)]
    Fel(#[from] FelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextStatus {
    ExecutionStarted,
    ExecutionFinished,
}

impl ContextStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ExecutionStarted => "execution_started",
            Self::ExecutionFinished => "execution_finished",
        }
    }
}

/// One dispatched FEN. Finishes when every member CPU has completed.
#[derive(Debug, Clone, PartialEq)]
pub struct FenContext {
    pub context_id: u64,
    pub fen_id: String,
    pub air_id: String,
    pub app_id: AppId,
    pub cpu_ids: Vec<CpuId>,
    pub status: ContextStatus,
    pub start: SimTime,
    pub end: Option<SimTime>,
    pending: usize,
    cpu_done: Vec<Option<SimTime>>,
}

impl FenContext {
    /// Completion time of each member CPU, in `cpu_ids` order.
    pub fn cpu_finish_times(&self) -> &[Option<SimTime>] {
        &self.cpu_done
    }

    /// True once every member trace has completed.
    pub fn all_done(&self) -> bool {
        self.pending == 0
    }
}

#[derive(Debug, Default)]
pub struct ExecutionController {
    contexts: BTreeMap<u64, FenContext>,
    next_id: u64,
    running_on: HashMap<CpuId, u64>,
}

impl ExecutionController {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts one trace per CPU and registers the context as started.
    /// Nothing is started if any check fails.
    #[allow(clippy::too_many_arguments)]
    pub fn dispatch_fen(
        &mut self,
        fel: &mut Fel,
        rm: &ResourceManager,
        app_id: &AppId,
        fen_id: &str,
        air_id: &str,
        cpu_ids: &[CpuId],
        traces: Vec<Arc<Trace>>,
        now: SimTime,
    ) -> Result<u64, InterfaceError> {
        if cpu_ids.is_empty() {
            return Err(InterfaceError::EmptyDispatch);
        }
        if traces.len() != cpu_ids.len() {
            return Err(InterfaceError::TraceCountMismatch {
                cpus: cpu_ids.len(),
                traces: traces.len(),
            });
        }
        for &cpu in cpu_ids {
            if cpu >= fel.num_cpus() {
                return Err(FelError::UnknownCpu(cpu).into());
            }
            if rm.reserved_by(cpu) != Some(app_id) {
                return Err(InterfaceError::CpuNotReserved {
                    cpu,
                    app: app_id.clone(),
                });
            }
            if fel.is_busy(cpu) {
                return Err(InterfaceError::CpuBusy(cpu));
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        for (&cpu, trace) in cpu_ids.iter().zip(traces) {
            fel.execute_trace(cpu, trace, id, now)?;
            self.running_on.insert(cpu, id);
        }
        self.contexts.insert(
            id,
            FenContext {
                context_id: id,
                fen_id: fen_id.to_string(),
                air_id: air_id.to_string(),
                app_id: app_id.clone(),
                cpu_ids: cpu_ids.to_vec(),
                status: ContextStatus::ExecutionStarted,
                start: now,
                end: None,
                pending: cpu_ids.len(),
                cpu_done: vec![None; cpu_ids.len()],
            },
        );
        Ok(id)
    }

    /// Records one member trace completion. Returns the context id when
    /// this was the last outstanding member.
    pub fn trace_done(&mut self, done: &TraceCompletion) -> Result<Option<u64>, InterfaceError> {
        let ctx = self
            .contexts
            .get_mut(&done.tag)
            .ok_or(InterfaceError::UnknownContext(done.tag))?;
        if ctx.status == ContextStatus::ExecutionFinished {
            return Err(InterfaceError::AlreadyFinished(done.tag));
        }
        let slot = ctx
            .cpu_ids
            .iter()
            .position(|&c| c == done.cpu)
            .ok_or(InterfaceError::UnknownContext(done.tag))?;
        if ctx.cpu_done[slot].is_none() {
            ctx.cpu_done[slot] = Some(done.finished);
            ctx.pending -= 1;
            self.running_on.remove(&done.cpu);
        }
        Ok((ctx.pending == 0).then_some(done.tag))
    }

    /// Flips a context to finished.
    pub fn notify_finished(
        &mut self,
        context_id: u64,
        now: SimTime,
    ) -> Result<&FenContext, InterfaceError> {
        let ctx = self
            .contexts
            .get_mut(&context_id)
            .ok_or(InterfaceError::UnknownContext(context_id))?;
        if ctx.status == ContextStatus::ExecutionFinished {
            return Err(InterfaceError::AlreadyFinished(context_id));
        }
        ctx.status = ContextStatus::ExecutionFinished;
        ctx.end = Some(now);
        Ok(ctx)
    }

    pub fn context(&self, id: u64) -> Option<&FenContext> {
        self.contexts.get(&id)
    }

    pub fn contexts(&self) -> impl Iterator<Item = &FenContext> {
        self.contexts.values()
    }

    /// Context currently executing on `cpu`, if any.
    pub fn running_on(&self, cpu: CpuId) -> Option<u64> {
        self.running_on.get(&cpu).copied()
    }

    /// Contexts not yet finished, ascending.
    pub fn in_flight(&self) -> Vec<u64> {
        self.contexts
            .values()
            .filter(|c| c.status == ContextStatus::ExecutionStarted)
            .map(|c| c.context_id)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceSnapshot {
    pub taken_at: SimTime,
    pub entries: Vec<ResourceStatus>,
}

impl ResourceSnapshot {
    pub fn free_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.reserved_by.is_none())
            .count()
    }
}

/// Status collector: reservation owners plus busy fraction over a trailing
/// window.
#[derive(Debug, Clone, Copy)]
pub struct StatusCollector {
    window: SimTime,
}

impl StatusCollector {
    pub fn new(window: SimTime) -> Self {
        Self { window }
    }

    pub fn window(&self) -> SimTime {
        self.window
    }

    /// Near the start of the run the window shrinks to the elapsed time.
    pub fn send_resource(&self, now: SimTime, rm: &ResourceManager, fel: &Fel) -> ResourceSnapshot {
        let from = now.saturating_sub(self.window);
        let span = (now - from).as_ns();
        let entries = (0..fel.num_cpus())
            .map(|cpu| ResourceStatus {
                cpu_id: cpu,
                reserved_by: rm.reserved_by(cpu).cloned(),
                recent_load: match span {
                    0 => 0.0,
                    s => fel.busy_ns_in(cpu, from, now) as f64 / s as f64,
                },
            })
            .collect();
        ResourceSnapshot {
            taken_at: now,
            entries,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fel::{EventQueue, FelEvent, PlatformConfig, TraceSegment};
    use crate::rel::{CandidateSet, Demand};

    struct Rig {
        fel: Fel,
        queue: EventQueue<FelEvent>,
        rm: ResourceManager,
        ec: ExecutionController,
        finished: Vec<(u64, SimTime)>,
    }

    impl Rig {
        fn new() -> Self {
            let mut fel = Fel::new(&PlatformConfig::default(), false).unwrap();
            fel.set_horizon(SimTime::MAX);
            Self {
                fel,
                queue: EventQueue::new(),
                rm: ResourceManager::new(6, 5),
                ec: ExecutionController::new(),
                finished: Vec::new(),
            }
        }

        fn reserve(&mut self, app: &str, cpus: &[CpuId]) {
            let d = Demand {
                app_id: AppId::new(app),
                min_cpus: 1,
                max_cpus: 5,
                max_load: None,
            };
            self.rm
                .reserve_resource(
                    &CandidateSet::new(cpus.to_vec()),
                    &d,
                    cpus.len(),
                    SimTime::ZERO,
                    0,
                )
                .unwrap();
        }

        fn run(&mut self) {
            loop {
                for (t, e) in self.fel.take_events().collect::<Vec<_>>() {
                    self.queue.push(t, e).unwrap();
                }
                for c in self.fel.take_completions().collect::<Vec<_>>() {
                    if let Some(id) = self.ec.trace_done(&c).unwrap() {
                        self.ec.notify_finished(id, c.finished).unwrap();
                        self.finished.push((id, c.finished));
                    }
                }
                match self.queue.pop_until(SimTime::MAX) {
                    Some((t, e)) => self.fel.handle(t, e),
                    None => break,
                }
            }
        }
    }

    fn compute(cycles: u64) -> Arc<Trace> {
        Arc::new(Trace::new(vec![TraceSegment::compute(cycles)]).unwrap())
    }

    #[test]
    fn single_cpu_context() {
        let mut r = Rig::new();
        r.reserve("a", &[0]);
        let a = AppId::new("a");
        let id =
            r.ec.dispatch_fen(
                &mut r.fel,
                &r.rm,
                &a,
                "f",
                "air",
                &[0],
                vec![compute(100)],
                SimTime::ZERO,
            )
            .unwrap();
        assert_eq!(
            r.ec.context(id).unwrap().status,
            ContextStatus::ExecutionStarted
        );
        r.run();
        assert_eq!(r.finished, vec![(id, SimTime::from_ns(1000))]);
        assert_eq!(r.ec.context(id).unwrap().end, Some(SimTime::from_ns(1000)));
    }

    #[test]
    fn barrier_waits_for_slowest() {
        let mut r = Rig::new();
        r.reserve("a", &[0, 1, 2]);
        let a = AppId::new("a");
        let id =
            r.ec.dispatch_fen(
                &mut r.fel,
                &r.rm,
                &a,
                "f",
                "air",
                &[0, 1, 2],
                vec![compute(100), compute(200), compute(300)],
                SimTime::ZERO,
            )
            .unwrap();
        r.run();
        let expected = [100u64, 200, 300].iter().max().unwrap() * 10;
        assert_eq!(r.finished, vec![(id, SimTime::from_ns(expected))]);
        assert_eq!(expected, 3000);
        assert_eq!(
            r.ec.notify_finished(id, SimTime::from_ns(3000))
                .unwrap_err(),
            InterfaceError::AlreadyFinished(id)
        );
    }

    #[test]
    fn foreign_cpu_rejected() {
        let mut r = Rig::new();
        r.reserve("a", &[0]);
        r.reserve("b", &[1]);
        let a = AppId::new("a");
        let err =
            r.ec.dispatch_fen(
                &mut r.fel,
                &r.rm,
                &a,
                "f",
                "air",
                &[0, 1],
                vec![compute(10), compute(10)],
                SimTime::ZERO,
            )
            .unwrap_err();
        assert_eq!(err, InterfaceError::CpuNotReserved { cpu: 1, app: a });
        assert!(!r.fel.is_busy(0));
        assert!(r.ec.in_flight().is_empty());
    }

    #[test]
    fn contexts_are_isolated() {
        let mut r = Rig::new();
        r.reserve("a", &[0]);
        r.reserve("b", &[1]);
        let (a, b) = (AppId::new("a"), AppId::new("b"));
        let ia =
            r.ec.dispatch_fen(
                &mut r.fel,
                &r.rm,
                &a,
                "f",
                "A",
                &[0],
                vec![compute(300)],
                SimTime::ZERO,
            )
            .unwrap();
        let ib =
            r.ec.dispatch_fen(
                &mut r.fel,
                &r.rm,
                &b,
                "g",
                "B",
                &[1],
                vec![compute(100)],
                SimTime::ZERO,
            )
            .unwrap();
        assert_ne!(ia, ib);
        r.run();
        assert_eq!(
            r.finished,
            vec![(ib, SimTime::from_ns(1000)), (ia, SimTime::from_ns(3000))]
        );
        assert_eq!(r.ec.context(ia).unwrap().app_id, a);
        assert_eq!(r.ec.context(ib).unwrap().app_id, b);
        assert_eq!(
            r.ec.notify_finished(99, SimTime::ZERO).unwrap_err(),
            InterfaceError::UnknownContext(99)
        );
    }

    #[test]
    fn snapshot_reservations_and_window_load() {
        let mut r = Rig::new();
        let sc = StatusCollector::new(SimTime::from_ms(100));
        let s0 = sc.send_resource(SimTime::ZERO, &r.rm, &r.fel);
        assert!(s0
            .entries
            .iter()
            .all(|e| e.reserved_by.is_none() && e.recent_load == 0.0));

        r.reserve("a", &[0, 1, 2]);
        let a = AppId::new("a");
        // 40 ms of compute starting 60 ms into the window.
        let cycles = 40 * 100_000;
        r.queue.advance_to(SimTime::from_ms(60));
        r.ec.dispatch_fen(
            &mut r.fel,
            &r.rm,
            &a,
            "f",
            "air",
            &[0],
            vec![compute(cycles)],
            SimTime::from_ms(60),
        )
        .unwrap();
        r.run();
        let s = sc.send_resource(SimTime::from_ms(100), &r.rm, &r.fel);
        for cpu in 0..3 {
            assert_eq!(s.entries[cpu].reserved_by.as_ref(), Some(&a));
        }
        assert!(s.entries[3].reserved_by.is_none());
        assert_eq!(s.entries[0].recent_load, 0.4);
        assert_eq!(s, sc.send_resource(SimTime::from_ms(100), &r.rm, &r.fel));
    }
}
