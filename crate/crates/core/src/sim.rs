//! The event loop binding executors, the resource manager, the FEL
//! interface and the platform model into one simulation run.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::air::AirError;
use crate::fel::{
    AllocationRecord, CpuId, EventQueue, EventRecord, Fel, FelError, FelEvent, IterationRecord,
    MetricsReport, PlatformConfig, SimTime,
};
use crate::interface::{ExecutionController, InterfaceError, ResourceSnapshot, StatusCollector};
use crate::rel::{
    allocate_batch, get_resource, Action, AppId, Claim, Demand, Executor, ExecutorEvent, Policy,
    PolicyKind, RelError, ResourceManager,
};
use crate::workloads::AppSpec;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Fel(#[from] FelError),
    #[error(transparent)]
    Rel(#[from] RelError),
    #[error(transparent)]
    Air(#[from] AirError),
    #[error(transparent)]
    Interface(#[from] InterfaceError),
    #[error("`{app}` has no trace `{trace_ref}` for {claim_size} CPUs")]
    MissingTrace {
        app: AppId,
        trace_ref: String,
        claim_size: usize,
    },
    #[error("invalid simulation setup: {0}")]
    Setup(String),
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub claim_cap: usize,
    pub load_window: SimTime,
    pub seed: u64,
    pub record_events: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            claim_cap: 5,
            load_window: SimTime::from_ms(100),
            seed: 0,
            record_events: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    IterationTrigger(usize),
    RequestArrival(usize),
    AllocateBatch,
    Fel(FelEvent),
    FenComplete(u64),
}

struct PendingRequest {
    app: usize,
    node: String,
    demand: Demand,
}

pub struct Simulation {
    apps: Vec<Arc<AppSpec>>,
    executors: Vec<Executor>,
    fel: Fel,
    rm: ResourceManager,
    ec: ExecutionController,
    collector: StatusCollector,
    policy: Policy,
    queue: EventQueue<Ev>,
    rng: ChaCha8Rng,
    claim_cap: usize,
    record_events: bool,

    pending: Vec<PendingRequest>,
    batch_scheduled: bool,
    arrival_pending: Vec<bool>,
    triggered_at: Vec<SimTime>,
    claim_size: Vec<usize>,
    ctx_app: HashMap<u64, usize>,

    allocations: Vec<AllocationRecord>,
    iterations: Vec<IterationRecord>,
    skipped: BTreeMap<String, u64>,
    events: Vec<EventRecord>,
    violations: Vec<String>,
}

/// Builds the policy object for `kind` from the applications' curves.
pub fn make_policy(kind: PolicyKind, apps: &[Arc<AppSpec>]) -> Policy {
    match kind {
        PolicyKind::Scalability => Policy::Scalability(
            apps.iter()
                .map(|a| (a.app_id.clone(), a.scalability.clone()))
                .collect(),
        ),
        PolicyKind::Load => Policy::Load(
            apps.iter()
                .map(|a| (a.app_id.clone(), a.standalone_load.clone()))
                .collect(),
        ),
        PolicyKind::FirstFit => Policy::FirstFit,
    }
}

impl Simulation {
    pub fn new(
        platform: &PlatformConfig,
        apps: Vec<Arc<AppSpec>>,
        policy: PolicyKind,
        opts: SimOptions,
    ) -> Result<Self, SimError> {
        if opts.claim_cap == 0 || opts.claim_cap >= platform.num_cpus {
            return Err(SimError::Setup(format!(
                "claim cap {} must lie in [1, {})",
                opts.claim_cap, platform.num_cpus
            )));
        }
        let mut ids: Vec<&AppId> = apps.iter().map(|a| &a.app_id).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(SimError::Setup("duplicate application id".into()));
        }
        if apps.iter().any(|a| a.period == SimTime::ZERO) {
            return Err(SimError::Setup("period must be positive".into()));
        }
        let mut queue = EventQueue::new();
        for (i, a) in apps.iter().enumerate() {
            queue.push(a.first_request, Ev::IterationTrigger(i))?;
        }
        let n = apps.len();
        Ok(Self {
            executors: apps
                .iter()
                .map(|a| Executor::new(a.app_id.clone(), Arc::clone(&a.air)))
                .collect(),
            policy: make_policy(policy, &apps),
            fel: Fel::new(platform, false)?,
            rm: ResourceManager::new(platform.num_cpus, opts.claim_cap),
            ec: ExecutionController::new(),
            collector: StatusCollector::new(opts.load_window),
            queue,
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
            claim_cap: opts.claim_cap,
            record_events: opts.record_events,
            pending: Vec::new(),
            batch_scheduled: false,
            arrival_pending: vec![false; n],
            triggered_at: vec![SimTime::ZERO; n],
            claim_size: vec![0; n],
            ctx_app: HashMap::new(),
            allocations: Vec::new(),
            iterations: Vec::new(),
            skipped: apps.iter().map(|a| (a.app_id.to_string(), 0)).collect(),
            events: Vec::new(),
            violations: Vec::new(),
            apps,
        })
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn fel(&self) -> &Fel {
        &self.fel
    }

    pub fn resource_manager(&self) -> &ResourceManager {
        &self.rm
    }

    pub fn execution_controller(&self) -> &ExecutionController {
        &self.ec
    }

    /// Processes every event up to and including `t_end` and reports over
    /// `[0, t_end]`.
    pub fn run_until(&mut self, t_end: SimTime) -> Result<MetricsReport, SimError> {
        self.fel.set_horizon(t_end);
        self.flush_fel()?;
        while let Some((now, ev)) = self.queue.pop_until(t_end) {
            self.handle(now, ev)?;
            self.flush_fel()?;
            self.check_claims(now);
        }
        self.queue.advance_to(t_end);
        Ok(self.report(t_end))
    }

    fn handle(&mut self, now: SimTime, ev: Ev) -> Result<(), SimError> {
        match ev {
            Ev::IterationTrigger(app) => self.on_trigger(now, app),
            Ev::RequestArrival(app) => {
                self.arrival_pending[app] = false;
                let actions = self.executors[app].step(ExecutorEvent::Trigger)?;
                self.apply(now, app, actions)
            }
            Ev::AllocateBatch => self.on_allocate(now),
            Ev::Fel(e) => {
                self.fel.handle(now, e);
                Ok(())
            }
            Ev::FenComplete(ctx) => {
                let c = self.ec.notify_finished(ctx, now)?;
                let (fen, cpus) = (c.fen_id.clone(), c.cpu_ids.clone());
                let app = self.ctx_app[&ctx];
                self.log(
                    now,
                    "execution_finished",
                    Some(ctx),
                    Some(app),
                    Some(fen),
                    cpus,
                    String::new(),
                );
                let actions = self.executors[app].step(ExecutorEvent::FenComplete)?;
                self.apply(now, app, actions)
            }
        }
    }

    fn on_trigger(&mut self, now: SimTime, app: usize) -> Result<(), SimError> {
        let spec = Arc::clone(&self.apps[app]);
        self.queue
            .push(now + spec.period, Ev::IterationTrigger(app))?;
        if self.arrival_pending[app] || !self.executors[app].is_idle() {
            *self.skipped.entry(spec.app_id.to_string()).or_default() += 1;
            self.log(
                now,
                "skip",
                None,
                Some(app),
                None,
                Vec::new(),
                "previous iteration live".into(),
            );
            return Ok(());
        }
        let bound = self.fel.clock().cycles_at(spec.jitter_bound);
        let jitter = if bound == 0 {
            SimTime::ZERO
        } else {
            self.fel.clock().cycles(self.rng.gen_range(0..=bound))
        };
        self.triggered_at[app] = now;
        self.arrival_pending[app] = true;
        self.queue.push(now + jitter, Ev::RequestArrival(app))?;
        Ok(())
    }

    fn on_allocate(&mut self, now: SimTime) -> Result<(), SimError> {
        self.batch_scheduled = false;
        let mut batch = std::mem::take(&mut self.pending);
        batch.sort_by(|a, b| a.demand.app_id.cmp(&b.demand.app_id));
        let demands: Vec<Demand> = batch.iter().map(|r| r.demand.clone()).collect();
        let snapshot = self.collector.send_resource(now, &self.rm, &self.fel);
        self.log(
            now,
            "snapshot",
            None,
            None,
            None,
            free_cpus(&snapshot),
            String::new(),
        );
        let grants = allocate_batch(&self.policy, &demands, &snapshot, self.claim_cap)?;

        let mut granted = Vec::with_capacity(batch.len());
        for req in &batch {
            let snap = self.collector.send_resource(now, &self.rm, &self.fel);
            let candidates = get_resource(&req.demand, &snap);
            let grant = grants[&req.demand.app_id];
            let iteration = self.executors[req.app].iteration();
            let claim =
                self.rm
                    .reserve_resource(&candidates, &req.demand, grant, now, iteration)?;

            if !claim.resources.iter().all(|&c| candidates.contains(c)) {
                self.violation(
                    now,
                    format!("claim of {} outside its candidate set", claim.app_id),
                );
            }
            let size = claim.size();
            let cap = req.demand.max_cpus.min(self.claim_cap);
            if size != 0 && (size < req.demand.min_cpus || size > cap) {
                self.violation(now, format!("claim of {} has size {size}", claim.app_id));
            }
            if grant < req.demand.min_cpus && !claim.is_empty() {
                self.violation(
                    now,
                    format!("unmet demand of {} produced a claim", claim.app_id),
                );
            }

            self.allocations.push(AllocationRecord {
                time: now,
                app_id: req.demand.app_id.to_string(),
                iteration,
                requested_min: req.demand.min_cpus,
                requested_max: req.demand.max_cpus,
                granted: size,
                cpus: claim.resources.clone(),
                batch_size: batch.len(),
            });
            self.log(
                now,
                "grant",
                None,
                Some(req.app),
                Some(req.node.clone()),
                claim.resources.clone(),
                format!("batch={}", batch.len()),
            );
            self.claim_size[req.app] = size;
            granted.push((req.app, claim));
        }
        for (app, claim) in granted {
            let actions = self.executors[app].step(ExecutorEvent::Granted(claim))?;
            self.apply(now, app, actions)?;
        }
        Ok(())
    }

    fn apply(&mut self, now: SimTime, app: usize, actions: Vec<Action>) -> Result<(), SimError> {
        for action in actions {
            match action {
                Action::RequestResources { node, demand } => {
                    self.pending.push(PendingRequest { app, node, demand });
                    if !self.batch_scheduled {
                        self.batch_scheduled = true;
                        self.queue.push(now, Ev::AllocateBatch)?;
                    }
                }
                Action::DispatchFen {
                    node,
                    trace_ref,
                    cpus,
                } => self.dispatch(now, app, node, trace_ref, cpus)?,
                Action::Release(claim) => self.release(now, app, claim)?,
            }
        }
        if self.executors[app].is_idle() {
            let spec = &self.apps[app];
            self.iterations.push(IterationRecord {
                app_id: spec.app_id.to_string(),
                iteration: self.executors[app].iteration() - 1,
                triggered_at: self.triggered_at[app],
                finished_at: now,
                claim_size: self.claim_size[app],
            });
        }
        Ok(())
    }

    fn dispatch(
        &mut self,
        now: SimTime,
        app: usize,
        node: String,
        trace_ref: String,
        cpus: Vec<CpuId>,
    ) -> Result<(), SimError> {
        let spec = Arc::clone(&self.apps[app]);
        let traces = spec
            .traces(&trace_ref, cpus.len())
            .ok_or_else(|| SimError::MissingTrace {
                app: spec.app_id.clone(),
                trace_ref: trace_ref.clone(),
                claim_size: cpus.len(),
            })?
            .to_vec();
        let ctx = self.ec.dispatch_fen(
            &mut self.fel,
            &self.rm,
            &spec.app_id,
            &node,
            spec.air.id(),
            &cpus,
            traces,
            now,
        )?;
        self.ctx_app.insert(ctx, app);
        self.log(
            now,
            "execution_started",
            Some(ctx),
            Some(app),
            Some(node.clone()),
            cpus.clone(),
            trace_ref,
        );
        for cpu in cpus {
            self.log(
                now,
                "cpu_started",
                Some(ctx),
                Some(app),
                Some(node.clone()),
                vec![cpu],
                String::new(),
            );
        }
        Ok(())
    }

    fn release(&mut self, now: SimTime, app: usize, claim: Claim) -> Result<(), SimError> {
        let fel = &self.fel;
        self.rm.release_resource(&claim, |c| fel.is_busy(c))?;
        self.log(
            now,
            "release",
            None,
            Some(app),
            None,
            claim.resources,
            String::new(),
        );
        Ok(())
    }

    fn flush_fel(&mut self) -> Result<(), SimError> {
        let events: Vec<_> = self.fel.take_events().collect();
        for (t, e) in events {
            self.queue.push(t, Ev::Fel(e))?;
        }
        let done: Vec<_> = self.fel.take_completions().collect();
        for c in done {
            let app = self.ctx_app.get(&c.tag).copied();
            let node = self.ec.context(c.tag).map(|x| x.fen_id.clone());
            self.log(
                c.finished,
                "cpu_finished",
                Some(c.tag),
                app,
                node,
                vec![c.cpu],
                String::new(),
            );
            if let Some(ctx) = self.ec.trace_done(&c)? {
                self.queue.push(c.finished, Ev::FenComplete(ctx))?;
            }
        }
        Ok(())
    }

    /// Live claims must be pairwise disjoint, within the cap, and agree
    /// with the per-CPU reservation owners.
    fn check_claims(&mut self, now: SimTime) {
        let mut owner: Vec<Option<&AppId>> = vec![None; self.rm.num_cpus()];
        let mut found = Vec::new();
        for claim in self.rm.live_claims() {
            if claim.size() > self.claim_cap {
                found.push(format!("claim of {} exceeds cap", claim.app_id));
            }
            for &cpu in &claim.resources {
                if let Some(prev) = owner[cpu] {
                    found.push(format!("CPU {cpu} claimed by {prev} and {}", claim.app_id));
                }
                owner[cpu] = Some(&claim.app_id);
            }
        }
        for (cpu, o) in owner.iter().enumerate() {
            if *o != self.rm.reserved_by(cpu) {
                found.push(format!("CPU {cpu} reservation disagrees with live claims"));
            }
        }
        for f in found {
            self.violation(now, f);
        }
    }

    fn violation(&mut self, now: SimTime, what: String) {
        self.violations.push(format!("{} ns: {what}", now.as_ns()));
    }

    #[allow(clippy::too_many_arguments)]
    fn log(
        &mut self,
        time: SimTime,
        kind: &'static str,
        context: Option<u64>,
        app: Option<usize>,
        node: Option<String>,
        cpus: Vec<CpuId>,
        detail: String,
    ) {
        if !self.record_events {
            return;
        }
        self.events.push(EventRecord {
            time,
            kind,
            context,
            app_id: app.map(|a| self.apps[a].app_id.to_string()),
            node,
            cpus,
            detail,
        });
    }

    fn report(&self, horizon: SimTime) -> MetricsReport {
        MetricsReport {
            horizon,
            cpus: self.fel.cpu_metrics(horizon),
            bus: self.fel.bus_metrics(horizon),
            allocations: self.allocations.clone(),
            iterations: self.iterations.clone(),
            skipped: self.skipped.clone(),
            events: self.events.clone(),
            in_flight: self.ec.in_flight(),
            violations: self.violations.clone(),
            events_processed: self.queue.processed(),
        }
    }
}

fn free_cpus(s: &ResourceSnapshot) -> Vec<CpuId> {
    s.entries
        .iter()
        .filter(|e| e.reserved_by.is_none())
        .map(|e| e.cpu_id)
        .collect()
}
