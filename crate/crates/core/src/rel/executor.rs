use std::fmt;
use std::sync::Arc;

use super::{AppId, Claim, Demand, RelError};
use crate::air::{select_edge, AirGraph, NodeKind};
use crate::fel::CpuId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Phase {
    Idle,
    AwaitingGrant(String),
    Running(String),
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Idle => f.write_str("idle"),
            Phase::AwaitingGrant(n) => write!(f, "awaiting grant at `{n}`"),
            Phase::Running(n) => write!(f, "running `{n}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExecutorEvent {
    Trigger,
    Granted(Claim),
    FenComplete,
}

impl ExecutorEvent {
    fn name(&self) -> &'static str {
        match self {
            ExecutorEvent::Trigger => "trigger",
            ExecutorEvent::Granted(_) => "grant",
            ExecutorEvent::FenComplete => "fen completion",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    RequestResources {
        node: String,
        demand: Demand,
    },
    DispatchFen {
        node: String,
        trace_ref: String,
        cpus: Vec<CpuId>,
    },
    Release(Claim),
}

/// Walks one application's AIR, one traversal per iteration. Parks on
/// `get_resource` until granted and on FENs until their completion.
#[derive(Debug, Clone)]
pub struct Executor {
    app_id: AppId,
    air: Arc<AirGraph>,
    phase: Phase,
    claim: Option<Claim>,
    held: usize,
    iteration: u64,
}

impl Executor {
    pub fn new(app_id: AppId, air: Arc<AirGraph>) -> Self {
        Self {
            app_id,
            air,
            phase: Phase::Idle,
            claim: None,
            held: 0,
            iteration: 0,
        }
    }

    pub fn app_id(&self) -> &AppId {
        &self.app_id
    }

    pub fn air(&self) -> &AirGraph {
        &self.air
    }

    pub fn phase(&self) -> &Phase {
        &self.phase
    }

    pub fn is_idle(&self) -> bool {
        self.phase == Phase::Idle
    }

    /// Completed iterations.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn live_claim(&self) -> Option<&Claim> {
        self.claim.as_ref()
    }

    pub fn step(&mut self, event: ExecutorEvent) -> Result<Vec<Action>, RelError> {
        let mut actions = Vec::new();
        match (&self.phase, event) {
            (Phase::Idle, ExecutorEvent::Trigger) => {
                let entry = self.air.entry().to_string();
                self.walk(entry, &mut actions)?;
            }
            (Phase::AwaitingGrant(node), ExecutorEvent::Granted(claim)) => {
                let node = node.clone();
                self.held = claim.size();
                if !claim.is_empty() {
                    self.claim = Some(claim);
                }
                self.advance(node, &mut actions)?;
            }
            (Phase::Running(node), ExecutorEvent::FenComplete) => {
                let node = node.clone();
                self.advance(node, &mut actions)?;
            }
            (phase, event) => {
                return Err(RelError::ProtocolViolation {
                    app: self.app_id.clone(),
                    event: event.name().to_string(),
                    phase: phase.to_string(),
                })
            }
        }
        Ok(actions)
    }

    fn advance(&mut self, from: String, actions: &mut Vec<Action>) -> Result<(), RelError> {
        if self.air.is_leaf(&from) {
            self.retire();
            return Ok(());
        }
        let next = select_edge(&self.air, &from, self.held)?.to_string();
        self.walk(next, actions)
    }

    fn walk(&mut self, mut node: String, actions: &mut Vec<Action>) -> Result<(), RelError> {
        let air = Arc::clone(&self.air);
        loop {
            let kind = &air
                .node(&node)
                .ok_or_else(|| crate::air::AirError::UnknownNode(node.clone()))?
                .kind;
            match kind {
                NodeKind::GetResource(d) => {
                    actions.push(Action::RequestResources {
                        node: node.clone(),
                        demand: Demand {
                            app_id: self.app_id.clone(),
                            min_cpus: d.min_cpus,
                            max_cpus: d.max_cpus,
                            max_load: d.max_load,
                        },
                    });
                    self.phase = Phase::AwaitingGrant(node);
                    return Ok(());
                }
                NodeKind::Fen { trace_ref } => {
                    if let Some(claim) = &self.claim {
                        actions.push(Action::DispatchFen {
                            node: node.clone(),
                            trace_ref: trace_ref.clone(),
                            cpus: claim.resources.clone(),
                        });
                        self.phase = Phase::Running(node);
                        return Ok(());
                    }
                }
                NodeKind::ReleaseResource => {
                    if let Some(claim) = self.claim.take() {
                        actions.push(Action::Release(claim));
                    }
                    self.held = 0;
                }
            }
            if air.is_leaf(&node) {
                self.retire();
                return Ok(());
            }
            node = select_edge(&air, &node, self.held)?.to_string();
        }
    }

    fn retire(&mut self) {
        self.phase = Phase::Idle;
        self.claim = None;
        self.held = 0;
        self.iteration += 1;
    }
}
