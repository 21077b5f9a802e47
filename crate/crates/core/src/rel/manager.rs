use std::collections::{BTreeMap, BTreeSet};

use super::{AppId, CandidateSet, Claim, Demand, Policy, RelError};
use crate::fel::{CpuId, SimTime};
use crate::interface::ResourceSnapshot;

/// Every CPU that is unreserved and, when the demand sets `max_load`, whose
/// recent load does not exceed it. Reserves nothing.
pub fn get_resource(demand: &Demand, snapshot: &ResourceSnapshot) -> CandidateSet {
    CandidateSet::new(
        snapshot
            .entries
            .iter()
            .filter(|e| e.reserved_by.is_none())
            .filter(|e| demand.max_load.is_none_or(|m| e.recent_load <= m))
            .map(|e| e.cpu_id)
            .collect(),
    )
}

/// Decides grant counts for requests arriving at the same instant. The
/// policy sees the number of free CPUs; grants are then clipped, in app
/// order, to what each demand's own candidate set still offers.
pub fn allocate_batch(
    policy: &Policy,
    demands: &[Demand],
    snapshot: &ResourceSnapshot,
    claim_cap: usize,
) -> Result<BTreeMap<AppId, usize>, RelError> {
    let free = snapshot
        .entries
        .iter()
        .filter(|e| e.reserved_by.is_none())
        .count();
    let wanted = policy.allocate(demands, free, claim_cap)?;

    let mut ordered: Vec<&Demand> = demands.iter().collect();
    ordered.sort_by(|a, b| a.app_id.cmp(&b.app_id));
    let mut taken = BTreeSet::new();
    let mut grants = BTreeMap::new();
    for d in ordered {
        let available: Vec<CpuId> = get_resource(d, snapshot)
            .resources()
            .iter()
            .copied()
            .filter(|c| !taken.contains(c))
            .collect();
        let mut g = wanted
            .get(&d.app_id)
            .copied()
            .unwrap_or(0)
            .min(available.len());
        if g < d.min_cpus {
            g = 0;
        }
        taken.extend(available.into_iter().take(g));
        grants.insert(d.app_id.clone(), g);
    }
    Ok(grants)
}

/// Central owner of reservation state.
#[derive(Debug, Clone)]
pub struct ResourceManager {
    reserved_by: Vec<Option<AppId>>,
    live: BTreeMap<AppId, Claim>,
    claim_cap: usize,
}

impl ResourceManager {
    pub fn new(num_cpus: usize, claim_cap: usize) -> Self {
        Self {
            reserved_by: vec![None; num_cpus],
            live: BTreeMap::new(),
            claim_cap,
        }
    }

    pub fn claim_cap(&self) -> usize {
        self.claim_cap
    }

    pub fn num_cpus(&self) -> usize {
        self.reserved_by.len()
    }

    pub fn reserved_by(&self, cpu: CpuId) -> Option<&AppId> {
        self.reserved_by.get(cpu).and_then(Option::as_ref)
    }

    pub fn reservations(&self) -> &[Option<AppId>] {
        &self.reserved_by
    }

    pub fn live_claims(&self) -> impl Iterator<Item = &Claim> {
        self.live.values()
    }

    pub fn free_count(&self) -> usize {
        self.reserved_by.iter().filter(|r| r.is_none()).count()
    }

    /// Reserves the first `grant_count` candidates for the demanding app.
    /// A grant below `min_cpus` reserves nothing and yields an empty claim.
    pub fn reserve_resource(
        &mut self,
        candidates: &CandidateSet,
        demand: &Demand,
        grant_count: usize,
        now: SimTime,
        iteration: u64,
    ) -> Result<Claim, RelError> {
        if grant_count > candidates.len() || grant_count > self.claim_cap {
            return Err(RelError::GrantOutOfRange {
                grant: grant_count,
                available: candidates.len(),
                cap: self.claim_cap,
            });
        }
        if grant_count == 0 || grant_count < demand.min_cpus {
            return Ok(Claim::empty(demand.app_id.clone(), now, iteration));
        }
        if self.live.contains_key(&demand.app_id) {
            return Err(RelError::ProtocolViolation {
                app: demand.app_id.clone(),
                event: "reserve".into(),
                phase: "holding a live claim".into(),
            });
        }
        let chosen = &candidates.resources()[..grant_count];
        for &cpu in chosen {
            if let Some(owner) = self.reserved_by.get(cpu).cloned().flatten() {
                return Err(RelError::AlreadyReserved { cpu, owner });
            }
        }
        for &cpu in chosen {
            self.reserved_by[cpu] = Some(demand.app_id.clone());
        }
        let claim = Claim {
            app_id: demand.app_id.clone(),
            resources: chosen.to_vec(),
            granted_at: now,
            iteration,
        };
        self.live.insert(demand.app_id.clone(), claim.clone());
        Ok(claim)
    }

    /// Returns the claim's CPUs to the unreserved state. `is_busy` reports
    /// whether a CPU is still executing a trace.
    pub fn release_resource(
        &mut self,
        claim: &Claim,
        is_busy: impl Fn(CpuId) -> bool,
    ) -> Result<(), RelError> {
        if claim.is_empty() {
            return Ok(());
        }
        match self.live.get(&claim.app_id) {
            Some(live) if live == claim => {}
            _ => return Err(RelError::ClaimNotLive(claim.app_id.clone())),
        }
        if let Some(&cpu) = claim.resources.iter().find(|&&c| is_busy(c)) {
            return Err(RelError::CpuStillBusy(cpu));
        }
        for &cpu in &claim.resources {
            self.reserved_by[cpu] = None;
        }
        self.live.remove(&claim.app_id);
        Ok(())
    }
}
