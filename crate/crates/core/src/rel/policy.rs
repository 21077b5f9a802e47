use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{AppId, Demand, RelError, ScalabilityCurve, StandaloneLoadCurve};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Scalability,
    Load,
    FirstFit,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Scalability => "scalability",
            Self::Load => "load",
            Self::FirstFit => "firstfit",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = RelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scalability" => Ok(Self::Scalability),
            "load" => Ok(Self::Load),
            "firstfit" => Ok(Self::FirstFit),
            other => Err(RelError::UnknownPolicy(other.to_string())),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An allocation policy together with the per-application data it ranks by.
#[derive(Debug, Clone)]
pub enum Policy {
    Scalability(BTreeMap<AppId, ScalabilityCurve>),
    Load(BTreeMap<AppId, StandaloneLoadCurve>),
    FirstFit,
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Self::Scalability(_) => PolicyKind::Scalability,
            Self::Load(_) => PolicyKind::Load,
            Self::FirstFit => PolicyKind::FirstFit,
        }
    }

    pub fn allocate(
        &self,
        demands: &[Demand],
        free: usize,
        claim_cap: usize,
    ) -> Result<BTreeMap<AppId, usize>, RelError> {
        match self {
            Self::Scalability(curves) => policy_scalability(curves, demands, free, claim_cap),
            Self::Load(loads) => policy_load(loads, demands, free, claim_cap),
            Self::FirstFit => Ok(first_fit(demands, free, claim_cap)),
        }
    }
}

fn sorted(demands: &[Demand]) -> Vec<&Demand> {
    let mut v: Vec<&Demand> = demands.iter().collect();
    v.sort_by(|a, b| a.app_id.cmp(&b.app_id));
    v
}

/// Feasible grant counts for one app in a batch of `k` with `free` CPUs:
/// zero or `[min, hi]`, with zero excluded by the starvation guard.
fn feasible(d: &Demand, k: usize, free: usize, claim_cap: usize) -> Vec<usize> {
    let hi = d.max_cpus.min(claim_cap).min(free);
    let guard = free >= k && d.min_cpus == 1;
    let mut out = Vec::new();
    if !guard {
        out.push(0);
    }
    out.extend(d.min_cpus.max(1)..=hi);
    if out.is_empty() {
        out.push(0);
    }
    out
}

fn spread(v: &[usize]) -> usize {
    v.iter().max().unwrap_or(&0) - v.iter().min().unwrap_or(&0)
}

/// Maximizes total speedup over the batch. Among vectors whose objective is
/// within `1e-9` of the optimum, the smallest spread wins, then the
/// lexicographically smallest vector in app-id order.
pub fn policy_scalability(
    curves: &BTreeMap<AppId, ScalabilityCurve>,
    demands: &[Demand],
    free: usize,
    claim_cap: usize,
) -> Result<BTreeMap<AppId, usize>, RelError> {
    let apps = sorted(demands);
    let k = apps.len();
    let mut options = Vec::with_capacity(k);
    for d in &apps {
        let curve = curves
            .get(&d.app_id)
            .ok_or_else(|| RelError::MissingCurve(d.app_id.clone()))?;
        let opts: Vec<(usize, f64)> = feasible(d, k, free, claim_cap)
            .into_iter()
            .map(|n| (n, curve.at(n)))
            .collect();
        options.push(opts);
    }

    // best[i][b]: best objective of apps i.. with b CPUs left.
    let mut best = vec![vec![f64::NEG_INFINITY; free + 1]; k + 1];
    best[k].fill(0.0);
    for i in (0..k).rev() {
        for b in 0..=free {
            best[i][b] = options[i]
                .iter()
                .filter(|(n, _)| *n <= b)
                .map(|(n, s)| s + best[i + 1][b - n])
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let target = best[0][free];

    let mut chosen: Option<Vec<usize>> = None;
    let mut current = Vec::with_capacity(k);
    collect_optimal(
        &options,
        &best,
        0,
        free,
        0.0,
        target,
        &mut current,
        &mut chosen,
    );
    let vector = chosen.unwrap_or_else(|| vec![0; k]);
    Ok(apps
        .iter()
        .zip(vector)
        .map(|(d, n)| (d.app_id.clone(), n))
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn collect_optimal(
    options: &[Vec<(usize, f64)>],
    best: &[Vec<f64>],
    i: usize,
    budget: usize,
    acc: f64,
    target: f64,
    current: &mut Vec<usize>,
    chosen: &mut Option<Vec<usize>>,
) {
    if i == options.len() {
        let better = match chosen {
            None => true,
            Some(c) => (spread(current), &current[..]) < (spread(c), &c[..]),
        };
        if better {
            *chosen = Some(current.clone());
        }
        return;
    }
    for &(n, s) in &options[i] {
        if n > budget || acc + s + best[i + 1][budget - n] < target - EPS {
            continue;
        }
        current.push(n);
        collect_optimal(
            options,
            best,
            i + 1,
            budget - n,
            acc + s,
            target,
            current,
            chosen,
        );
        current.pop();
    }
}

/// Serves apps in descending order of standalone load at their maximum
/// request, holding back one CPU per lower-ranked app still waiting.
pub fn policy_load(
    loads: &BTreeMap<AppId, StandaloneLoadCurve>,
    demands: &[Demand],
    free: usize,
    claim_cap: usize,
) -> Result<BTreeMap<AppId, usize>, RelError> {
    let mut ranked = Vec::with_capacity(demands.len());
    for d in sorted(demands) {
        let curve = loads
            .get(&d.app_id)
            .ok_or_else(|| RelError::MissingCurve(d.app_id.clone()))?;
        ranked.push((curve.at(d.max_cpus), d));
    }
    ranked.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.app_id.cmp(&b.1.app_id))
    });

    let mut remaining = free;
    let mut grants = BTreeMap::new();
    for (rank, (_, d)) in ranked.iter().enumerate() {
        let lower = ranked.len() - rank - 1;
        let reserve = lower.min(remaining.saturating_sub(1));
        let hi = d.max_cpus.min(claim_cap).min(remaining);
        let mut g = hi.min(remaining - reserve);
        if g < d.min_cpus {
            g = 0;
        }
        remaining -= g;
        grants.insert(d.app_id.clone(), g);
    }
    Ok(grants)
}

/// Grants each app, in app-id order, as much as it asks for up to the cap.
pub fn first_fit(demands: &[Demand], free: usize, claim_cap: usize) -> BTreeMap<AppId, usize> {
    let mut remaining = free;
    sorted(demands)
        .into_iter()
        .map(|d| {
            let mut g = d.max_cpus.min(claim_cap).min(remaining);
            if g < d.min_cpus {
                g = 0;
            }
            remaining -= g;
            (d.app_id.clone(), g)
        })
        .collect()
}
