//! Acceptance suite. Runs without the libtest harness and prints one
//! `PASS`/`FAIL` line per criterion; any failure makes the binary exit
//! non-zero.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rasim::air::{select_edge, NodeKind};
use rasim::cli::{
    compare_policies, run_experiment, write_summary, Comparison, RunConfig, SummaryReport,
};
use rasim::fel::{Kernel, SimTime};
use rasim::rel::{policy_scalability, AppId, Demand, PolicyKind, ScalabilityCurve};
use rasim::workloads::{AppSpec, WorkloadConfig, WorkloadKind};

const LOAD_RUNTIME_LIMIT: Duration = Duration::from_secs(10);
const COMPARE_RUNTIME_LIMIT: Duration = Duration::from_secs(60);
const MIN_LOAD_GAP: f64 = 0.02;
const CURVE_TOLERANCE: f64 = 0.01;
const ORACLE_CASES: usize = 200;
const EPS: f64 = 1e-9;

fn verdict(id: u32, name: &str, pass: bool, detail: String) {
    println!(
        "criterion {id:>2} [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    if !pass {
        panic!("criterion {id} ({name}) failed");
    }
}

fn comparison() -> &'static (Comparison, Duration) {
    static CELL: OnceLock<(Comparison, Duration)> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let cmp = compare_policies(
            &RunConfig::default(),
            &[PolicyKind::Scalability, PolicyKind::Load],
        )
        .expect("default comparison runs");
        (cmp, start.elapsed())
    })
}

fn column(kind: PolicyKind) -> &'static SummaryReport {
    comparison()
        .0
        .columns
        .iter()
        .find(|c| c.policy == kind)
        .unwrap()
}

/// Grants of every timestamp at which more than one app was served, per run.
fn joint_epochs(s: &SummaryReport) -> Vec<BTreeMap<String, usize>> {
    let mut out = Vec::new();
    for r in &s.runs {
        let mut by_time: BTreeMap<SimTime, BTreeMap<String, usize>> = BTreeMap::new();
        for a in &r.report.allocations {
            by_time
                .entry(a.time)
                .or_default()
                .insert(a.app_id.clone(), a.granted);
        }
        out.extend(by_time.into_values().filter(|g| g.len() > 1));
    }
    out
}

fn split_check(s: &SummaryReport, audio: usize, corner: usize) -> (bool, String) {
    let epochs = joint_epochs(s);
    let good = epochs
        .iter()
        .filter(|g| g.get("audio_eq") == Some(&audio) && g.get("corner_detection") == Some(&corner))
        .count();
    let pass = !epochs.is_empty() && good == epochs.len();
    (
        pass,
        format!(
            "{good}/{} co-request epochs granted corner={corner} audio={audio}",
            epochs.len()
        ),
    )
}

fn c01_load_policy_split() {
    let cfg = RunConfig {
        policy: "load".into(),
        ..Default::default()
    };
    let start = Instant::now();
    let s = run_experiment(&cfg).unwrap();
    let elapsed = start.elapsed();
    let (ok, detail) = split_check(&s, 1, 5);
    verdict(
        1,
        "allocation split, load-based",
        ok && elapsed < LOAD_RUNTIME_LIMIT,
        format!(
            "{detail}; {:.2} s (limit {} s)",
            elapsed.as_secs_f64(),
            LOAD_RUNTIME_LIMIT.as_secs()
        ),
    );
}

fn c02_scalability_policy_split() {
    let (ok, detail) = split_check(column(PolicyKind::Scalability), 3, 3);
    verdict(2, "allocation split, scalability-based", ok, detail);
}

fn c03_utilization_ordering() {
    let load = column(PolicyKind::Load).mean_load();
    let scal = column(PolicyKind::Scalability).mean_load();
    let gap = load - scal;
    verdict(
        3,
        "utilization ordering",
        gap >= MIN_LOAD_GAP,
        format!(
            "load {:.2}% vs scalability {:.2}%, gap {:.2} pp (min {:.1} pp)",
            load * 100.0,
            scal * 100.0,
            gap * 100.0,
            MIN_LOAD_GAP * 100.0
        ),
    );
}

fn c04_cache_access_ordering() {
    let load = column(PolicyKind::Load).cache_accesses_sum();
    let scal = column(PolicyKind::Scalability).cache_accesses_sum();
    verdict(
        4,
        "cache-access ordering",
        load >= scal,
        format!("load {load} >= scalability {scal} (summed over runs)"),
    );
}

/// Reference allocator: enumerate every grant vector, keep the feasible
/// ones, maximize total speedup, break ties by spread then lexicographic
/// order.
fn enumerate_best(
    curves: &[Vec<f64>],
    bounds: &[(usize, usize)],
    free: usize,
    cap: usize,
) -> (f64, Vec<usize>) {
    let k = bounds.len();
    let speed = |i: usize, n: usize| {
        if n == 0 {
            0.0
        } else {
            curves[i][(n - 1).min(curves[i].len() - 1)]
        }
    };
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    let total = (free + 1).pow(k as u32);
    for code in 0..total {
        let mut v = Vec::with_capacity(k);
        let mut c = code;
        for _ in 0..k {
            v.push(c % (free + 1));
            c /= free + 1;
        }
        if v.iter().sum::<usize>() > free {
            continue;
        }
        let feasible = v.iter().zip(bounds).all(|(&n, &(lo, hi))| {
            let range = n == 0 || (lo..=hi.min(cap)).contains(&n);
            let starve = free >= k && lo == 1 && n == 0;
            range && !starve
        });
        if !feasible {
            continue;
        }
        let obj: f64 = v.iter().enumerate().map(|(i, &n)| speed(i, n)).sum();
        let spread = v.iter().max().unwrap() - v.iter().min().unwrap();
        let better = match &best {
            None => true,
            Some((bo, bs, bv)) => obj > bo + EPS || (obj >= bo - EPS && (spread, &v) < (*bs, bv)),
        };
        if better {
            best = Some((obj, spread, v));
        }
    }
    best.map(|(o, _, v)| (o, v)).unwrap_or((0.0, vec![0; k]))
}

fn c05_policy_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ca1ab1e);
    let mut mismatches = Vec::new();
    for case in 0..ORACLE_CASES {
        let cpus = rng.gen_range(1..=8usize);
        let k = rng.gen_range(1..=3usize);
        let free = rng.gen_range(0..=cpus);
        let cap = cpus.saturating_sub(1).max(1);
        let mut curves = Vec::new();
        let mut bounds = Vec::new();
        for _ in 0..k {
            let mut c = vec![1.0];
            for _ in 1..cpus.max(2) {
                // Coarse increments make exact ties common.
                let step = rng.gen_range(0..=4) as f64 * 0.25;
                c.push(c.last().unwrap() + step);
            }
            curves.push(c);
            let a = rng.gen_range(1..=cpus);
            let b = rng.gen_range(1..=cpus);
            bounds.push((a.min(b), a.max(b)));
        }
        let ids: Vec<AppId> = (0..k).map(|i| AppId::new(&format!("app{i}"))).collect();
        let table = ids
            .iter()
            .zip(&curves)
            .map(|(id, c)| {
                (
                    id.clone(),
                    ScalabilityCurve::new(id.clone(), c.clone()).unwrap(),
                )
            })
            .collect();
        let demands: Vec<Demand> = ids
            .iter()
            .zip(&bounds)
            .map(|(id, &(lo, hi))| Demand {
                app_id: id.clone(),
                min_cpus: lo,
                max_cpus: hi,
                max_load: None,
            })
            .collect();
        let got = policy_scalability(&table, &demands, free, cap).unwrap();
        let got_v: Vec<usize> = ids.iter().map(|id| got[id]).collect();
        let got_obj: f64 = got_v
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                if n == 0 {
                    0.0
                } else {
                    curves[i][(n - 1).min(curves[i].len() - 1)]
                }
            })
            .sum();
        let (obj, want) = enumerate_best(&curves, &bounds, free, cap);
        if (got_obj - obj).abs() > EPS || got_v != want {
            mismatches.push(format!("case {case}: got {got_v:?} want {want:?}"));
        }
    }
    verdict(
        5,
        "policy-oracle equivalence",
        mismatches.is_empty(),
        format!(
            "{}/{ORACLE_CASES} randomized batches match exhaustive enumeration{}",
            ORACLE_CASES - mismatches.len(),
            mismatches
                .first()
                .map(|m| format!(" ({m})"))
                .unwrap_or_default()
        ),
    );
}

/// Replays grant/release rows of the event log and checks exclusivity and
/// the cap independently of the simulator's own checker.
fn replay_claims(s: &SummaryReport, cap: usize) -> Vec<String> {
    let mut problems = Vec::new();
    for r in &s.runs {
        problems.extend(r.report.violations.iter().cloned());
        let mut owner: BTreeMap<usize, String> = BTreeMap::new();
        for e in &r.report.events {
            let app = e.app_id.clone().unwrap_or_default();
            match e.kind {
                "grant" => {
                    if e.cpus.len() > cap {
                        problems.push(format!("run {} grant of {} CPUs", r.run, e.cpus.len()));
                    }
                    for &c in &e.cpus {
                        if let Some(prev) = owner.insert(c, app.clone()) {
                            problems
                                .push(format!("run {} CPU {c} held by {prev} and {app}", r.run));
                        }
                    }
                }
                "release" => {
                    for &c in &e.cpus {
                        if owner.remove(&c).as_deref() != Some(app.as_str()) {
                            problems
                                .push(format!("run {} CPU {c} released by non-owner {app}", r.run));
                        }
                    }
                }
                _ => {}
            }
        }
        for a in &r.report.allocations {
            if a.granted != 0
                && (a.granted < a.requested_min || a.granted > a.requested_max.min(cap))
            {
                problems.push(format!("run {} grant {} outside demand", r.run, a.granted));
            }
            if a.granted != a.cpus.len() {
                problems.push(format!("run {} grant count mismatch", r.run));
            }
        }
    }
    problems
}

/// Needs at least three CPUs, more than a cap of two allows.
const WIDE_AIR: &str = r#"{
  "id": "wide",
  "entry": "acquire",
  "nodes": [
    {"id": "acquire", "kind": "get_resource", "demand": {"min_cpus": 3, "max_cpus": 5}},
    {"id": "work", "kind": "fen", "trace": "wide"},
    {"id": "release", "kind": "release_resource"},
    {"id": "denied", "kind": "release_resource"}
  ],
  "edges": [
    {"from": "acquire", "to": "work", "guard": {"ge": 3}},
    {"from": "acquire", "to": "denied", "guard": "default"},
    {"from": "work", "to": "release", "guard": "always"}
  ]
}"#;

fn c06_claim_invariants() {
    let cap = RunConfig::default().claim_cap();
    let mut problems = Vec::new();
    let mut grants = 0;
    for s in &comparison().0.columns {
        problems.extend(replay_claims(s, cap));
        grants += s
            .runs
            .iter()
            .map(|r| r.report.allocations.len())
            .sum::<usize>();
    }

    // A demand that can never be met must yield an empty claim.
    let mut cfg = RunConfig {
        runs: 1,
        sim_time_ms: 1000,
        claim_cap: Some(2),
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let air = dir.path().join("wide.json");
    std::fs::write(&air, WIDE_AIR).unwrap();
    let mut w = WorkloadConfig::new(WorkloadKind::AudioEq);
    w.air = Some(air);
    cfg.workloads = vec![w];
    let s = run_experiment(&cfg).unwrap();
    let allocs = &s.runs[0].report.allocations;
    let denied = !allocs.is_empty() && allocs.iter().all(|a| a.granted == 0 && a.cpus.is_empty());
    if !denied {
        problems.push("unmet demand produced a non-empty claim".into());
    }
    problems.extend(replay_claims(&s, 2));

    verdict(
        6,
        "claim invariants",
        problems.is_empty(),
        format!(
            "{grants} grants checked, cap {cap}, {} violations{}",
            problems.len(),
            problems
                .first()
                .map(|p| format!(" ({p})"))
                .unwrap_or_default()
        ),
    );
}

fn c07_conservation_and_determinism() {
    let horizon_cycles = 3_500_000_000u64 / 10;
    let mut conserved = true;
    for s in &comparison().0.columns {
        for r in &s.runs {
            conserved &= r
                .report
                .cpus
                .iter()
                .all(|c| c.busy_cycles + c.idle_cycles == horizon_cycles);
        }
    }

    let cfg = RunConfig::default();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_summary(&run_experiment(&cfg).unwrap(), a.path()).unwrap();
    write_summary(&run_experiment(&cfg).unwrap(), b.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let identical = names.iter().all(|n| {
        std::fs::read(a.path().join(n)).unwrap() == std::fs::read(b.path().join(n)).unwrap()
    });
    verdict(
        7,
        "conservation and determinism",
        conserved && identical && names.len() >= 5,
        format!(
            "busy+idle = {horizon_cycles} cycles on every CPU: {conserved}; {} output files byte-identical: {identical}",
            names.len()
        ),
    );
}

/// FEN trace set the AIR selects for a claim of `n` CPUs.
fn branch_traces(spec: &AppSpec, n: usize) -> Vec<Arc<rasim::fel::Trace>> {
    let entry = spec.air.entry();
    let fen = select_edge(&spec.air, entry, n).unwrap();
    let NodeKind::Fen { trace_ref } = &spec.air.node(fen).unwrap().kind else {
        panic!("claim of {n} does not lead to a FEN");
    };
    spec.traces(trace_ref, n).unwrap().to_vec()
}

fn c08_curve_self_consistency() {
    let cfg = RunConfig::default();
    let s = column(PolicyKind::Load);
    let mut worst: f64 = 0.0;
    for spec in &s.apps {
        let mut throughput = Vec::new();
        for n in 1..=5 {
            let traces = branch_traces(spec, n);
            let work: u64 = traces.iter().map(|t| t.compute_cycles()).sum();
            let mut k = Kernel::new(&cfg.platform, false).unwrap();
            for (cpu, t) in traces.into_iter().enumerate() {
                k.execute_trace(cpu, t, SimTime::ZERO).unwrap();
            }
            k.run_to_idle().unwrap();
            let end = k.completions().iter().map(|c| c.finished).max().unwrap();
            throughput.push(work as f64 / end.as_ns() as f64);
        }
        for n in 1..=5 {
            let measured = throughput[n - 1] / throughput[0];
            let stored = spec.scalability.at(n);
            let rel = (stored - measured).abs() / measured;
            worst = worst.max(rel);
        }
    }
    verdict(
        8,
        "curve self-consistency",
        worst <= CURVE_TOLERANCE,
        format!(
            "max relative deviation {:.4}% (limit {:.0}%)",
            worst * 100.0,
            CURVE_TOLERANCE * 100.0
        ),
    );
}

/// Per CPU, dispatches must alternate start/finish with matching contexts,
/// and no CPU may start a second context before its first finishes.
fn preemption_free(s: &SummaryReport) -> Result<usize, String> {
    let mut contexts = 0;
    for r in &s.runs {
        let mut running: BTreeMap<usize, u64> = BTreeMap::new();
        let mut started: BTreeSet<u64> = BTreeSet::new();
        for e in &r.report.events {
            match e.kind {
                "cpu_started" => {
                    let ctx = e.context.unwrap();
                    if let Some(prev) = running.insert(e.cpus[0], ctx) {
                        return Err(format!(
                            "run {} CPU {} started {ctx} while {prev} ran",
                            r.run, e.cpus[0]
                        ));
                    }
                    started.insert(ctx);
                }
                "cpu_finished" if running.remove(&e.cpus[0]) != e.context => {
                    return Err(format!(
                        "run {} CPU {} finished a context it was not running",
                        r.run, e.cpus[0]
                    ));
                }
                _ => {}
            }
        }
        let in_flight: BTreeSet<u64> = r.report.in_flight.iter().copied().collect();
        if running.values().any(|c| !in_flight.contains(c)) {
            return Err(format!(
                "run {} has unfinished contexts not reported in flight",
                r.run
            ));
        }
        contexts += started.len();
    }
    Ok(contexts)
}

fn c09_run_to_completion() {
    let mut problems = Vec::new();
    let mut contexts = 0;
    for s in &comparison().0.columns {
        match preemption_free(s) {
            Ok(n) => contexts += n,
            Err(e) => problems.push(e),
        }
        if s.runs
            .iter()
            .any(|r| r.report.skipped.values().any(|&n| n > 0))
        {
            problems.push("default scenario overran".into());
        }
    }

    // Forced overruns: a period far shorter than one iteration.
    let mut cfg = RunConfig {
        runs: 1,
        sim_time_ms: 1000,
        ..Default::default()
    };
    let mut w = WorkloadConfig::new(WorkloadKind::AudioEq);
    w.period_ms = Some(20);
    cfg.workloads = vec![w, WorkloadConfig::new(WorkloadKind::CornerDetection)];
    let s = run_experiment(&cfg).unwrap();
    let skipped = s.runs[0].report.skipped["audio_eq"];
    if skipped == 0 {
        problems.push("overload produced no skipped iterations".into());
    }
    if let Err(e) = preemption_free(&s) {
        problems.push(e);
    }

    verdict(
        9,
        "run-to-completion",
        problems.is_empty(),
        format!(
            "{contexts} contexts contiguous; overload scenario skipped {skipped} iterations{}",
            problems
                .first()
                .map(|p| format!(" ({p})"))
                .unwrap_or_default()
        ),
    );
}

fn c10_desk_scale_runtime() {
    let (cmp, elapsed) = comparison();
    let runs: usize = cmp.columns.iter().map(|c| c.runs.len()).sum();
    verdict(
        10,
        "desk-scale runtime",
        *elapsed < COMPARE_RUNTIME_LIMIT && runs == 10,
        format!(
            "{runs} runs over two policies in {:.2} s (limit {} s)",
            elapsed.as_secs_f64(),
            COMPARE_RUNTIME_LIMIT.as_secs()
        ),
    );
}

fn main() -> ExitCode {
    let criteria: [(&str, fn()); 10] = [
        ("c01_load_policy_split", c01_load_policy_split),
        ("c02_scalability_policy_split", c02_scalability_policy_split),
        ("c03_utilization_ordering", c03_utilization_ordering),
        ("c04_cache_access_ordering", c04_cache_access_ordering),
        (
            "c05_policy_oracle_equivalence",
            c05_policy_oracle_equivalence,
        ),
        ("c06_claim_invariants", c06_claim_invariants),
        (
            "c07_conservation_and_determinism",
            c07_conservation_and_determinism,
        ),
        ("c08_curve_self_consistency", c08_curve_self_consistency),
        ("c09_run_to_completion", c09_run_to_completion),
        ("c10_desk_scale_runtime", c10_desk_scale_runtime),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        if std::panic::catch_unwind(run).is_err() {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
