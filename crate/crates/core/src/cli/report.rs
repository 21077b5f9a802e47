use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::experiment::{Comparison, ExperimentError, SummaryReport};
use crate::fel::CpuId;

/// `num / den` with four fractional digits, rounding half to even.
pub fn fmt_ratio(num: u128, den: u128) -> String {
    if den == 0 {
        return "0.0000".into();
    }
    let scaled = num * 10_000;
    let mut q = scaled / den;
    let r = scaled % den;
    if 2 * r > den || (2 * r == den && q % 2 == 1) {
        q += 1;
    }
    format!("{}.{:04}", q / 10_000, q % 10_000)
}

fn cpu_list(cpus: &[CpuId]) -> String {
    cpus.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Output {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ExperimentError + '_ {
    move |e| ExperimentError::Output {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), ExperimentError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

const CPU_HEADER: [&str; 6] = [
    "cpu_id",
    "busy_cycles",
    "idle_cycles",
    "load",
    "cache_accesses",
    "cache_hits",
];

/// Writes per-run CSVs, the averaged CSV, the event log and `summary.txt`
/// into `dir`.
pub fn write_summary(summary: &SummaryReport, dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    for r in &summary.runs {
        let path = dir.join(format!("run_{}_cpu.csv", r.run));
        write_csv(
            &path,
            &CPU_HEADER,
            r.report.cpus.iter().map(|c| {
                vec![
                    c.cpu_id.to_string(),
                    c.busy_cycles.to_string(),
                    c.idle_cycles.to_string(),
                    fmt_ratio(c.busy_cycles.into(), c.total_cycles().into()),
                    c.cache_accesses.to_string(),
                    c.cache_hits.to_string(),
                ]
            }),
        )?;
        let path = dir.join(format!("run_{}_alloc.csv", r.run));
        write_csv(
            &path,
            &[
                "time_ns",
                "app_id",
                "requested_min",
                "requested_max",
                "granted",
                "cpu_list",
            ],
            r.report.allocations.iter().map(|a| {
                vec![
                    a.time.as_ns().to_string(),
                    a.app_id.clone(),
                    a.requested_min.to_string(),
                    a.requested_max.to_string(),
                    a.granted.to_string(),
                    cpu_list(&a.cpus),
                ]
            }),
        )?;
    }

    let runs = summary.runs.len() as u128;
    let ncpu = summary.runs.first().map_or(0, |r| r.report.cpus.len());
    let avg_rows = (0..ncpu).map(|i| {
        let sum = |f: &dyn Fn(&crate::fel::CpuMetrics) -> u64| -> u128 {
            summary
                .runs
                .iter()
                .map(|r| u128::from(f(&r.report.cpus[i])))
                .sum()
        };
        let busy = sum(&|c| c.busy_cycles);
        let total = sum(&|c| c.total_cycles());
        vec![
            i.to_string(),
            fmt_ratio(busy, runs),
            fmt_ratio(sum(&|c| c.idle_cycles), runs),
            fmt_ratio(busy, total),
            fmt_ratio(sum(&|c| c.cache_accesses), runs),
            fmt_ratio(sum(&|c| c.cache_hits), runs),
        ]
    });
    write_csv(&dir.join("avg_cpu.csv"), &CPU_HEADER, avg_rows)?;

    let event_rows = summary.runs.iter().flat_map(|r| {
        r.report.events.iter().map(move |e| {
            vec![
                r.run.to_string(),
                e.time.as_ns().to_string(),
                e.kind.to_string(),
                e.context.map(|c| c.to_string()).unwrap_or_default(),
                e.app_id.clone().unwrap_or_default(),
                e.node.clone().unwrap_or_default(),
                cpu_list(&e.cpus),
                e.detail.clone(),
            ]
        })
    });
    write_csv(
        &dir.join("events.csv"),
        &[
            "run", "time_ns", "kind", "context", "app_id", "node", "cpus", "detail",
        ],
        event_rows,
    )?;

    let path = dir.join("summary.txt");
    fs::write(&path, summary_text(summary)).map_err(io_err(&path))
}

fn summary_text(s: &SummaryReport) -> String {
    let mut out = String::new();
    let first = s.runs.first();
    let seeds: Vec<String> = s.runs.iter().map(|r| r.seed.to_string()).collect();
    let (busy, total) = s.mean_load_ratio();
    let (bb, bt) = s.bus_load_ratio();
    let runs = s.runs.len() as u128;

    let _ = writeln!(out, "policy: {}", s.policy);
    let _ = writeln!(out, "runs: {} (seeds {})", s.runs.len(), seeds.join(", "));
    if let Some(r) = first {
        let _ = writeln!(out, "horizon_ns: {}", r.report.horizon.as_ns());
    }
    let _ = writeln!(out, "average_cpu_load: {}", fmt_ratio(busy, total));
    let _ = writeln!(
        out,
        "mean_cache_accesses: {}",
        fmt_ratio(s.cache_accesses_sum(), runs)
    );
    let _ = writeln!(out, "bus_load: {}", fmt_ratio(bb, bt));

    let _ = writeln!(out, "\nper-run average load:");
    for r in &s.runs {
        let b: u128 = r
            .report
            .cpus
            .iter()
            .map(|c| u128::from(c.busy_cycles))
            .sum();
        let t: u128 = r
            .report
            .cpus
            .iter()
            .map(|c| u128::from(c.total_cycles()))
            .sum();
        let _ = writeln!(
            out,
            "  run {} (seed {}): {}",
            r.run,
            r.seed,
            fmt_ratio(b, t)
        );
    }

    let _ = writeln!(out, "\napplications:");
    for a in &s.apps {
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.4}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(
            out,
            "  {}: period {} ms, speedup [{}], standalone load [{}]",
            a.app_id,
            a.period.as_ns() / 1_000_000,
            fmt(a.scalability.values()),
            fmt(a.standalone_load.values())
        );
    }

    let _ = writeln!(out, "\njoint allocations (run, time_ms: grants):");
    for r in &s.runs {
        let mut by_time: BTreeMap<u64, Vec<String>> = BTreeMap::new();
        for a in r.report.allocations.iter().filter(|a| a.batch_size > 1) {
            by_time
                .entry(a.time.as_ns())
                .or_default()
                .push(format!("{}={}", a.app_id, a.granted));
        }
        for (t, grants) in by_time {
            let _ = writeln!(
                out,
                "  run {}, {}: {}",
                r.run,
                fmt_ratio(t.into(), 1_000_000),
                grants.join(" ")
            );
        }
    }

    let _ = writeln!(out, "\niterations (all runs):");
    let mut lat: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for r in &s.runs {
        for it in &r.report.iterations {
            lat.entry(&it.app_id)
                .or_default()
                .push(it.latency().as_ns());
        }
    }
    for (app, v) in &lat {
        let sum: u128 = v.iter().map(|&x| u128::from(x)).sum();
        let max = v.iter().max().copied().unwrap_or(0);
        let _ = writeln!(
            out,
            "  {app}: completed {}, mean latency {} ms, max latency {} ms",
            v.len(),
            fmt_ratio(sum, v.len() as u128 * 1_000_000),
            fmt_ratio(max.into(), 1_000_000)
        );
    }

    let _ = writeln!(out, "\nskipped iterations (all runs):");
    let mut skipped: BTreeMap<&str, u64> = BTreeMap::new();
    for r in &s.runs {
        for (app, n) in &r.report.skipped {
            *skipped.entry(app).or_default() += n;
        }
    }
    for (app, n) in skipped {
        let _ = writeln!(out, "  {app}: {n}");
    }

    let in_flight: usize = s.runs.iter().map(|r| r.report.in_flight.len()).sum();
    let violations: usize = s.runs.iter().map(|r| r.report.violations.len()).sum();
    let _ = writeln!(out, "\nin-flight contexts at horizon: {in_flight}");
    let _ = writeln!(out, "claim checker violations: {violations}");
    out
}

/// Writes each policy's outputs to `dir/<index>_<policy>/` and the
/// side-by-side table to `dir/comparison.csv`.
pub fn write_comparison(cmp: &Comparison, dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, col) in cmp.columns.iter().enumerate() {
        write_summary(col, &dir.join(format!("{i}_{}", col.policy)))?;
    }
    let mut header = vec!["metric"];
    header.extend(cmp.columns.iter().map(|c| c.policy.as_str()));
    let row = |name: &str, f: &dyn Fn(&SummaryReport) -> String| {
        let mut v = vec![name.to_string()];
        v.extend(cmp.columns.iter().map(f));
        v
    };
    let rows = vec![
        row("avg_cpu_load", &|c| {
            let (b, t) = c.mean_load_ratio();
            fmt_ratio(b, t)
        }),
        row("total_cache_accesses", &|c| {
            fmt_ratio(c.cache_accesses_sum(), c.runs.len() as u128)
        }),
        row("bus_load", &|c| {
            let (b, t) = c.bus_load_ratio();
            fmt_ratio(b, t)
        }),
    ];
    write_csv(&dir.join("comparison.csv"), &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_even_rounding() {
        assert_eq!(fmt_ratio(1, 2), "0.5000");
        assert_eq!(fmt_ratio(1, 3), "0.3333");
        assert_eq!(fmt_ratio(2, 3), "0.6667");
        // 0.00005 and 0.00015 are exact ties.
        assert_eq!(fmt_ratio(1, 20_000), "0.0000");
        assert_eq!(fmt_ratio(3, 20_000), "0.0002");
        assert_eq!(fmt_ratio(7, 1), "7.0000");
        assert_eq!(fmt_ratio(5, 0), "0.0000");
    }

    #[test]
    fn cpu_lists() {
        assert_eq!(cpu_list(&[0, 2, 4]), "0;2;4");
        assert_eq!(cpu_list(&[]), "");
    }
}
