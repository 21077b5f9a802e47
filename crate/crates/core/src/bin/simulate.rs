use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use rasim::cli::{
    compare_policies, load_config, run_experiment, write_comparison, write_summary,
    ExperimentError, RunConfig,
};

/// Run resource-management experiments on the simulated multi-core platform.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Args {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Allocation policy: scalability, load or firstfit.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sim_time_ms: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated policies to run side by side.
    #[arg(long, value_delimiter = ',')]
    compare: Vec<String>,
}

fn run(args: Args) -> Result<(), ExperimentError> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = args.policy {
        cfg.policy = p;
    }
    if let Some(n) = args.runs {
        cfg.runs = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.sim_time_ms {
        cfg.sim_time_ms = t;
    }
    if let Some(o) = args.out {
        cfg.output_dir = o;
    }
    cfg.validate()?;

    if args.compare.is_empty() {
        let summary = run_experiment(&cfg)?;
        write_summary(&summary, &cfg.output_dir)?;
        println!(
            "{}: average CPU load {:.2}% over {} runs, wall clock {:.3} s",
            summary.policy,
            summary.mean_load() * 100.0,
            summary.runs.len(),
            summary.wall().as_secs_f64()
        );
    } else {
        let mut policies = Vec::new();
        for p in &args.compare {
            cfg.policy = p.clone();
            policies.push(cfg.policy_kind()?);
        }
        let cmp = compare_policies(&cfg, &policies)?;
        write_comparison(&cmp, &cfg.output_dir)?;
        for c in &cmp.columns {
            println!(
                "{}: average CPU load {:.2}%, mean cache accesses {:.0}, wall clock {:.3} s",
                c.policy,
                c.mean_load() * 100.0,
                c.mean_cache_accesses(),
                c.wall().as_secs_f64()
            );
        }
    }
    println!("outputs written to {}", cfg.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
