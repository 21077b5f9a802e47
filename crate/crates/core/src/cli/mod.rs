//! Experiment harness: configuration loading, multi-run orchestration and
//! CSV/text output.

mod config;
mod experiment;
mod report;

pub use config::{load_config, parse_config, ConfigError, RunConfig};
pub use experiment::{
    build_apps, compare_policies, run_experiment, run_policy, Comparison, ExperimentError,
    RunOutcome, SummaryReport,
};
pub use report::{fmt_ratio, write_comparison, write_summary};
