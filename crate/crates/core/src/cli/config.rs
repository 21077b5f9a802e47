use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fel::{PlatformConfig, SimTime};
use crate::rel::PolicyKind;
use crate::sim::SimOptions;
use crate::workloads::{WorkloadConfig, WorkloadKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
}

fn schema(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub platform: PlatformConfig,
    pub workloads: Vec<WorkloadConfig>,
    pub policy: String,
    pub sim_time_ms: u64,
    pub runs: usize,
    pub seed: u64,
    /// Defaults to one less than the CPU count.
    pub claim_cap: Option<usize>,
    pub load_window_ms: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            platform: PlatformConfig::default(),
            workloads: vec![
                WorkloadConfig::new(WorkloadKind::AudioEq),
                WorkloadConfig::new(WorkloadKind::CornerDetection),
            ],
            policy: "load".into(),
            sim_time_ms: 3500,
            runs: 5,
            seed: 0,
            claim_cap: None,
            load_window_ms: 100,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn policy_kind(&self) -> Result<PolicyKind, ConfigError> {
        self.policy
            .parse()
            .map_err(|e| schema("policy", format!("{e}")))
    }

    pub fn claim_cap(&self) -> usize {
        self.claim_cap
            .unwrap_or(self.platform.num_cpus.saturating_sub(1))
    }

    pub fn sim_time(&self) -> SimTime {
        SimTime::from_ms(self.sim_time_ms)
    }

    pub fn sim_options(&self, seed: u64) -> SimOptions {
        SimOptions {
            claim_cap: self.claim_cap(),
            load_window: SimTime::from_ms(self.load_window_ms),
            seed,
            record_events: true,
        }
    }

    /// Checks cross-field constraints that the schema cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.platform;
        if p.num_cpus < 2 {
            return Err(schema("platform.num_cpus", "must be at least 2"));
        }
        if p.freq_hz == 0 || 1_000_000_000 % p.freq_hz != 0 {
            return Err(schema("platform.freq_hz", "must divide 1000000000"));
        }
        if p.cache.line_bits == 0 {
            return Err(schema("platform.cache.line_bits", "must be positive"));
        }
        if p.cache.size_bits < p.cache.line_bits {
            return Err(schema(
                "platform.cache.size_bits",
                "must hold at least one line",
            ));
        }
        self.policy_kind()?;
        if self.sim_time_ms == 0 {
            return Err(schema("sim_time_ms", "must be positive"));
        }
        if self.runs == 0 {
            return Err(schema("runs", "must be at least 1"));
        }
        let cap = self.claim_cap();
        if cap == 0 || cap >= p.num_cpus {
            return Err(schema(
                "claim_cap",
                format!("must lie in [1, {})", p.num_cpus),
            ));
        }
        if self.load_window_ms == 0 {
            return Err(schema("load_window_ms", "must be positive"));
        }
        if self.workloads.is_empty() {
            return Err(schema("workloads", "must name at least one workload"));
        }
        let mut seen = BTreeSet::new();
        for (i, w) in self.workloads.iter().enumerate() {
            let id = w
                .app_id
                .clone()
                .unwrap_or_else(|| w.kind.as_str().to_string());
            if !seen.insert(id.clone()) {
                return Err(schema(
                    &format!("workloads[{i}].app_id"),
                    format!("duplicate id `{id}`"),
                ));
            }
            if let (Some(min), Some(max)) = (w.min_cpus, w.max_cpus) {
                if min > max {
                    return Err(schema(
                        &format!("workloads[{i}].min_cpus"),
                        "exceeds max_cpus",
                    ));
                }
            }
            if let Some(max) = w.max_cpus {
                if max > p.num_cpus {
                    return Err(schema(
                        &format!("workloads[{i}].max_cpus"),
                        "exceeds num_cpus",
                    ));
                }
            }
            if w.min_cpus == Some(0) {
                return Err(schema(
                    &format!("workloads[{i}].min_cpus"),
                    "must be positive",
                ));
            }
        }
        Ok(())
    }
}

/// Parses and validates a configuration document. Errors name the offending
/// key path.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Schema {
            path: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
