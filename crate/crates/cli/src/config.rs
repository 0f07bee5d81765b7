//! Declarative sweep configuration, loaded from one JSON document and
//! optionally patched by command-line flags.

use std::path::{Path, PathBuf};

use lossnet::{ModelParams, PolicySpec, Rates, RunConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Window used for bare `sss` entries in a policy list.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SssWindowMode {
    Theorem,
    COverride(f64),
}

impl SssWindowMode {
    fn policy_token(self) -> String {
        match self {
            SssWindowMode::Theorem => "sss:auto".into(),
            SssWindowMode::COverride(c) => format!("sss:c={c}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    /// Directory for two-column `.dat` curves, one per policy.
    pub plots: Option<PathBuf>,
    /// JSON file with one decomposition record per N.
    pub decomposition: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub rates: Rates,
    pub n_list: Vec<usize>,
    pub policies: Vec<String>,
    /// Simulated hours per cell.
    pub horizon: f64,
    #[serde(default)]
    pub max_events: Option<u64>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    #[serde(default = "default_sss_window")]
    pub sss_window: SssWindowMode,
    #[serde(default = "default_slabs")]
    pub slabs: usize,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default = "default_min_epochs")]
    pub min_epochs: usize,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_warmup() -> f64 {
    0.05
}
fn default_sss_window() -> SssWindowMode {
    SssWindowMode::Theorem
}
fn default_slabs() -> usize {
    200
}
fn default_batches() -> usize {
    20
}
fn default_min_epochs() -> usize {
    30
}

/// Flag-level overrides; `None` keeps the file's value.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub n_list: Option<Vec<usize>>,
    pub policies: Option<Vec<String>>,
    pub horizon: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub csv: Option<PathBuf>,
}

impl SweepConfig {
    /// Reference rates, a single cell, and library defaults elsewhere.
    pub fn new(n_list: Vec<usize>, policies: Vec<String>, horizon: f64, seeds: Vec<u64>) -> Self {
        Self {
            rates: Rates::REFERENCE,
            n_list,
            policies,
            horizon,
            max_events: None,
            seeds,
            warmup_fraction: default_warmup(),
            sss_window: default_sss_window(),
            slabs: default_slabs(),
            batches: default_batches(),
            min_epochs: default_min_epochs(),
            output: OutputPaths::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(v) = o.n_list {
            self.n_list = v;
        }
        if let Some(v) = o.policies {
            self.policies = v;
        }
        if let Some(v) = o.horizon {
            self.horizon = v;
        }
        if let Some(v) = o.seeds {
            self.seeds = v;
        }
        if o.csv.is_some() {
            self.output.csv = o.csv;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.rates.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.policies.is_empty() {
            return Err(CliError::Config("nothing to run: the policy list is empty".into()));
        }
        if self.n_list.is_empty() || self.n_list[0] == 0 {
            return Err(CliError::Config("n_list must hold positive server counts".into()));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config("n_list must be strictly increasing".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("seed list is empty".into()));
        }
        if let SssWindowMode::COverride(c) = self.sss_window {
            if !(c.is_finite() && c > 0.0) {
                return Err(CliError::Config(format!("c_override must be positive, got {c}")));
            }
        }
        self.run_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        for p in &self.policies {
            self.policy_spec(p)?;
        }
        Ok(())
    }

    /// Parses a policy entry, giving bare `sss` the configured window.
    pub fn policy_spec(&self, policy: &str) -> Result<PolicySpec, CliError> {
        let expanded = expand_bare_sss(policy, self.sss_window);
        expanded.parse().map_err(|e: lossnet::policy::PolicyParseError| CliError::Config(e.to_string()))
    }

    pub fn params(&self, n: usize) -> Result<ModelParams, CliError> {
        self.rates.with_servers(n).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            horizon: self.horizon,
            warmup_fraction: self.warmup_fraction,
            slabs: self.slabs,
            max_events: self.max_events,
        }
    }
}

fn expand_bare_sss(policy: &str, mode: SssWindowMode) -> String {
    let token = mode.policy_token();
    let expand = |s: &str| if s.trim() == "sss" { token.clone() } else { s.to_string() };
    match policy.split_once(':') {
        Some((head @ ("ae" | "re"), rest)) => {
            let parts: Vec<String> = rest.split(',').map(expand).collect();
            format!("{head}:{}", parts.join(","))
        }
        _ => expand(policy),
    }
}
