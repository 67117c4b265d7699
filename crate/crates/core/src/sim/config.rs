//! JSON run configuration.
//!
//! ```json
//! {
//!   "n": 2, "epsilon": 0.05, "nu": "uniform", "arrivals": "bernoulli", "seed": 7,
//!   "sample_slots": 1000000, "replications": 8,
//!   "diagnostics": {"ssc": true}
//! }
//! ```
//!
//! `nu` is either `"uniform"` or `n * n` rates in row-major order. `arrivals` is either
//! `"bernoulli"` or `{"pmf": [[p0, p1, ..], ..]}` with one pmf per queue.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::matching::TieBreak;
use crate::model::TrafficModel;
use crate::sim::{Diagnostics, SimConfig, SimError, DEFAULT_DIAG_EVERY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NuSpec {
    Named(String),
    Rates(Vec<f64>),
}

impl Default for NuSpec {
    fn default() -> Self {
        Self::Named("uniform".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArrivalSpec {
    Named(String),
    Pmf { pmf: Vec<Vec<f64>> },
}

impl Default for ArrivalSpec {
    fn default() -> Self {
        Self::Named("bernoulli".into())
    }
}

fn default_sample_slots() -> u64 {
    1_000_000
}

fn default_replications() -> u32 {
    8
}

fn default_diag_every() -> u64 {
    DEFAULT_DIAG_EVERY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n: usize,
    pub epsilon: f64,
    #[serde(default)]
    pub nu: NuSpec,
    #[serde(default)]
    pub arrivals: ArrivalSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub warmup_slots: Option<u64>,
    #[serde(default = "default_sample_slots")]
    pub sample_slots: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    #[serde(default = "default_diag_every")]
    pub diag_every: u64,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn model(&self) -> Result<TrafficModel, SimError> {
        let n = self.n;
        let nu = match &self.nu {
            NuSpec::Named(name) if name == "uniform" => vec![1.0 / n as f64; n * n],
            NuSpec::Named(other) => {
                return Err(SimError::Config(format!("unknown nu preset {other:?}")))
            }
            NuSpec::Rates(v) => v.clone(),
        };
        let model = match &self.arrivals {
            ArrivalSpec::Named(name) if name == "bernoulli" => {
                TrafficModel::bernoulli(n, self.epsilon, nu)?
            }
            ArrivalSpec::Named(other) => {
                return Err(SimError::Config(format!("unknown arrival law {other:?}")))
            }
            ArrivalSpec::Pmf { pmf } => TrafficModel::with_pmfs(n, self.epsilon, nu, pmf.clone())?,
        };
        Ok(model)
    }

    pub fn sim_config(&self) -> Result<SimConfig, SimError> {
        let cfg = SimConfig {
            model: self.model()?,
            warmup_slots: self.warmup_slots,
            sample_slots: self.sample_slots,
            replications: self.replications,
            seed: self.seed,
            diagnostics: self.diagnostics,
            diag_every: self.diag_every,
            tie_break: self.tie_break,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
