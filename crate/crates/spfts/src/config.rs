//! Experiment configuration files.
//!
//! A config is a JSON object with a `schema_version` field. The seed in the
//! file (or in the embedded model) can be overridden through `SPFTS_SEED`.
//! Every artifact records the SHA-256 of the resolved config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spfts_core::dgp::ModelConfig;
use spfts_core::diagnostics::{DEFAULT_ACF_LAGS, DEFAULT_K_MAX};

use crate::error::{AppError, Result};
use crate::pipeline::{sha256_hex, IngestOptions};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "SPFTS_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Analyze,
    Rank,
    Ingest,
    Probe,
}

fn default_replicates() -> usize {
    1
}

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}

fn default_acf_lags() -> usize {
    DEFAULT_ACF_LAGS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub mode: Mode,
    /// Model for `simulate` and `probe`.
    #[serde(default)]
    pub model: Option<ModelConfig>,
    /// Models for `rank`; empty means the six standard settings.
    #[serde(default)]
    pub models: Vec<ModelConfig>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_acf_lags")]
    pub acf_lags: usize,
    /// Input for `analyze` and `ingest`.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub ingest: Option<IngestOptions>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Overrides the model seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(AppError::Config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return fail(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.replicates == 0 {
            return fail("replicates must be at least 1".into());
        }
        if self.k_max == 0 {
            return fail("k_max must be at least 1".into());
        }
        match self.mode {
            Mode::Simulate | Mode::Probe => match &self.model {
                None => return fail(format!("{:?} mode needs a model", self.mode).to_lowercase()),
                Some(m) => {
                    m.validate().map_err(|e| AppError::Config(e.to_string()))?;
                    if self.k_max > m.t_len {
                        return fail(format!("k_max = {} exceeds T = {}", self.k_max, m.t_len));
                    }
                }
            },
            Mode::Rank => {
                for m in &self.models {
                    m.validate().map_err(|e| AppError::Config(e.to_string()))?;
                }
            }
            Mode::Analyze | Mode::Ingest => {
                if self.data.is_none() || self.ingest.is_none() {
                    return fail("analyze and ingest need `data` and `ingest` fields".into());
                }
            }
        }
        Ok(())
    }

    /// Applies the `seed` field and then `SPFTS_SEED`, if set, to every model.
    pub fn resolve_seed(mut self, env: Option<&str>) -> Result<Self> {
        if let Some(raw) = env {
            let seed = raw.trim().parse::<u64>().map_err(|_| {
                AppError::Config(format!("{SEED_ENV}={raw:?} is not an unsigned integer"))
            })?;
            self.seed = Some(seed);
        }
        if let Some(seed) = self.seed {
            if let Some(m) = self.model.as_mut() {
                m.seed = seed;
            }
            for m in &mut self.models {
                m.seed = seed;
            }
        }
        Ok(self)
    }

    pub fn resolve_seed_from_env(self) -> Result<Self> {
        let env = std::env::var(SEED_ENV).ok();
        self.resolve_seed(env.as_deref())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIM: &str = r#"{
        "schema_version": 1,
        "mode": "simulate",
        "model": {"t_len": 20, "p": 4, "q": 3, "k": 2,
                  "covariance": {"kind": "delocalized_flat"},
                  "loadings": {"kind": "full_rank"}, "seed": 5},
        "replicates": 2
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(SIM).unwrap();
        assert_eq!(cfg.k_max, DEFAULT_K_MAX);
        assert_eq!(cfg.model.as_ref().unwrap().seed, 5);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_version = SIM.replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(
            ExperimentConfig::from_json(&bad_version),
            Err(AppError::Config(_))
        ));
        let no_reps = SIM.replace("\"replicates\": 2", "\"replicates\": 0");
        assert!(ExperimentConfig::from_json(&no_reps).is_err());
        let unknown = SIM.replace("\"replicates\": 2", "\"replicas\": 2");
        assert!(ExperimentConfig::from_json(&unknown).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version": 1, "mode": "probe"}"#).is_err());
    }

    #[test]
    fn seed_override_changes_hash() {
        let cfg = ExperimentConfig::from_json(SIM).unwrap();
        let same = cfg.clone().resolve_seed(None).unwrap();
        assert_eq!(same.hash(), cfg.hash());
        let env = cfg.clone().resolve_seed(Some("77")).unwrap();
        assert_eq!(env.model.as_ref().unwrap().seed, 77);
        assert_ne!(env.hash(), cfg.hash());
        assert!(cfg.resolve_seed(Some("x")).is_err());
    }
}
