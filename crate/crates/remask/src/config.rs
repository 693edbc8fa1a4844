//! Run configuration files: TOML or JSON (picked by extension) with
//! `[detector]`, `[backend]`, and `[seed]` sections.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detection::DetectorConfig;
use crate::error::{Error, Result};
use crate::masking::MaskStrategy;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub detector: DetectorSection,
    pub backend: BackendSection,
    #[serde(default)]
    pub seed: SeedSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_strategy")]
    pub strategy: MaskStrategy,
    #[serde(default = "default_mask_token")]
    pub mask_token: String,
    #[serde(default = "default_feature_dims")]
    pub feature_dims: usize,
    #[serde(default = "default_gamma")]
    pub gamma: usize,
    #[serde(default)]
    pub renormalize: bool,
}

fn default_k() -> usize {
    3
}
fn default_strategy() -> MaskStrategy {
    MaskStrategy::OneByOne
}
fn default_mask_token() -> String {
    crate::masking::DEFAULT_MASK_TOKEN.to_string()
}
fn default_feature_dims() -> usize {
    384
}
fn default_gamma() -> usize {
    1
}

impl DetectorSection {
    /// Materializes the detector config; `r` defaults by strategy (1.0 for
    /// one-by-one and oracle-filtered, 0.3 for gradient-guided).
    pub fn to_detector_config(&self) -> DetectorConfig {
        let rate = self.r.unwrap_or(match self.strategy {
            MaskStrategy::GradientGuided => 0.3,
            _ => 1.0,
        });
        DetectorConfig {
            rate,
            k: self.k,
            strategy: self.strategy,
            tau: None,
            gamma: self.gamma,
            mask_token: self.mask_token.clone(),
            feature_dims: self.feature_dims,
            renormalize: self.renormalize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Toy,
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    /// Toy backend: path to a trained victim model (JSON).
    #[serde(default)]
    pub victim_path: Option<PathBuf>,
    /// Toy backend: corpus the masked LM is fitted on (JSONL).
    #[serde(default)]
    pub mlm_corpus: Option<PathBuf>,
    /// Remote backend: server base URL.
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default = "default_cache")]
    pub cache: bool,
    #[serde(default = "default_cache_capacity")]
    pub cache_capacity: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default)]
    pub auth_token: Option<String>,
}

fn default_cache() -> bool {
    true
}
fn default_cache_capacity() -> usize {
    4096
}
fn default_timeout_secs() -> u64 {
    10
}
fn default_max_in_flight() -> usize {
    4
}
fn default_retries() -> u32 {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSection {
    pub value: u64,
}

impl Default for SeedSection {
    fn default() -> Self {
        Self { value: 42 }
    }
}

/// Loads `.toml` or `.json` by extension.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let raw = std::fs::read_to_string(path)?;
    let config: RunConfig = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&raw)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?,
        Some("json") => serde_json::from_str(&raw)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unsupported config extension {other:?}; use .toml or .json"
            )))
        }
    };
    config.detector.to_detector_config().validate()?;
    match config.backend.kind {
        BackendKind::Toy => {
            if config.backend.victim_path.is_none() || config.backend.mlm_corpus.is_none() {
                return Err(Error::InvalidConfig(
                    "toy backend needs victim_path and mlm_corpus".into(),
                ));
            }
        }
        BackendKind::Remote => {
            if config.backend.url.is_none() {
                return Err(Error::InvalidConfig("remote backend needs url".into()));
            }
        }
    }
    Ok(config)
}
