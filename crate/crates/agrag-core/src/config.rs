//! Pipeline configuration: defaults, file loading, env overrides, and the
//! fingerprint baked into saved indexes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AgragError, Result};

fn default_chunk_length() -> usize {
    256
}
fn default_chunk_overlap() -> usize {
    32
}
fn default_entity_threshold() -> f64 {
    0.5
}
fn default_max_ngram() -> usize {
    3
}
fn default_synonym_threshold() -> f64 {
    0.85
}
fn default_damping() -> f64 {
    0.5
}
fn default_ppr_tolerance() -> f64 {
    1e-7
}
fn default_passage_factor() -> f64 {
    0.05
}
fn default_k_a() -> usize {
    5
}
fn default_k_r() -> usize {
    5
}
fn default_bm25_k1() -> f64 {
    1.2
}
fn default_bm25_b() -> f64 {
    0.75
}
fn default_relation_parallelism() -> usize {
    4
}
fn default_mcmi_mode() -> McmiMode {
    McmiMode::Full
}
fn default_provider() -> ProviderConfig {
    ProviderConfig::default()
}
fn default_seed() -> u64 {
    0
}

/// Fixed cost carried by every pseudo edge.
pub const PSEUDO_EDGE_COST: f64 = 10.0;

/// Floor applied to edge costs so score/cost ratios stay finite.
pub const EDGE_COST_FLOOR: f64 = 1e-6;

/// Iteration cap for PPR.
pub const PPR_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McmiMode {
    /// Steiner seed plus greedy ratio expansion.
    Full,
    /// Seed only; skips expansion (the "without MCMI" ablation).
    SteinerOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Mock embedding dimensionality.
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
    /// Base URL for OpenAI-compatible endpoints (http kind).
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub chat_model: Option<String>,
    #[serde(default)]
    pub embedding_model: Option<String>,
    /// API key; the AGRAG_API_KEY env var overrides this.
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Fraction of chunks for which the mock emits malformed relation JSON.
    #[serde(default)]
    pub mock_malformed_relation_rate: f64,
}

fn default_dim() -> usize {
    64
}
fn default_max_attempts() -> usize {
    3
}
fn default_backoff_ms() -> u64 {
    200
}
fn default_timeout_secs() -> u64 {
    60
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Mock,
            embedding_dim: default_dim(),
            base_url: None,
            chat_model: None,
            embedding_model: None,
            api_key: None,
            max_attempts: default_max_attempts(),
            backoff_ms: default_backoff_ms(),
            timeout_secs: default_timeout_secs(),
            mock_malformed_relation_rate: 0.0,
        }
    }
}

/// Whole-pipeline configuration. Unknown keys in the file are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_chunk_length")]
    pub chunk_length: usize,
    #[serde(default = "default_chunk_overlap")]
    pub chunk_overlap: usize,
    #[serde(default = "default_entity_threshold")]
    pub entity_threshold: f64,
    #[serde(default = "default_max_ngram")]
    pub max_ngram: usize,
    #[serde(default = "default_synonym_threshold")]
    pub synonym_threshold: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_ppr_tolerance")]
    pub ppr_tolerance: f64,
    #[serde(default = "default_passage_factor")]
    pub passage_factor: f64,
    #[serde(default = "default_k_a")]
    pub k_a: usize,
    #[serde(default = "default_k_r")]
    pub k_r: usize,
    #[serde(default = "default_bm25_k1")]
    pub bm25_k1: f64,
    #[serde(default = "default_bm25_b")]
    pub bm25_b: f64,
    #[serde(default = "default_relation_parallelism")]
    pub relation_parallelism: usize,
    #[serde(default = "default_mcmi_mode")]
    pub mcmi_mode: McmiMode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Corpus source: a directory of .txt files or a .jsonl file.
    #[serde(default)]
    pub corpus_path: Option<String>,
    #[serde(default)]
    pub index_path: Option<String>,
    #[serde(default = "default_provider")]
    pub provider: ProviderConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config must deserialize from defaults")
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let mut config: PipelineConfig =
            toml::from_str(&raw).map_err(|e| AgragError::Config(e.to_string()))?;
        config.apply_env_overrides();
        config.validate()?;
        Ok(config)
    }

    pub fn apply_env_overrides(&mut self) {
        if let Ok(key) = std::env::var("AGRAG_API_KEY") {
            self.provider.api_key = Some(key);
        }
        if let Ok(url) = std::env::var("AGRAG_BASE_URL") {
            self.provider.base_url = Some(url);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_overlap >= self.chunk_length {
            return Err(AgragError::Config(format!(
                "chunk_overlap ({}) must be smaller than chunk_length ({})",
                self.chunk_overlap, self.chunk_length
            )));
        }
        if !(0.0..1.0).contains(&self.entity_threshold) {
            return Err(AgragError::Config(
                "entity_threshold must be in [0, 1)".into(),
            ));
        }
        if self.max_ngram == 0 {
            return Err(AgragError::Config("max_ngram must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.damping) {
            return Err(AgragError::Config("damping must be in [0, 1]".into()));
        }
        if self.ppr_tolerance <= 0.0 {
            return Err(AgragError::Config("ppr_tolerance must be > 0".into()));
        }
        if self.relation_parallelism == 0 {
            return Err(AgragError::Config(
                "relation_parallelism must be >= 1".into(),
            ));
        }
        if self.provider.kind == ProviderKind::Http && self.provider.base_url.is_none() {
            return Err(AgragError::Config(
                "provider.base_url is required for the http provider".into(),
            ));
        }
        Ok(())
    }

    /// Identity string for the configured provider pair.
    pub fn provider_identity(&self) -> String {
        match self.provider.kind {
            ProviderKind::Mock => format!(
                "mock(dim={},seed={},malformed={})",
                self.provider.embedding_dim, self.seed, self.provider.mock_malformed_relation_rate
            ),
            ProviderKind::Http => format!(
                "http({},chat={},embed={})",
                self.provider.base_url.as_deref().unwrap_or(""),
                self.provider.chat_model.as_deref().unwrap_or(""),
                self.provider.embedding_model.as_deref().unwrap_or("")
            ),
        }
    }

    /// Hash of the config fields that shape index contents. Stored in the
    /// index header; a mismatch at load time is a warning, not an error.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        let material = format!(
            "tau={};b={};phi={};l_t={};l_o={};provider={}",
            self.entity_threshold,
            self.max_ngram,
            self.synonym_threshold,
            self.chunk_length,
            self.chunk_overlap,
            self.provider_identity()
        );
        hasher.update(material.as_bytes());
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_values() {
        let c = PipelineConfig::default();
        assert_eq!(c.chunk_length, 256);
        assert_eq!(c.chunk_overlap, 32);
        assert_eq!(c.k_a, 5);
        assert_eq!(c.k_r, 5);
        assert_eq!(c.entity_threshold, 0.5);
        assert_eq!(c.max_ngram, 3);
        assert_eq!(c.damping, 0.5);
        assert_eq!(c.ppr_tolerance, 1e-7);
        assert_eq!(c.passage_factor, 0.05);
        assert_eq!(PSEUDO_EDGE_COST, 10.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = toml::from_str::<PipelineConfig>("no_such_key = 1").unwrap_err();
        assert!(err.to_string().contains("no_such_key"));
    }

    #[test]
    fn fingerprint_changes_with_tau() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.entity_threshold = 0.3;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
