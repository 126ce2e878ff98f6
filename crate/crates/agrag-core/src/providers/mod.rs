//! Provider abstractions for the two external capabilities the engine
//! needs: a text encoder and a chat LLM. Ships a deterministic offline mock
//! and an HTTP client for OpenAI-compatible endpoints.

mod http;
mod mock;
pub mod prompts;

pub use http::{HttpEmbeddingProvider, HttpLlmProvider};
pub use mock::{MockEmbeddingProvider, MockLlmProvider};

use std::sync::{Arc, Mutex};
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::config::{PipelineConfig, ProviderKind};
use crate::error::Result;

/// Text encoder capability. Same input must yield an identical vector
/// within one provider instance, with a fixed dimensionality.
pub trait EmbeddingProvider: Send + Sync {
    fn dimensionality(&self) -> usize;
    fn identity(&self) -> String;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>>;

    fn embed_one(&self, text: &str) -> Result<Vec<f32>> {
        Ok(self.embed(&[text.to_string()])?.remove(0))
    }
}

/// Chat LLM capability. Returns raw text; JSON parsing is the caller's
/// concern.
pub trait LlmProvider: Send + Sync {
    fn identity(&self) -> String;
    fn chat(&self, system_prompt: &str, user_content: &str) -> Result<String>;
}

/// Retry schedule for transport-level failures.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub backoff: Duration,
}

impl RetryPolicy {
    pub fn backoff_for(&self, attempt: usize) -> Duration {
        self.backoff * (attempt as u32 + 1)
    }
}

/// One logged provider call.
#[derive(Debug, Clone)]
pub struct UsageRecord {
    pub operation: &'static str,
    pub prompt_hash: String,
    pub latency: Duration,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
}

/// Shared, thread-safe call log backing the per-stage cost accounting.
#[derive(Debug, Default, Clone)]
pub struct UsageLog {
    records: Arc<Mutex<Vec<UsageRecord>>>,
}

impl UsageLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, record: UsageRecord) {
        self.records.lock().unwrap().push(record);
    }

    pub fn snapshot(&self) -> Vec<UsageRecord> {
        self.records.lock().unwrap().clone()
    }

    pub fn total_tokens(&self) -> usize {
        self.records
            .lock()
            .unwrap()
            .iter()
            .map(|r| r.prompt_tokens + r.completion_tokens)
            .sum()
    }
}

pub(crate) fn prompt_hash(system: &str, user: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(system.as_bytes());
    hasher.update([0u8]);
    hasher.update(user.as_bytes());
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Whitespace token count used for cost accounting.
pub(crate) fn approx_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Builds the provider pair named by the config.
pub fn build_providers(
    config: &PipelineConfig,
    usage: UsageLog,
) -> (Arc<dyn EmbeddingProvider>, Arc<dyn LlmProvider>) {
    match config.provider.kind {
        ProviderKind::Mock => {
            let embed = MockEmbeddingProvider::new(
                config.provider.embedding_dim,
                config.seed,
                usage.clone(),
            );
            let llm = MockLlmProvider::new(
                config.seed,
                config.provider.mock_malformed_relation_rate,
                usage,
            );
            (Arc::new(embed), Arc::new(llm))
        }
        ProviderKind::Http => {
            let policy = RetryPolicy {
                max_attempts: config.provider.max_attempts,
                backoff: Duration::from_millis(config.provider.backoff_ms),
            };
            let embed = HttpEmbeddingProvider::new(
                config.provider.base_url.clone().unwrap_or_default(),
                config.provider.embedding_model.clone().unwrap_or_default(),
                config.provider.api_key.clone(),
                policy.clone(),
                config.provider.timeout_secs,
                usage.clone(),
            );
            let llm = HttpLlmProvider::new(
                config.provider.base_url.clone().unwrap_or_default(),
                config.provider.chat_model.clone().unwrap_or_default(),
                config.provider.api_key.clone(),
                policy,
                config.provider.timeout_secs,
                usage,
            );
            (Arc::new(embed), Arc::new(llm))
        }
    }
}
