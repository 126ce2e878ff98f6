//! HTTP providers for OpenAI-compatible `/chat/completions` and
//! `/embeddings` endpoints.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use crate::error::{AgragError, Result};
use crate::providers::{
    approx_tokens, prompt_hash, EmbeddingProvider, LlmProvider, RetryPolicy, UsageLog, UsageRecord,
};

fn provider_error(message: impl Into<String>) -> AgragError {
    AgragError::Provider {
        provider: "http".to_string(),
        message: message.into(),
    }
}

struct HttpClient {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpClient {
    fn new(base_url: String, api_key: Option<String>, retry: RetryPolicy, timeout_secs: u64) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_secs))
            .build()
            .expect("reqwest client builds");
        HttpClient {
            client,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            retry,
        }
    }

    /// POSTs with retries on transport errors, 429, and 5xx. Other 4xx
    /// responses (including context overflow) are not retried.
    fn post_json(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let url = format!("{}/{}", self.base_url, path.trim_start_matches('/'));
        let mut last_error = String::new();
        for attempt in 0..self.retry.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.backoff_for(attempt - 1));
            }
            let mut request = self.client.post(&url).json(body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        return response.json().map_err(|e| provider_error(e.to_string()));
                    }
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    let text = response.text().unwrap_or_default();
                    last_error = format!("{url}: status {status}: {text}");
                    if !retryable {
                        return Err(provider_error(last_error));
                    }
                }
                Err(e) => last_error = format!("{url}: {e}"),
            }
        }
        Err(provider_error(format!(
            "giving up after {} attempts: {last_error}",
            self.retry.max_attempts
        )))
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f32>,
}

pub struct HttpLlmProvider {
    client: HttpClient,
    model: String,
    usage: UsageLog,
}

impl HttpLlmProvider {
    pub fn new(
        base_url: String,
        model: String,
        api_key: Option<String>,
        retry: RetryPolicy,
        timeout_secs: u64,
        usage: UsageLog,
    ) -> Self {
        HttpLlmProvider {
            client: HttpClient::new(base_url, api_key, retry, timeout_secs),
            model,
            usage,
        }
    }
}

impl LlmProvider for HttpLlmProvider {
    fn identity(&self) -> String {
        format!("http-chat({},{})", self.client.base_url, self.model)
    }

    fn chat(&self, system_prompt: &str, user_content: &str) -> Result<String> {
        let start = Instant::now();
        let body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_content},
            ],
        });
        let value = self.client.post_json("chat/completions", &body)?;
        let parsed: ChatResponse =
            serde_json::from_value(value).map_err(|e| provider_error(e.to_string()))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| provider_error("response had no choices"))?;
        self.usage.record(UsageRecord {
            operation: "chat",
            prompt_hash: prompt_hash(system_prompt, user_content),
            latency: start.elapsed(),
            prompt_tokens: approx_tokens(system_prompt) + approx_tokens(user_content),
            completion_tokens: approx_tokens(&content),
        });
        Ok(content)
    }
}

pub struct HttpEmbeddingProvider {
    client: HttpClient,
    model: String,
    usage: UsageLog,
    dim: OnceLock<usize>,
}

impl HttpEmbeddingProvider {
    pub fn new(
        base_url: String,
        model: String,
        api_key: Option<String>,
        retry: RetryPolicy,
        timeout_secs: u64,
        usage: UsageLog,
    ) -> Self {
        HttpEmbeddingProvider {
            client: HttpClient::new(base_url, api_key, retry, timeout_secs),
            model,
            usage,
            dim: OnceLock::new(),
        }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    /// Dimensionality learned from the first response; 0 before any call.
    fn dimensionality(&self) -> usize {
        *self.dim.get().unwrap_or(&0)
    }

    fn identity(&self) -> String {
        format!("http-embed({},{})", self.client.base_url, self.model)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let start = Instant::now();
        let body = json!({"model": self.model, "input": texts});
        let value = self.client.post_json("embeddings", &body).map_err(|e| {
            provider_error(format!("batch of {} inputs failed: {e}", texts.len()))
        })?;
        let parsed: EmbeddingsResponse =
            serde_json::from_value(value).map_err(|e| provider_error(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(provider_error(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        let mut out = vec![Vec::new(); texts.len()];
        for datum in parsed.data {
            if datum.index >= out.len() {
                return Err(provider_error(format!("bad embedding index {}", datum.index)));
            }
            out[datum.index] = datum.embedding;
        }
        let dim = out[0].len();
        let expected = *self.dim.get_or_init(|| dim);
        for (i, v) in out.iter().enumerate() {
            if v.len() != expected {
                return Err(provider_error(format!(
                    "embedding {i} has dimension {}, expected {expected}",
                    v.len()
                )));
            }
        }
        self.usage.record(UsageRecord {
            operation: "embed",
            prompt_hash: prompt_hash("", &texts.join("\n")),
            latency: start.elapsed(),
            prompt_tokens: texts.iter().map(|t| approx_tokens(t)).sum(),
            completion_tokens: 0,
        });
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Minimal scripted HTTP server: serves one canned response per
    /// connection, in order, then stops accepting.
    fn stub_server(responses: Vec<(u16, &'static str)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = match listener.accept() {
                    Ok(pair) => pair,
                    Err(_) => return,
                };
                counter.fetch_add(1, Ordering::SeqCst);
                // drain the request: headers, then Content-Length body bytes
                let mut buf = Vec::new();
                let mut byte = [0u8; 1];
                while !buf.ends_with(b"\r\n\r\n") {
                    if stream.read(&mut byte).unwrap_or(0) == 0 {
                        break;
                    }
                    buf.push(byte[0]);
                }
                let headers = String::from_utf8_lossy(&buf).to_lowercase();
                let content_length: usize = headers
                    .lines()
                    .find_map(|l| l.strip_prefix("content-length:"))
                    .and_then(|v| v.trim().parse().ok())
                    .unwrap_or(0);
                let mut body_buf = vec![0u8; content_length];
                let _ = stream.read_exact(&mut body_buf);
                let reason = if status == 200 { "OK" } else { "Error" };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\n\
                     Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        (base_url, hits)
    }

    fn quick_retry(max_attempts: usize) -> RetryPolicy {
        RetryPolicy {
            max_attempts,
            backoff: Duration::from_millis(1),
        }
    }

    const CHAT_OK: &str =
        r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}]}"#;

    #[test]
    fn chat_retries_server_errors_then_succeeds() {
        let (url, hits) = stub_server(vec![(500, "{}"), (429, "{}"), (200, CHAT_OK)]);
        let llm = HttpLlmProvider::new(
            url,
            "m".into(),
            Some("key".into()),
            quick_retry(3),
            5,
            UsageLog::new(),
        );
        assert_eq!(llm.chat("sys", "user").unwrap(), "hello");
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn chat_gives_up_after_max_attempts() {
        let (url, hits) = stub_server(vec![(503, "{}"), (503, "{}")]);
        let llm = HttpLlmProvider::new(url, "m".into(), None, quick_retry(2), 5, UsageLog::new());
        let err = llm.chat("sys", "user").unwrap_err();
        assert!(err.to_string().contains("2 attempts"));
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, hits) = stub_server(vec![(400, r#"{"error":"bad request"}"#), (200, CHAT_OK)]);
        let llm = HttpLlmProvider::new(url, "m".into(), None, quick_retry(3), 5, UsageLog::new());
        let err = llm.chat("sys", "user").unwrap_err();
        assert!(err.to_string().contains("400"));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn embeddings_reorder_by_index_and_learn_dimension() {
        let body = r#"{"data":[
            {"index":1,"embedding":[0.0,1.0]},
            {"index":0,"embedding":[1.0,0.0]}
        ]}"#;
        let (url, _) = stub_server(vec![(200, body)]);
        let usage = UsageLog::new();
        let embed =
            HttpEmbeddingProvider::new(url, "m".into(), None, quick_retry(1), 5, usage.clone());
        assert_eq!(embed.dimensionality(), 0);
        let out = embed.embed(&["a".into(), "b".into()]).unwrap();
        assert_eq!(out, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(embed.dimensionality(), 2);
        assert_eq!(usage.snapshot().len(), 1);
    }

    #[test]
    fn embedding_count_mismatch_reports_batch_size() {
        let body = r#"{"data":[{"index":0,"embedding":[1.0]}]}"#;
        let (url, _) = stub_server(vec![(200, body)]);
        let embed = HttpEmbeddingProvider::new(
            url,
            "m".into(),
            None,
            quick_retry(1),
            5,
            UsageLog::new(),
        );
        let err = embed.embed(&["a".into(), "b".into()]).unwrap_err();
        assert!(err.to_string().contains("expected 2 embeddings, got 1"));
    }
}
