//! Deterministic offline providers. Every response is a pure function of
//! (seed, input), so whole-pipeline runs are byte-reproducible across
//! processes.

use std::time::{Duration, Instant};

use crate::corpus::tokenize;
use crate::error::Result;
use crate::providers::{
    approx_tokens, prompt_hash, prompts, EmbeddingProvider, LlmProvider, UsageLog, UsageRecord,
};

/// Seed-keyed FNV-1a over the input bytes.
fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Bag-of-hashed-words encoder: each token hashes to one of `dim` buckets,
/// bucket counts are L2-normalized. Texts sharing tokens get positive
/// cosine similarity.
pub struct MockEmbeddingProvider {
    dim: usize,
    seed: u64,
    usage: UsageLog,
}

impl MockEmbeddingProvider {
    pub fn new(dim: usize, seed: u64, usage: UsageLog) -> Self {
        assert!(dim > 0, "embedding dimensionality must be positive");
        MockEmbeddingProvider { dim, seed, usage }
    }

    fn encode(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dim];
        for token in tokenize(text) {
            let bucket = (fnv1a(self.seed, token.as_bytes()) % self.dim as u64) as usize;
            v[bucket] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

impl EmbeddingProvider for MockEmbeddingProvider {
    fn dimensionality(&self) -> usize {
        self.dim
    }

    fn identity(&self) -> String {
        format!("mock-embed(dim={},seed={})", self.dim, self.seed)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let start = Instant::now();
        let out: Vec<Vec<f32>> = texts.iter().map(|t| self.encode(t)).collect();
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

/// Rule-based chat mock. The mode is chosen from the system prompt:
///
/// - relation mode: emits one triple per entity pair whose first
///   occurrences in the text lie within a 10-token window; the relation
///   label is the first token strictly between them, or "related_to" when
///   they are adjacent. The earlier occurrence is the subject.
/// - filter mode: selects every candidate index (identity filter).
/// - answer mode: echoes the graph string's entity list verbatim.
///
/// When `malformed_relation_rate` > 0, a seed-keyed hash of the text
/// decides which relation calls return non-JSON output instead.
pub struct MockLlmProvider {
    seed: u64,
    malformed_relation_rate: f64,
    usage: UsageLog,
}

impl MockLlmProvider {
    pub fn new(seed: u64, malformed_relation_rate: f64, usage: UsageLog) -> Self {
        MockLlmProvider {
            seed,
            malformed_relation_rate,
            usage,
        }
    }

    fn relation_response(&self, user_content: &str) -> String {
        let Some((entities, text)) = parse_relation_request(user_content) else {
            return "[]".to_string();
        };
        if self.malformed_relation_rate > 0.0 {
            let draw = fnv1a(self.seed, text.as_bytes()) as f64 / u64::MAX as f64;
            if draw < self.malformed_relation_rate {
                return "I think the relations here are {".to_string();
            }
        }
        let tokens = tokenize(&text);
        let mut sorted = entities;
        sorted.sort();
        sorted.dedup();
        let occurrences: Vec<(String, usize, usize)> = sorted
            .iter()
            .filter_map(|e| {
                let etoks = tokenize(e);
                find_subsequence(&tokens, &etoks).map(|pos| (e.clone(), pos, etoks.len()))
            })
            .collect();
        let mut triples = Vec::new();
        for i in 0..occurrences.len() {
            for j in (i + 1)..occurrences.len() {
                let (a, b) = (&occurrences[i], &occurrences[j]);
                let (first, second) = if a.1 <= b.1 { (a, b) } else { (b, a) };
                if second.1 - first.1 > 10 {
                    continue;
                }
                let between_start = first.1 + first.2;
                let relation = if between_start < second.1 {
                    tokens[between_start].clone()
                } else {
                    "related_to".to_string()
                };
                triples.push(serde_json::json!({
                    "subject": first.0,
                    "relation": relation,
                    "object": second.0,
                }));
            }
        }
        serde_json::to_string(&triples).expect("triples serialize")
    }

    fn filter_response(&self, user_content: &str) -> String {
        let count = user_content
            .lines()
            .filter(|line| {
                let mut parts = line.splitn(2, ". ");
                matches!(parts.next(), Some(prefix) if !prefix.is_empty()
                    && prefix.chars().all(|c| c.is_ascii_digit()))
                    && parts.next().is_some()
            })
            .count();
        let indices: Vec<usize> = (0..count).collect();
        serde_json::to_string(&indices).expect("indices serialize")
    }

    fn answer_response(&self, user_content: &str) -> String {
        let Some(graph) = extract_block_after(user_content, "Graph:") else {
            return String::new();
        };
        let mut lines = Vec::new();
        let mut in_entities = false;
        for line in graph.lines() {
            if line == "Entities:" {
                in_entities = true;
                continue;
            }
            if line == "Relations:" {
                break;
            }
            if in_entities {
                lines.push(line);
            }
        }
        lines.join("\n")
    }
}

impl LlmProvider for MockLlmProvider {
    fn identity(&self) -> String {
        format!(
            "mock-llm(seed={},malformed={})",
            self.seed, self.malformed_relation_rate
        )
    }

    fn chat(&self, system_prompt: &str, user_content: &str) -> Result<String> {
        let start = Instant::now();
        let response = if system_prompt == prompts::RELATION_SYSTEM {
            self.relation_response(user_content)
        } else if system_prompt == prompts::FILTER_SYSTEM {
            self.filter_response(user_content)
        } else {
            self.answer_response(user_content)
        };
        self.usage.record(UsageRecord {
            operation: "chat",
            prompt_hash: prompt_hash(system_prompt, user_content),
            latency: start.elapsed().max(Duration::from_nanos(1)),
            prompt_tokens: approx_tokens(system_prompt) + approx_tokens(user_content),
            completion_tokens: approx_tokens(&response),
        });
        Ok(response)
    }
}

fn parse_relation_request(user_content: &str) -> Option<(Vec<String>, String)> {
    let entities_line = user_content
        .lines()
        .find(|l| l.starts_with("Entities: "))?
        .trim_start_matches("Entities: ");
    let entities: Vec<String> = serde_json::from_str(entities_line).ok()?;
    let text = extract_block_after(user_content, "Text:")?;
    Some((entities, text))
}

fn extract_block_after(content: &str, marker: &str) -> Option<String> {
    let after = &content[content.find(marker)? + marker.len()..];
    let open = after.find(prompts::TEXT_OPEN)? + prompts::TEXT_OPEN.len();
    let close = after[open..].find(prompts::TEXT_CLOSE)? + open;
    Some(after[open..close].trim_matches('\n').to_string())
}

fn find_subsequence(haystack: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}
