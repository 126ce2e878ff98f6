//! Statistics-based entity extraction and LLM relation extraction.
//!
//! Entities are n-gram terms whose ER score — a TFIDF variant normalized
//! into [0,1] — exceeds the threshold τ. Relations come from the chat
//! provider, post-filtered so every triple endpoint is a member of the
//! chunk's own extracted entity set.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::{ngrams, Chunk, CorpusStats};
use crate::error::{AgragError, Result};
use crate::providers::{prompts, LlmProvider};

/// A normalized extracted term of 1..=b words. The surface doubles as the
/// global entity id: one entity per distinct surface.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub surface: String,
}

/// An (entity, relation, entity) statement with provenance chunk. The
/// embedding is filled at graph build time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleFact {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub source_chunk: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
}

impl TripleFact {
    /// Text form used both for embedding input and display.
    pub fn text(&self) -> String {
        format!("{} {} {}", self.subject, self.relation, self.object)
    }
}

/// ER(v,t) = (count(v,t) / (|t|·ln(|T_c|+1))) · ln((|T_c|+1)/(df(v)+1)),
/// natural logarithm. Always in [0,1]; 0 when the term is absent.
pub fn er_score(term: &str, chunk_id: &str, stats: &CorpusStats) -> Result<f64> {
    if stats.chunk_count == 0 {
        return Err(AgragError::Stats("corpus has no chunks".into()));
    }
    let chunk_len = *stats
        .chunk_lengths
        .get(chunk_id)
        .ok_or_else(|| AgragError::Stats(format!("unknown chunk {chunk_id}")))?;
    if chunk_len == 0 {
        return Err(AgragError::Stats(format!("chunk {chunk_id} is empty")));
    }
    let count = stats.count_in_chunk(term, chunk_id);
    if count == 0 {
        return Ok(0.0);
    }
    let n = stats.chunk_count as f64;
    let df = stats.doc_freq_of(term) as f64;
    let tf = count as f64 / (chunk_len as f64 * (n + 1.0).ln());
    let idf = ((n + 1.0) / (df + 1.0)).ln();
    Ok(tf * idf)
}

/// Every n-gram candidate of the chunk with ER score strictly above τ, in
/// first-occurrence order.
pub fn extract_entities(
    chunk: &Chunk,
    stats: &CorpusStats,
    tau: f64,
    b: usize,
) -> Result<Vec<Entity>> {
    let mut out = Vec::new();
    for term in ngrams(&chunk.tokens, b) {
        if er_score(&term, &chunk.id, stats)? > tau {
            out.push(Entity { surface: term });
        }
    }
    Ok(out)
}

/// Asks the provider for relations between the given entities. Triples
/// referencing entities outside the input set are dropped. A malformed
/// response earns one reprompt; a second malformed response is an error so
/// the caller can record the chunk as relation-extraction-failed.
pub fn extract_relations(
    entities: &[Entity],
    chunk: &Chunk,
    provider: &dyn LlmProvider,
) -> Result<Vec<TripleFact>> {
    if entities.is_empty() {
        return Ok(Vec::new());
    }
    let surfaces: Vec<String> = entities.iter().map(|e| e.surface.clone()).collect();
    let user = prompts::relation_user(&surfaces, &chunk.text);
    let mut raw = None;
    for _attempt in 0..2 {
        let response = provider.chat(prompts::RELATION_SYSTEM, &user)?;
        if let Some(triples) = prompts::parse_triples(&response) {
            raw = Some(triples);
            break;
        }
        log::warn!("chunk {}: malformed relation response, reprompting", chunk.id);
    }
    let raw = raw.ok_or_else(|| AgragError::Provider {
        provider: provider.identity(),
        message: format!("chunk {}: relation response unparseable after reprompt", chunk.id),
    })?;
    let known: std::collections::HashSet<&str> =
        surfaces.iter().map(String::as_str).collect();
    let mut out = Vec::new();
    for triple in raw {
        if triple.relation.is_empty() {
            log::warn!("chunk {}: dropping triple with empty relation", chunk.id);
            continue;
        }
        if !known.contains(triple.subject.as_str()) || !known.contains(triple.object.as_str()) {
            log::warn!(
                "chunk {}: dropping triple ({}, {}, {}) referencing unknown entity",
                chunk.id,
                triple.subject,
                triple.relation,
                triple.object
            );
            continue;
        }
        out.push(TripleFact {
            subject: triple.subject,
            relation: triple.relation,
            object: triple.object,
            source_chunk: chunk.id.clone(),
            embedding: None,
        });
    }
    Ok(out)
}

/// Per-chunk relation extraction outcome.
#[derive(Debug, Clone)]
pub enum RelationOutcome {
    Extracted(Vec<TripleFact>),
    Failed(String),
}

/// Runs relation extraction over chunks with bounded parallelism. Results
/// are slotted by chunk index, so the merged output is independent of
/// scheduling.
pub fn extract_relations_parallel(
    chunks: &[Chunk],
    entities: &[Vec<Entity>],
    provider: &dyn LlmProvider,
    width: usize,
) -> Vec<RelationOutcome> {
    assert_eq!(chunks.len(), entities.len());
    let slots: Mutex<Vec<Option<RelationOutcome>>> = Mutex::new(vec![None; chunks.len()]);
    let next = AtomicUsize::new(0);
    let width = width.max(1).min(chunks.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..width {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= chunks.len() {
                    break;
                }
                let outcome = match extract_relations(&entities[i], &chunks[i], provider) {
                    Ok(triples) => RelationOutcome::Extracted(triples),
                    Err(e) => RelationOutcome::Failed(e.to_string()),
                };
                slots.lock().unwrap()[i] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|o| o.expect("every chunk slot filled"))
        .collect()
}
