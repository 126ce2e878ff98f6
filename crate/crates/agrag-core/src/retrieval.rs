//! Query-to-fact mapping, LLM triple filtering, BM25, and hybrid chunk
//! retrieval. Dense scoring is an exact exhaustive scan; corpora here are
//! desk scale.

use serde::Serialize;

use crate::corpus::CorpusStats;
use crate::error::Result;
use crate::graph::{FactId, KnowledgeGraph};
use crate::providers::{prompts, LlmProvider};
use crate::vecmath::cosine;

/// Mapped triple facts for one query: the raw top-k_a by similarity and
/// the LLM-filtered subset.
#[derive(Debug, Clone, Serialize)]
pub struct MappedFacts {
    /// (fact id, MS), MS descending, ties by fact id ascending.
    pub raw: Vec<(FactId, f64)>,
    /// Subset of `raw`; non-empty whenever `raw` is non-empty.
    pub filtered: Vec<(FactId, f64)>,
    pub filter_disposition: FilterDisposition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterDisposition {
    /// Provider selected a non-empty subset.
    Selected,
    /// Response unparseable after one reprompt; raw passed through.
    PassThroughMalformed,
    /// Provider transport failure; raw passed through.
    PassThroughTransport,
    /// Provider selected nothing; fell back to the top-1 raw fact.
    FallbackTopOne,
}

/// Hybrid retrieval result: top-k_r chunks by HS, descending, ties by
/// chunk id ascending.
#[derive(Debug, Clone, Serialize)]
pub struct HybridResult {
    pub chunks: Vec<(String, f64)>,
}

/// Dense semantic mapping score: cosine similarity in [-1, 1].
pub fn fact_similarity(query_embedding: &[f32], fact_embedding: &[f32]) -> Result<f64> {
    cosine(query_embedding, fact_embedding)
}

/// Top-k_a facts by MS over an exhaustive scan of the fact registry.
pub fn map_query_to_facts(
    query_embedding: &[f32],
    graph: &KnowledgeGraph,
    k_a: usize,
) -> Result<Vec<(FactId, f64)>> {
    if graph.facts.is_empty() {
        log::warn!("graph has no facts; query mapping is empty");
        return Ok(Vec::new());
    }
    let mut scored = Vec::with_capacity(graph.facts.len());
    for (fid, fact) in graph.facts.iter().enumerate() {
        let embedding = fact.embedding.as_ref().ok_or_else(|| {
            crate::error::AgragError::IndexCorruption(format!("fact {fid} has no embedding"))
        })?;
        scored.push((fid as FactId, fact_similarity(query_embedding, embedding)?));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k_a);
    Ok(scored)
}

/// LLM triple filter over the raw mapping. Degrades rather than aborts:
/// unparseable output passes raw through, and an empty selection falls
/// back to the top-1 fact so downstream always has a terminal.
pub fn filter_facts(
    raw: &[(FactId, f64)],
    query: &str,
    graph: &KnowledgeGraph,
    provider: &dyn LlmProvider,
) -> (Vec<(FactId, f64)>, FilterDisposition) {
    if raw.is_empty() {
        return (Vec::new(), FilterDisposition::Selected);
    }
    let fact_texts: Vec<String> = raw
        .iter()
        .map(|(fid, _)| graph.fact(*fid).text())
        .collect();
    let user = prompts::filter_user(query, &fact_texts);
    let mut indices = None;
    for _attempt in 0..2 {
        match provider.chat(prompts::FILTER_SYSTEM, &user) {
            Ok(response) => {
                if let Some(parsed) = prompts::parse_indices(&response) {
                    indices = Some(parsed);
                    break;
                }
                log::warn!("fact filter response unparseable, reprompting");
            }
            Err(e) => {
                log::warn!("fact filter transport failure, passing raw through: {e}");
                return (raw.to_vec(), FilterDisposition::PassThroughTransport);
            }
        }
    }
    let Some(indices) = indices else {
        return (raw.to_vec(), FilterDisposition::PassThroughMalformed);
    };
    let mut filtered: Vec<(FactId, f64)> = indices
        .into_iter()
        .filter(|&i| i < raw.len())
        .map(|i| raw[i])
        .collect();
    filtered.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    filtered.dedup_by_key(|x| x.0);
    if filtered.is_empty() {
        return (vec![raw[0]], FilterDisposition::FallbackTopOne);
    }
    (filtered, FilterDisposition::Selected)
}

/// Okapi BM25 with the non-negative idf variant:
/// idf(v) = ln(1 + (N - df + 0.5) / (df + 0.5)).
pub fn bm25_score(
    query_tokens: &[String],
    chunk_id: &str,
    stats: &CorpusStats,
    k1: f64,
    b: f64,
) -> f64 {
    let n = stats.chunk_count as f64;
    let len = stats.chunk_lengths.get(chunk_id).copied().unwrap_or(0) as f64;
    if len == 0.0 || stats.avg_chunk_length == 0.0 {
        return 0.0;
    }
    let mut seen = std::collections::HashSet::new();
    let mut score = 0.0;
    for term in query_tokens {
        if !seen.insert(term.as_str()) {
            continue;
        }
        let tf = stats.count_in_chunk(term, chunk_id) as f64;
        if tf == 0.0 {
            continue;
        }
        let df = stats.doc_freq_of(term) as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        let denom = tf + k1 * (1.0 - b + b * len / stats.avg_chunk_length);
        score += idf * tf * (k1 + 1.0) / denom;
    }
    score
}

/// Per-query min-max normalization of raw BM25 over all chunks. A flat
/// positive score maps to 1, a flat zero score to 0.
pub fn bm25_normalized(
    query_tokens: &[String],
    graph: &KnowledgeGraph,
    stats: &CorpusStats,
    k1: f64,
    b: f64,
) -> Vec<f64> {
    let raw: Vec<f64> = graph
        .chunks
        .iter()
        .map(|c| bm25_score(query_tokens, &c.id, stats, k1, b))
        .collect();
    let (min, max) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if raw.is_empty() {
        return raw;
    }
    if max > min {
        raw.iter().map(|&x| (x - min) / (max - min)).collect()
    } else if max > 0.0 {
        vec![1.0; raw.len()]
    } else {
        vec![0.0; raw.len()]
    }
}

/// HS(q,t) = ((MS+1)/2 + BM25norm) / 2, cosine rescaled into [0,1] so both
/// components are commensurable. Returns the top-k_r chunks.
pub fn hybrid_retrieve(
    query_embedding: &[f32],
    query_tokens: &[String],
    graph: &KnowledgeGraph,
    stats: &CorpusStats,
    k_r: usize,
    k1: f64,
    b: f64,
) -> Result<HybridResult> {
    let bm25 = bm25_normalized(query_tokens, graph, stats, k1, b);
    let mut scored = Vec::with_capacity(graph.chunks.len());
    for (i, chunk) in graph.chunks.iter().enumerate() {
        let ms = cosine(query_embedding, &graph.chunk_embeddings[i])?;
        let hs = ((ms + 1.0) / 2.0 + bm25[i]) / 2.0;
        scored.push((chunk.id.clone(), hs));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k_r);
    Ok(HybridResult { chunks: scored })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{split_corpus, tokenize};
    use crate::extraction::{Entity, TripleFact};
    use crate::graph::build_graph;
    use crate::providers::{EmbeddingProvider, MockEmbeddingProvider, MockLlmProvider, UsageLog};

    fn sample_graph() -> (KnowledgeGraph, MockEmbeddingProvider) {
        let chunks = split_corpus(
            &[
                ("d1".into(), "kidney spread tumors".into()),
                ("d2".into(), "liver filters blood".into()),
            ],
            8,
            0,
        )
        .unwrap();
        let fact = |s: &str, r: &str, o: &str, c: &str| TripleFact {
            subject: s.into(),
            relation: r.into(),
            object: o.into(),
            source_chunk: c.into(),
            embedding: None,
        };
        let entities = vec![
            vec![Entity { surface: "kidney".into() }, Entity { surface: "tumors".into() }],
            vec![Entity { surface: "liver".into() }, Entity { surface: "blood".into() }],
        ];
        let triples = vec![
            vec![fact("kidney", "spread", "tumors", &chunks[0].id)],
            vec![fact("liver", "filters", "blood", &chunks[1].id)],
        ];
        let provider = MockEmbeddingProvider::new(32, 5, UsageLog::new());
        let g = build_graph(&chunks, &entities, &triples, &provider, 0.999, "fp").unwrap();
        (g, provider)
    }

    #[test]
    fn mapping_truncates_and_ranks() {
        let (g, embed) = sample_graph();
        let q = embed.embed_one("kidney spread").unwrap();
        let all = map_query_to_facts(&q, &g, 10).unwrap();
        assert_eq!(all.len(), 2);
        let top1 = map_query_to_facts(&q, &g, 1).unwrap();
        assert_eq!(top1[0].0, all[0].0);
        assert_eq!(g.fact(top1[0].0).text(), "kidney spread tumors");
    }

    #[test]
    fn mapping_matches_full_sort_oracle() {
        let (g, embed) = sample_graph();
        let q = embed.embed_one("blood").unwrap();
        let got = map_query_to_facts(&q, &g, 2).unwrap();
        // oracle: score everything, full sort
        let mut oracle: Vec<(FactId, f64)> = g
            .facts
            .iter()
            .enumerate()
            .map(|(i, f)| {
                (
                    i as FactId,
                    cosine(&q, f.embedding.as_ref().unwrap()).unwrap(),
                )
            })
            .collect();
        oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        assert_eq!(got, oracle[..2].to_vec());
    }

    #[test]
    fn filter_mock_identity_and_fallback() {
        let (g, embed) = sample_graph();
        let q = embed.embed_one("kidney").unwrap();
        let raw = map_query_to_facts(&q, &g, 5).unwrap();
        let llm = MockLlmProvider::new(0, 0.0, UsageLog::new());
        let (filtered, disposition) = filter_facts(&raw, "q", &g, &llm);
        assert_eq!(filtered, raw);
        assert_eq!(disposition, FilterDisposition::Selected);

        struct EmptyLlm;
        impl LlmProvider for EmptyLlm {
            fn identity(&self) -> String {
                "empty".into()
            }
            fn chat(&self, _s: &str, _u: &str) -> Result<String> {
                Ok("[]".into())
            }
        }
        let (filtered, disposition) = filter_facts(&raw, "q", &g, &EmptyLlm);
        assert_eq!(filtered, vec![raw[0]]);
        assert_eq!(disposition, FilterDisposition::FallbackTopOne);
    }

    #[test]
    fn filter_index_selection() {
        let (g, embed) = sample_graph();
        let q = embed.embed_one("kidney").unwrap();
        let raw = map_query_to_facts(&q, &g, 5).unwrap();
        struct PickLlm;
        impl LlmProvider for PickLlm {
            fn identity(&self) -> String {
                "pick".into()
            }
            fn chat(&self, _s: &str, _u: &str) -> Result<String> {
                Ok("[1]".into())
            }
        }
        let (filtered, _) = filter_facts(&raw, "q", &g, &PickLlm);
        assert_eq!(filtered, vec![raw[1]]);
    }

    #[test]
    fn filter_malformed_passes_through() {
        let (g, embed) = sample_graph();
        let q = embed.embed_one("kidney").unwrap();
        let raw = map_query_to_facts(&q, &g, 5).unwrap();
        struct BadLlm;
        impl LlmProvider for BadLlm {
            fn identity(&self) -> String {
                "bad".into()
            }
            fn chat(&self, _s: &str, _u: &str) -> Result<String> {
                Ok("not json at all".into())
            }
        }
        let (filtered, disposition) = filter_facts(&raw, "q", &g, &BadLlm);
        assert_eq!(filtered, raw);
        assert_eq!(disposition, FilterDisposition::PassThroughMalformed);
    }

    #[test]
    fn bm25_no_overlap_is_zero() {
        let (g, _) = sample_graph();
        let stats = CorpusStats::compute(&g.chunks, 1);
        let q = tokenize("nothing matches here");
        for chunk in &g.chunks {
            assert_eq!(bm25_score(&q, &chunk.id, &stats, 1.2, 0.75), 0.0);
        }
    }

    #[test]
    fn bm25_single_chunk_normalizes_to_one() {
        let chunks = split_corpus(&[("d".into(), "alpha beta".into())], 8, 0).unwrap();
        let stats = CorpusStats::compute(&chunks, 1);
        let provider = MockEmbeddingProvider::new(8, 0, UsageLog::new());
        let g = build_graph(&chunks, &[vec![]], &[vec![]], &provider, 0.9, "fp").unwrap();
        let norm = bm25_normalized(&tokenize("alpha beta"), &g, &stats, 1.2, 0.75);
        assert_eq!(norm, vec![1.0]);
    }

    #[test]
    fn hybrid_mean_arithmetic() {
        // MS01 = 0.8, BM25norm = 0.6 -> HS = 0.7
        assert!(((0.8f64 + 0.6) / 2.0 - 0.7).abs() < 1e-12);
    }

    #[test]
    fn hybrid_chunk_identical_to_query_wins() {
        let (g, embed) = sample_graph();
        let stats = CorpusStats::compute(&g.chunks, 1);
        let query = "kidney spread tumors";
        let q = embed.embed_one(query).unwrap();
        let result =
            hybrid_retrieve(&q, &tokenize(query), &g, &stats, 2, 1.2, 0.75).unwrap();
        assert_eq!(result.chunks[0].0, g.chunks[0].id);
        assert!(result.chunks[0].1 > result.chunks[1].1);
        for (_, hs) in &result.chunks {
            assert!((0.0..=1.0).contains(hs));
        }
    }
}
