//! Corpus handling: tokenization, chunk splitting, n-gram candidates, and
//! the per-chunk term statistics everything downstream depends on.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AgragError, Result};

/// A fixed-length token window of the corpus. Becomes a passage node in the
/// knowledge graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    /// Content hash of (source_doc, position, text); stable across re-indexing.
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub source_doc: String,
    /// Ordinal index within the source document.
    pub position: usize,
}

impl Chunk {
    fn new(source_doc: &str, position: usize, tokens: Vec<String>) -> Self {
        let text = tokens.join(" ");
        let mut hasher = Sha256::new();
        hasher.update(source_doc.as_bytes());
        hasher.update([0u8]);
        hasher.update(position.to_le_bytes());
        hasher.update([0u8]);
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        let id = hex_lower(&digest[..16]);
        Chunk {
            id,
            text,
            tokens,
            source_doc: source_doc.to_string(),
            position,
        }
    }

    /// First 12 tokens, used as the display head for passage nodes.
    pub fn head(&self) -> String {
        self.tokens
            .iter()
            .take(12)
            .cloned()
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn hex_lower(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Lowercases and splits on whitespace and punctuation. Underscores are
/// retained inside tokens; every other non-alphanumeric character is a
/// boundary. No stemming, no stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '_' {
            for lc in ch.to_lowercase() {
                current.push(lc);
            }
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Splits tokenized documents into overlapping chunks of at most `l_t`
/// tokens with stride `l_t - l_o`. A document that fits in one chunk yields
/// exactly one chunk; otherwise every stride start below the document
/// length yields a chunk, so the tail chunk may be shorter than `l_t`.
pub fn split_corpus(texts: &[(String, String)], l_t: usize, l_o: usize) -> Result<Vec<Chunk>> {
    if l_o >= l_t {
        return Err(AgragError::Config(format!(
            "chunk_overlap ({l_o}) must be smaller than chunk_length ({l_t})"
        )));
    }
    let stride = l_t - l_o;
    let mut chunks = Vec::new();
    for (doc_id, text) in texts {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() <= l_t {
            chunks.push(Chunk::new(doc_id, 0, tokens));
            continue;
        }
        let mut position = 0;
        let mut start = 0;
        while start < tokens.len() {
            let end = (start + l_t).min(tokens.len());
            chunks.push(Chunk::new(doc_id, position, tokens[start..end].to_vec()));
            position += 1;
            start += stride;
        }
    }
    Ok(chunks)
}

/// All contiguous token subsequences of length 1..=b, space-joined, in
/// first-occurrence order without duplicates.
pub fn ngrams(tokens: &[String], b: usize) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for n in 1..=b.min(tokens.len()) {
        for window in tokens.windows(n) {
            let term = window.join(" ");
            if seen.insert(term.clone()) {
                out.push(term);
            }
        }
    }
    out
}

/// Corpus-wide term statistics over all chunks, for every n-gram up to `b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusStats {
    pub chunk_count: usize,
    /// term -> number of chunks containing it.
    pub doc_freq: HashMap<String, usize>,
    /// chunk id -> (term -> overlapping occurrence count).
    pub term_counts: HashMap<String, HashMap<String, usize>>,
    /// chunk id -> token count.
    pub chunk_lengths: HashMap<String, usize>,
    /// corpus-wide average chunk length, for BM25.
    pub avg_chunk_length: f64,
}

impl CorpusStats {
    /// Computes counts for every n-gram of length 1..=b in every chunk.
    /// Overlapping occurrences are counted.
    pub fn compute(chunks: &[Chunk], b: usize) -> Self {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let mut term_counts = HashMap::new();
        let mut chunk_lengths = HashMap::new();
        let mut total_len = 0usize;
        for chunk in chunks {
            let mut counts: HashMap<String, usize> = HashMap::new();
            for n in 1..=b.min(chunk.tokens.len()) {
                for window in chunk.tokens.windows(n) {
                    *counts.entry(window.join(" ")).or_insert(0) += 1;
                }
            }
            for term in counts.keys() {
                *doc_freq.entry(term.clone()).or_insert(0) += 1;
            }
            total_len += chunk.tokens.len();
            chunk_lengths.insert(chunk.id.clone(), chunk.tokens.len());
            term_counts.insert(chunk.id.clone(), counts);
        }
        let avg_chunk_length = if chunks.is_empty() {
            0.0
        } else {
            total_len as f64 / chunks.len() as f64
        };
        CorpusStats {
            chunk_count: chunks.len(),
            doc_freq,
            term_counts,
            chunk_lengths,
            avg_chunk_length,
        }
    }

    pub fn count_in_chunk(&self, term: &str, chunk_id: &str) -> usize {
        self.term_counts
            .get(chunk_id)
            .and_then(|m| m.get(term))
            .copied()
            .unwrap_or(0)
    }

    pub fn doc_freq_of(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_basic() {
        assert_eq!(tokenize("The Kidney works."), toks(&["the", "kidney", "works"]));
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn tokenize_hyphen_splits_underscore_kept() {
        assert_eq!(tokenize("A-B a_b"), toks(&["a", "b", "a_b"]));
    }

    #[test]
    fn split_ten_tokens_stride_three() {
        let doc = (0..10).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let chunks = split_corpus(&[("d".into(), doc)], 4, 1).unwrap();
        let spans: Vec<Vec<String>> = chunks.iter().map(|c| c.tokens.clone()).collect();
        assert_eq!(spans.len(), 4);
        assert_eq!(spans[0], toks(&["w0", "w1", "w2", "w3"]));
        assert_eq!(spans[1], toks(&["w3", "w4", "w5", "w6"]));
        assert_eq!(spans[2], toks(&["w6", "w7", "w8", "w9"]));
        assert_eq!(spans[3], toks(&["w9"]));
    }

    #[test]
    fn split_doc_fitting_one_chunk() {
        let doc = (0..256).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let chunks = split_corpus(&[("d".into(), doc)], 256, 32).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].tokens.len(), 256);
    }

    #[test]
    fn split_empty_corpus() {
        assert!(split_corpus(&[], 4, 1).unwrap().is_empty());
    }

    #[test]
    fn split_rejects_overlap_ge_length() {
        assert!(split_corpus(&[("d".into(), "a b".into())], 4, 4).is_err());
    }

    #[test]
    fn split_ids_stable_across_runs() {
        let texts = vec![("d".to_string(), "one two three four five six".to_string())];
        let a = split_corpus(&texts, 3, 1).unwrap();
        let b = split_corpus(&texts, 3, 1).unwrap();
        assert_eq!(a, b);
        let ids: std::collections::HashSet<_> = a.iter().map(|c| &c.id).collect();
        assert_eq!(ids.len(), a.len());
    }

    #[test]
    fn ngram_enumeration() {
        assert_eq!(
            ngrams(&toks(&["a", "b", "c"]), 2),
            toks(&["a", "b", "c", "a b", "b c"])
        );
        assert_eq!(ngrams(&toks(&["a"]), 3), toks(&["a"]));
        assert_eq!(ngrams(&toks(&["a", "b"]), 1), toks(&["a", "b"]));
    }

    #[test]
    fn stats_overlapping_counts() {
        let chunks = split_corpus(&[("d".into(), "a a a".into())], 8, 0).unwrap();
        let stats = CorpusStats::compute(&chunks, 2);
        let id = &chunks[0].id;
        assert_eq!(stats.count_in_chunk("a", id), 3);
        assert_eq!(stats.count_in_chunk("a a", id), 2);
        assert_eq!(stats.doc_freq_of("a"), 1);
    }
}
