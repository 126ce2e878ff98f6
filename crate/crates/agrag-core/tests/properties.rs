//! Property tests for the core invariants: chunking reconstruction, score
//! and cost ranges, PPR mass conservation, retrieval ordering, and index
//! round-trips.

use proptest::prelude::*;

use agrag_core::config::{PipelineConfig, EDGE_COST_FLOOR, PSEUDO_EDGE_COST};
use agrag_core::corpus::{split_corpus, tokenize, CorpusStats};
use agrag_core::extraction::er_score;
use agrag_core::graph::EdgeKind;
use agrag_core::index_io::{from_bytes, to_bytes};
use agrag_core::pipeline::build_index;
use agrag_core::providers::{EmbeddingProvider, MockEmbeddingProvider, UsageLog};
use agrag_core::retrieval::{bm25_normalized, hybrid_retrieve};
use agrag_core::weighting::{edge_costs, personalization_vector, ppr};

/// Small-vocabulary documents keep term statistics interesting.
fn doc_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(0usize..12, 1..40)
        .prop_map(|ids| ids.iter().map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "))
}

fn corpus_strategy() -> impl Strategy<Value = Vec<(String, String)>> {
    prop::collection::vec(doc_strategy(), 1..8).prop_map(|docs| {
        docs.into_iter()
            .enumerate()
            .map(|(i, text)| (format!("d{i}"), text))
            .collect()
    })
}

fn small_config(seed: u64) -> PipelineConfig {
    let mut config = PipelineConfig::default();
    config.chunk_length = 12;
    config.chunk_overlap = 3;
    config.entity_threshold = 0.0;
    config.max_ngram = 1;
    config.provider.embedding_dim = 16;
    config.seed = seed;
    config
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Every chunk is the exact token window at its stride position, the
    /// windows jointly cover the document, and nothing exceeds the cap.
    #[test]
    fn chunking_reconstructs_documents(text in doc_strategy(), l_t in 2usize..16, l_o in 0usize..8) {
        prop_assume!(l_o < l_t);
        let tokens = tokenize(&text);
        let chunks = split_corpus(&[("d".into(), text.clone())], l_t, l_o).unwrap();
        if tokens.len() <= l_t {
            prop_assert_eq!(chunks.len(), 1);
            prop_assert_eq!(&chunks[0].tokens, &tokens);
        } else {
            let stride = l_t - l_o;
            let mut covered = 0;
            for (i, chunk) in chunks.iter().enumerate() {
                prop_assert!(chunk.tokens.len() <= l_t);
                let begin = i * stride;
                let end = (begin + l_t).min(tokens.len());
                prop_assert_eq!(&chunk.tokens[..], &tokens[begin..end]);
                covered = covered.max(end);
            }
            prop_assert_eq!(covered, tokens.len());
        }
    }

    /// Tokenization is idempotent over its own output.
    #[test]
    fn tokenize_idempotent(text in "[ -~]{0,60}") {
        let once = tokenize(&text);
        let twice = tokenize(&once.join(" "));
        prop_assert_eq!(once, twice);
    }

    /// Every ER score over a random corpus lands in [0, 1].
    #[test]
    fn er_scores_in_unit_interval(texts in corpus_strategy()) {
        let chunks = split_corpus(&texts, 12, 3).unwrap();
        let stats = CorpusStats::compute(&chunks, 2);
        for chunk in &chunks {
            for term in agrag_core::corpus::ngrams(&chunk.tokens, 2) {
                let er = er_score(&term, &chunk.id, &stats).unwrap();
                prop_assert!((0.0..=1.0).contains(&er), "ER {} for {}", er, term);
            }
        }
    }

    /// PPR conserves probability mass and stays non-negative on graphs
    /// built from real corpora.
    #[test]
    fn ppr_conserves_mass(texts in corpus_strategy(), seed in 0u64..64) {
        let config = small_config(seed);
        let (graph, _) = build_index(&config, &texts, UsageLog::new()).unwrap();
        let facts: Vec<u32> = (0..graph.facts.len().min(3) as u32).collect();
        let p = personalization_vector(&graph, &facts).unwrap();
        let scores = ppr(&graph, &p, 0.5, 1e-7).unwrap();
        let total: f64 = scores.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-6, "sum {}", total);
        for s in &scores {
            prop_assert!(*s >= 0.0);
        }
    }

    /// Non-pseudo edge costs fall in [floor, 1]; pseudo edges cost 10.
    #[test]
    fn edge_costs_in_range(texts in corpus_strategy(), seed in 0u64..64) {
        let config = small_config(seed);
        let (graph, _) = build_index(&config, &texts, UsageLog::new()).unwrap();
        let embed = MockEmbeddingProvider::new(16, seed, UsageLog::new());
        let q = embed.embed_one("w0 w3 probe").unwrap();
        let costs = edge_costs(&graph, &q).unwrap();
        for (edge, cost) in graph.edges.iter().zip(&costs) {
            if edge.kind == EdgeKind::PseudoRelation {
                prop_assert_eq!(*cost, PSEUDO_EDGE_COST);
            } else {
                prop_assert!((EDGE_COST_FLOOR..=1.0).contains(cost), "cost {}", cost);
            }
        }
    }

    /// Normalized BM25 lands in [0, 1]; hybrid results are sorted by score
    /// descending with ids ascending on ties and bounded by k_r.
    #[test]
    fn retrieval_ordering_invariants(texts in corpus_strategy(), seed in 0u64..64, k in 1usize..6) {
        let config = small_config(seed);
        let (graph, _) = build_index(&config, &texts, UsageLog::new()).unwrap();
        let stats = CorpusStats::compute(&graph.chunks, 1);
        let tokens = tokenize("w0 w5");
        for value in bm25_normalized(&tokens, &graph, &stats, 1.2, 0.75) {
            prop_assert!((0.0..=1.0).contains(&value));
        }
        let embed = MockEmbeddingProvider::new(16, seed, UsageLog::new());
        let q = embed.embed_one("w0 w5").unwrap();
        let result = hybrid_retrieve(&q, &tokens, &graph, &stats, k, 1.2, 0.75).unwrap();
        prop_assert!(result.chunks.len() <= k);
        for pair in result.chunks.windows(2) {
            let ordered = pair[0].1 > pair[1].1
                || (pair[0].1 == pair[1].1 && pair[0].0 < pair[1].0);
            prop_assert!(ordered, "unsorted: {:?}", pair);
        }
    }

    /// Serialization round-trips exactly and is byte-stable.
    #[test]
    fn index_round_trip(texts in corpus_strategy(), seed in 0u64..64) {
        let config = small_config(seed);
        let (graph, _) = build_index(&config, &texts, UsageLog::new()).unwrap();
        let bytes = to_bytes(&graph);
        prop_assert_eq!(&bytes, &to_bytes(&graph));
        let reloaded = from_bytes(&bytes).unwrap();
        prop_assert_eq!(graph, reloaded);
    }
}
