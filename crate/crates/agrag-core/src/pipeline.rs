//! End-to-end orchestration: corpus loading, index builds, query answering,
//! and index inspection. This is the layer the CLI and the C ABI sit on.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{McmiMode, PipelineConfig};
use crate::corpus::{split_corpus, tokenize, CorpusStats};
use crate::error::{AgragError, Result};
use crate::extraction::{extract_entities, extract_relations_parallel, RelationOutcome};
use crate::graph::{build_graph, KnowledgeGraph, NodeKind};
use crate::index_io::{export_json, load_index, save_index};
use crate::mcmi::{expand_mcmi, seed_subgraph, serialize_subgraph, TraceStep};
use crate::providers::{build_providers, prompts, UsageLog};
use crate::retrieval::{filter_facts, hybrid_retrieve, map_query_to_facts, FilterDisposition};
use crate::weighting::compute_weighted_view;

/// Build summary returned by `index_command`.
#[derive(Debug, Clone, Serialize)]
pub struct IndexReport {
    pub index_path: String,
    pub documents: usize,
    pub chunks: usize,
    pub entities: usize,
    pub facts: usize,
    pub edges: usize,
    /// Chunks whose relation extraction failed even after a reprompt. The
    /// build continues without their triples.
    pub relation_failures: Vec<String>,
    pub provider_calls: usize,
    pub total_tokens: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FactOut {
    pub id: u32,
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RetrievedChunk {
    pub id: String,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct UsageSummary {
    pub calls: usize,
    pub total_tokens: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub total_ms: u128,
    pub weighting_ms: u128,
    pub subgraph_ms: u128,
    pub retrieval_ms: u128,
    pub answer_ms: u128,
}

/// Full answer payload. Serialized field order is fixed, so identical runs
/// produce byte-identical JSON; timings are attached only on request.
#[derive(Debug, Clone, Serialize)]
pub struct QueryResult {
    pub query: String,
    pub answer: String,
    /// "full", "steiner_only", or "graph-retrieval-degraded".
    pub mode: String,
    pub graph: String,
    pub raw_facts: Vec<FactOut>,
    pub filtered_facts: Vec<FactOut>,
    pub filter_disposition: FilterDisposition,
    pub subgraph_nodes: Vec<String>,
    pub trace: Vec<TraceStep>,
    pub retrieved: Vec<RetrievedChunk>,
    pub usage: UsageSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl QueryResult {
    pub fn degraded(&self) -> bool {
        self.mode == "graph-retrieval-degraded"
    }
}

/// Exclusive build lock: `<index>.lock` created with O_EXCL, removed on
/// drop. A stale lock from a crashed build must be removed manually.
struct BuildLock {
    path: PathBuf,
}

impl BuildLock {
    fn acquire(index_path: &Path) -> Result<Self> {
        let path = index_path.with_extension("lock");
        std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    AgragError::Config(format!(
                        "index build already in progress (lock file {} exists)",
                        path.display()
                    ))
                } else {
                    AgragError::Io(e)
                }
            })?;
        Ok(BuildLock { path })
    }
}

impl Drop for BuildLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Loads the corpus named by the config: a directory of .txt files
/// (document id = file stem, files in name order) or a .jsonl file with
/// one {"id": ..., "text": ...} object per line.
pub fn load_corpus(path: &Path) -> Result<Vec<(String, String)>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        let mut docs = Vec::with_capacity(files.len());
        for file in files {
            let id = file
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("doc")
                .to_string();
            docs.push((id, std::fs::read_to_string(&file)?));
        }
        if docs.is_empty() {
            return Err(AgragError::Corpus(format!(
                "no .txt files under {}",
                path.display()
            )));
        }
        return Ok(docs);
    }
    if path.extension().is_some_and(|x| x == "jsonl") {
        let raw = std::fs::read_to_string(path)?;
        let mut docs = Vec::new();
        for (lineno, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| {
                AgragError::Corpus(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            let text = value
                .get("text")
                .and_then(|t| t.as_str())
                .ok_or_else(|| {
                    AgragError::Corpus(format!(
                        "{}:{}: missing \"text\" field",
                        path.display(),
                        lineno + 1
                    ))
                })?;
            let id = value
                .get("id")
                .and_then(|t| t.as_str())
                .map(str::to_string)
                .unwrap_or_else(|| format!("line{}", lineno + 1));
            docs.push((id, text.to_string()));
        }
        if docs.is_empty() {
            return Err(AgragError::Corpus(format!("{} is empty", path.display())));
        }
        return Ok(docs);
    }
    Err(AgragError::Corpus(format!(
        "{} is neither a directory nor a .jsonl file",
        path.display()
    )))
}

/// Builds the knowledge-graph index in memory. Relation-extraction
/// failures degrade (the chunk contributes no triples) rather than abort;
/// embedding failures abort.
pub fn build_index(
    config: &PipelineConfig,
    documents: &[(String, String)],
    usage: UsageLog,
) -> Result<(KnowledgeGraph, Vec<String>)> {
    let (embed, llm) = build_providers(config, usage);
    let chunks = split_corpus(documents, config.chunk_length, config.chunk_overlap)?;
    if chunks.is_empty() {
        return Err(AgragError::Corpus("corpus produced no chunks".into()));
    }
    let stats = CorpusStats::compute(&chunks, config.max_ngram);
    let mut entities = Vec::with_capacity(chunks.len());
    for chunk in &chunks {
        entities.push(extract_entities(
            chunk,
            &stats,
            config.entity_threshold,
            config.max_ngram,
        )?);
    }
    let outcomes =
        extract_relations_parallel(&chunks, &entities, llm.as_ref(), config.relation_parallelism);
    let mut triples = Vec::with_capacity(chunks.len());
    let mut failures = Vec::new();
    for (chunk, outcome) in chunks.iter().zip(outcomes) {
        match outcome {
            RelationOutcome::Extracted(t) => triples.push(t),
            RelationOutcome::Failed(reason) => {
                log::warn!("chunk {}: relation extraction failed: {reason}", chunk.id);
                failures.push(chunk.id.clone());
                triples.push(Vec::new());
            }
        }
    }
    let graph = build_graph(
        &chunks,
        &entities,
        &triples,
        embed.as_ref(),
        config.synonym_threshold,
        &config.fingerprint(),
    )?;
    Ok((graph, failures))
}

/// `agrag index`: loads the corpus, builds the graph, writes the index
/// file under an exclusive lock, and reports build statistics.
pub fn index_command(config: &PipelineConfig) -> Result<IndexReport> {
    let corpus_path = config
        .corpus_path
        .as_deref()
        .ok_or_else(|| AgragError::Config("corpus_path is required for indexing".into()))?;
    let index_path = config
        .index_path
        .as_deref()
        .ok_or_else(|| AgragError::Config("index_path is required for indexing".into()))?;
    let documents = load_corpus(Path::new(corpus_path))?;
    let _lock = BuildLock::acquire(Path::new(index_path))?;
    let usage = UsageLog::new();
    let (graph, failures) = build_index(config, &documents, usage.clone())?;
    save_index(&graph, Path::new(index_path))?;
    let records = usage.snapshot();
    Ok(IndexReport {
        index_path: index_path.to_string(),
        documents: documents.len(),
        chunks: graph.chunks.len(),
        entities: graph
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Entity)
            .count(),
        facts: graph.facts.len(),
        edges: graph.edges.len(),
        relation_failures: failures,
        provider_calls: records.len(),
        total_tokens: usage.total_tokens(),
    })
}

fn fact_out(graph: &KnowledgeGraph, scored: &[(u32, f64)]) -> Vec<FactOut> {
    scored
        .iter()
        .map(|&(id, score)| {
            let f = graph.fact(id);
            FactOut {
                id,
                subject: f.subject.clone(),
                relation: f.relation.clone(),
                object: f.object.clone(),
                score,
            }
        })
        .collect()
}

/// `agrag query`: answers one query against a saved index. Graph-side
/// failures (no facts, disconnected terminals) degrade to hybrid-only
/// retrieval with mode "graph-retrieval-degraded"; everything else is
/// fatal.
pub fn query_command(
    index_path: &Path,
    query: &str,
    config: &PipelineConfig,
    explain: bool,
) -> Result<QueryResult> {
    let graph = load_index(index_path)?;
    query_loaded(&graph, query, config, explain)
}

/// Answers one query against an already-loaded graph; see `query_command`.
pub fn query_loaded(
    graph: &KnowledgeGraph,
    query: &str,
    config: &PipelineConfig,
    explain: bool,
) -> Result<QueryResult> {
    let start = std::time::Instant::now();
    if graph.config_fingerprint != config.fingerprint() {
        log::warn!(
            "index fingerprint {} differs from current config {}",
            graph.config_fingerprint,
            config.fingerprint()
        );
    }
    let usage = UsageLog::new();
    let (embed, llm) = build_providers(config, usage.clone());
    let query_embedding = embed.embed_one(query)?;
    if query_embedding.len() != graph.embedding_dim {
        return Err(AgragError::DimensionMismatch {
            expected: graph.embedding_dim,
            got: query_embedding.len(),
        });
    }
    let stats = CorpusStats::compute(&graph.chunks, 1);
    let query_tokens = tokenize(query);

    let raw = map_query_to_facts(&query_embedding, &graph, config.k_a)?;
    let (filtered, disposition) = if raw.is_empty() {
        (Vec::new(), FilterDisposition::Selected)
    } else {
        filter_facts(&raw, query, &graph, llm.as_ref())
    };
    let fact_ids: Vec<u32> = filtered.iter().map(|&(id, _)| id).collect();

    // Graph-side retrieval; failures here degrade instead of aborting.
    let weighting_start = std::time::Instant::now();
    let graph_side = if fact_ids.is_empty() {
        log::warn!("no mapped facts; degrading to hybrid-only retrieval");
        None
    } else {
        let view = compute_weighted_view(
            &graph,
            query_embedding.clone(),
            &fact_ids,
            config.damping,
            config.ppr_tolerance,
            config.passage_factor,
        )?;
        match seed_subgraph(&graph, &view, &fact_ids) {
            Ok(seed) => Some((view, seed)),
            Err(AgragError::UnreachableTerminal(reason)) => {
                log::warn!("seed construction failed ({reason}); degrading");
                None
            }
            Err(e) => return Err(e),
        }
    };
    let weighting_ms = weighting_start.elapsed().as_millis();

    let subgraph_start = std::time::Instant::now();
    let (mode, graph_string, subgraph_nodes, trace) = match graph_side {
        Some((view, (seed_nodes, seed_edges))) => {
            let (nodes, edges, trace, mode) = match config.mcmi_mode {
                McmiMode::Full => {
                    let sub = expand_mcmi(&graph, &view, &seed_nodes, &seed_edges);
                    (sub.nodes, sub.edges, sub.trace, "full")
                }
                McmiMode::SteinerOnly => (seed_nodes, seed_edges, Vec::new(), "steiner_only"),
            };
            let text = serialize_subgraph(&graph, &nodes, &edges);
            let keys: Vec<String> = nodes
                .iter()
                .map(|&n| graph.nodes[n as usize].key.clone())
                .collect();
            (mode.to_string(), text, keys, trace)
        }
        None => (
            "graph-retrieval-degraded".to_string(),
            String::new(),
            Vec::new(),
            Vec::new(),
        ),
    };
    let subgraph_ms = subgraph_start.elapsed().as_millis();

    let retrieval_start = std::time::Instant::now();
    let hybrid = hybrid_retrieve(
        &query_embedding,
        &query_tokens,
        &graph,
        &stats,
        config.k_r,
        config.bm25_k1,
        config.bm25_b,
    )?;
    let retrieved: Vec<RetrievedChunk> = hybrid
        .chunks
        .iter()
        .map(|(id, score)| RetrievedChunk {
            id: id.clone(),
            score: *score,
            text: graph
                .chunk_by_id(id)
                .map(|c| c.text.clone())
                .unwrap_or_default(),
        })
        .collect();
    let retrieval_ms = retrieval_start.elapsed().as_millis();

    let answer_start = std::time::Instant::now();
    let chunk_texts: Vec<String> = retrieved.iter().map(|c| c.text.clone()).collect();
    let answer = llm.chat(
        prompts::ANSWER_SYSTEM,
        &prompts::answer_user(query, &graph_string, &chunk_texts),
    )?;
    let answer_ms = answer_start.elapsed().as_millis();

    let records = usage.snapshot();
    Ok(QueryResult {
        query: query.to_string(),
        answer,
        mode,
        graph: graph_string,
        raw_facts: fact_out(&graph, &raw),
        filtered_facts: fact_out(&graph, &filtered),
        filter_disposition: disposition,
        subgraph_nodes,
        trace,
        retrieved,
        usage: UsageSummary {
            calls: records.len(),
            total_tokens: usage.total_tokens(),
        },
        timings: explain.then(|| Timings {
            total_ms: start.elapsed().as_millis(),
            weighting_ms,
            subgraph_ms,
            retrieval_ms,
            answer_ms,
        }),
    })
}

/// `agrag inspect`: dumps the index as JSON, optionally narrowed by
/// selectors of the form key=value (kind=, surface=, chunk=).
pub fn inspect_command(index_path: &Path, selectors: &[String]) -> Result<serde_json::Value> {
    let graph = load_index(index_path)?;
    inspect_loaded(&graph, selectors)
}

/// Inspects an already-loaded graph; see `inspect_command`.
pub fn inspect_loaded(graph: &KnowledgeGraph, selectors: &[String]) -> Result<serde_json::Value> {
    if selectors.is_empty() {
        return Ok(export_json(graph));
    }
    let mut out = serde_json::Map::new();
    for selector in selectors {
        let (key, value) = selector.split_once('=').ok_or_else(|| {
            AgragError::Selector(format!("selector `{selector}` is not key=value"))
        })?;
        match key {
            "kind" => {
                let kind = match value {
                    "entity" => NodeKind::Entity,
                    "passage" => NodeKind::Passage,
                    "pseudo" => NodeKind::Pseudo,
                    other => {
                        return Err(AgragError::Selector(format!(
                            "unknown node kind `{other}`"
                        )))
                    }
                };
                let keys: Vec<&str> = graph
                    .nodes
                    .iter()
                    .filter(|n| n.kind == kind)
                    .map(|n| n.key.as_str())
                    .collect();
                out.insert(selector.clone(), serde_json::json!(keys));
            }
            "surface" => {
                let node = graph.entity_node(value).ok_or_else(|| {
                    AgragError::Selector(format!("no entity with surface `{value}`"))
                })?;
                let neighbors: Vec<serde_json::Value> = graph
                    .neighbors(node)
                    .iter()
                    .map(|&(v, eid)| {
                        let edge = &graph.edges[eid as usize];
                        serde_json::json!({
                            "node": graph.nodes[v as usize].key,
                            "kind": edge.kind,
                            "label": edge.label,
                        })
                    })
                    .collect();
                out.insert(
                    selector.clone(),
                    serde_json::json!({ "surface": value, "neighbors": neighbors }),
                );
            }
            "chunk" => {
                let chunk = graph.chunk_by_id(value).ok_or_else(|| {
                    AgragError::Selector(format!("no chunk with id `{value}`"))
                })?;
                out.insert(selector.clone(), serde_json::json!(chunk));
            }
            other => {
                return Err(AgragError::Selector(format!(
                    "unknown selector key `{other}`"
                )))
            }
        }
    }
    Ok(serde_json::Value::Object(out))
}
