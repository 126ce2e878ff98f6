//! The persistent knowledge-graph index: entity, passage, and pseudo nodes,
//! typed edges, the triple-fact registry, and all embeddings.
//!
//! Construction is fully deterministic: nodes, edges, and facts are laid
//! out in sorted or corpus order, so identical inputs produce identical
//! graphs (and byte-identical saved indexes).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::error::{AgragError, Result};
use crate::extraction::{Entity, TripleFact};
use crate::providers::EmbeddingProvider;
use crate::vecmath::cosine;

pub type NodeId = u32;
pub type EdgeId = u32;
pub type FactId = u32;

pub const PSEUDO_NODE_KEY: &str = "__pseudo__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Entity,
    Passage,
    Pseudo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    /// Entity surface, chunk id, or the singleton pseudo key.
    pub key: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Relation,
    Contains,
    Synonym,
    PseudoRelation,
}

impl EdgeKind {
    pub fn fixed_label(self) -> Option<&'static str> {
        match self {
            EdgeKind::Contains => Some("Contains"),
            EdgeKind::Synonym => Some("synonym"),
            EdgeKind::PseudoRelation => Some("pseudo_relation"),
            EdgeKind::Relation => None,
        }
    }
}

/// Undirected edge. `(min(u,v), max(u,v), kind, label)` is unique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub kind: EdgeKind,
    pub label: String,
    /// Facts backing this edge; relation-kind only.
    pub fact_ids: Vec<FactId>,
    /// Surrogate text embedding for contains/synonym edges, used when
    /// pricing structural edges at query time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate_embedding: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub facts: Vec<TripleFact>,
    pub chunks: Vec<Chunk>,
    /// Aligned with entity node order (nodes[0..entity_count]).
    pub entity_embeddings: Vec<Vec<f32>>,
    /// Aligned with chunk order.
    pub chunk_embeddings: Vec<Vec<f32>>,
    pub embedding_dim: usize,
    pub config_fingerprint: String,
    adjacency: Vec<Vec<(NodeId, EdgeId)>>,
    node_lookup: HashMap<(NodeKind, String), NodeId>,
}

impl KnowledgeGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adjacency[node as usize]
    }

    pub fn entity_node(&self, surface: &str) -> Option<NodeId> {
        self.node_lookup
            .get(&(NodeKind::Entity, surface.to_string()))
            .copied()
    }

    pub fn passage_node(&self, chunk_id: &str) -> Option<NodeId> {
        self.node_lookup
            .get(&(NodeKind::Passage, chunk_id.to_string()))
            .copied()
    }

    pub fn pseudo_node(&self) -> Option<NodeId> {
        self.node_lookup
            .get(&(NodeKind::Pseudo, PSEUDO_NODE_KEY.to_string()))
            .copied()
    }

    pub fn chunk_by_id(&self, chunk_id: &str) -> Option<&Chunk> {
        self.chunks.iter().find(|c| c.id == chunk_id)
    }

    pub fn fact(&self, id: FactId) -> &TripleFact {
        &self.facts[id as usize]
    }

    /// Rebuilds adjacency and lookup tables from nodes/edges. Called after
    /// construction and after loading from disk.
    pub fn rebuild_lookup(&mut self) {
        self.node_lookup = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| ((n.kind, n.key.clone()), i as NodeId))
            .collect();
        self.adjacency = vec![Vec::new(); self.nodes.len()];
        for (eid, edge) in self.edges.iter().enumerate() {
            self.adjacency[edge.u as usize].push((edge.v, eid as EdgeId));
            self.adjacency[edge.v as usize].push((edge.u, eid as EdgeId));
        }
    }

    /// Assembles a graph from raw parts. Callers are responsible for
    /// keeping embeddings aligned with node and chunk order.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        facts: Vec<TripleFact>,
        chunks: Vec<Chunk>,
        entity_embeddings: Vec<Vec<f32>>,
        chunk_embeddings: Vec<Vec<f32>>,
        embedding_dim: usize,
        config_fingerprint: String,
    ) -> Self {
        let mut graph = KnowledgeGraph {
            nodes,
            edges,
            facts,
            chunks,
            entity_embeddings,
            chunk_embeddings,
            embedding_dim,
            config_fingerprint,
            adjacency: Vec::new(),
            node_lookup: HashMap::new(),
        };
        graph.rebuild_lookup();
        graph
    }

    pub fn entity_embedding(&self, node: NodeId) -> Result<&Vec<f32>> {
        let n = &self.nodes[node as usize];
        if n.kind != NodeKind::Entity {
            return Err(AgragError::IndexCorruption(format!(
                "node {node} ({}) is not an entity",
                n.key
            )));
        }
        self.entity_embeddings
            .get(node as usize)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| {
                AgragError::IndexCorruption(format!("entity {} has no embedding", n.key))
            })
    }
}

fn contains_subsequence(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty()
        && needle.len() <= haystack.len()
        && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Builds the index graph: entity nodes, passage nodes, relation edges for
/// every triple, contains edges for every (entity, chunk) occurrence,
/// synonym edges above φ, and the pseudo hub. Embedding provider failure
/// aborts the build.
pub fn build_graph(
    chunks: &[Chunk],
    per_chunk_entities: &[Vec<Entity>],
    per_chunk_triples: &[Vec<TripleFact>],
    provider: &dyn EmbeddingProvider,
    phi: f64,
    config_fingerprint: &str,
) -> Result<KnowledgeGraph> {
    assert_eq!(chunks.len(), per_chunk_entities.len());
    assert_eq!(chunks.len(), per_chunk_triples.len());

    // Entity nodes: distinct surfaces, sorted.
    let mut surfaces: Vec<String> = per_chunk_entities
        .iter()
        .flatten()
        .map(|e| e.surface.clone())
        .collect();
    surfaces.sort();
    surfaces.dedup();

    let mut nodes: Vec<Node> = surfaces
        .iter()
        .map(|s| Node {
            kind: NodeKind::Entity,
            key: s.clone(),
        })
        .collect();
    let entity_count = nodes.len();
    for chunk in chunks {
        nodes.push(Node {
            kind: NodeKind::Passage,
            key: chunk.id.clone(),
        });
    }
    let entity_id: HashMap<&str, NodeId> = surfaces
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i as NodeId))
        .collect();
    let passage_id =
        |chunk_index: usize| -> NodeId { (entity_count + chunk_index) as NodeId };

    // Facts in chunk order, exact duplicates within a chunk collapsed.
    let mut facts: Vec<TripleFact> = Vec::new();
    for triples in per_chunk_triples {
        let mut seen = std::collections::HashSet::new();
        for t in triples {
            let key = (t.subject.clone(), t.relation.clone(), t.object.clone());
            if seen.insert(key) {
                facts.push(t.clone());
            }
        }
    }
    for fact in &facts {
        for endpoint in [&fact.subject, &fact.object] {
            if !entity_id.contains_key(endpoint.as_str()) {
                return Err(AgragError::IndexCorruption(format!(
                    "fact references entity {endpoint} absent from the entity set"
                )));
            }
        }
    }

    // Embeddings: entities, facts, chunks, in fixed batches.
    let fact_texts: Vec<String> = facts.iter().map(|f| f.text()).collect();
    let chunk_texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
    let entity_vecs = if surfaces.is_empty() {
        Vec::new()
    } else {
        provider.embed(&surfaces)?
    };
    let fact_vecs = if fact_texts.is_empty() {
        Vec::new()
    } else {
        provider.embed(&fact_texts)?
    };
    let chunk_vecs = if chunk_texts.is_empty() {
        Vec::new()
    } else {
        provider.embed(&chunk_texts)?
    };
    for (fact, vec) in facts.iter_mut().zip(fact_vecs) {
        fact.embedding = Some(vec);
    }
    let embedding_dim = provider.dimensionality();

    // Relation edges: duplicate triples over the same unordered pair and
    // label merge into one edge carrying all backing fact ids.
    let mut relation_edges: BTreeMap<(NodeId, NodeId, String), Vec<FactId>> = BTreeMap::new();
    for (fid, fact) in facts.iter().enumerate() {
        let a = entity_id[fact.subject.as_str()];
        let b = entity_id[fact.object.as_str()];
        let key = (a.min(b), a.max(b), fact.relation.clone());
        relation_edges.entry(key).or_default().push(fid as FactId);
    }
    let mut edges: Vec<Edge> = relation_edges
        .into_iter()
        .map(|((u, v, label), fact_ids)| Edge {
            u,
            v,
            kind: EdgeKind::Relation,
            label,
            fact_ids,
            surrogate_embedding: None,
        })
        .collect();

    // Contains edges: entity token sequence occurs contiguously in the
    // chunk token list.
    let mut contains_texts = Vec::new();
    let mut contains_pairs = Vec::new();
    for (s_idx, surface) in surfaces.iter().enumerate() {
        let needle = surface.split(' ').map(str::to_string).collect::<Vec<_>>();
        for (c_idx, chunk) in chunks.iter().enumerate() {
            if contains_subsequence(&chunk.tokens, &needle) {
                contains_pairs.push((s_idx as NodeId, c_idx));
                contains_texts.push(format!("{surface} Contains {}", chunk.head()));
            }
        }
    }
    let contains_vecs = if contains_texts.is_empty() {
        Vec::new()
    } else {
        provider.embed(&contains_texts)?
    };
    for ((entity, chunk_index), vec) in contains_pairs.into_iter().zip(contains_vecs) {
        edges.push(Edge {
            u: entity,
            v: passage_id(chunk_index),
            kind: EdgeKind::Contains,
            label: "Contains".to_string(),
            fact_ids: Vec::new(),
            surrogate_embedding: Some(vec),
        });
    }

    let mut entity_embeddings = entity_vecs;
    entity_embeddings.resize(nodes.len(), Vec::new());

    let mut graph = KnowledgeGraph::from_parts(
        nodes,
        edges,
        facts,
        chunks.to_vec(),
        entity_embeddings,
        chunk_vecs,
        embedding_dim,
        config_fingerprint.to_string(),
    );
    add_synonym_edges(&mut graph, phi, provider)?;
    attach_pseudo_node(&mut graph);
    Ok(graph)
}

/// Adds an undirected synonym edge for every entity pair with cosine
/// similarity strictly above φ. Returns the number of edges added.
pub fn add_synonym_edges(
    graph: &mut KnowledgeGraph,
    phi: f64,
    provider: &dyn EmbeddingProvider,
) -> Result<usize> {
    let entity_nodes: Vec<NodeId> = graph
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.kind == NodeKind::Entity)
        .map(|(i, _)| i as NodeId)
        .collect();
    let mut pairs = Vec::new();
    let mut texts = Vec::new();
    for i in 0..entity_nodes.len() {
        for j in (i + 1)..entity_nodes.len() {
            let (a, b) = (entity_nodes[i], entity_nodes[j]);
            let sim = cosine(graph.entity_embedding(a)?, graph.entity_embedding(b)?)?;
            if sim > phi {
                pairs.push((a, b));
                texts.push(format!(
                    "{} synonym {}",
                    graph.nodes[a as usize].key, graph.nodes[b as usize].key
                ));
            }
        }
    }
    let vecs = if texts.is_empty() {
        Vec::new()
    } else {
        provider.embed(&texts)?
    };
    let added = pairs.len();
    for ((u, v), vec) in pairs.into_iter().zip(vecs) {
        graph.edges.push(Edge {
            u,
            v,
            kind: EdgeKind::Synonym,
            label: "synonym".to_string(),
            fact_ids: Vec::new(),
            surrogate_embedding: Some(vec),
        });
    }
    graph.rebuild_lookup();
    Ok(added)
}

/// Wires the singleton pseudo node to every passage node. Idempotent. The
/// pseudo edges carry fixed cost 10 in every weighted view.
pub fn attach_pseudo_node(graph: &mut KnowledgeGraph) {
    let pseudo = match graph.pseudo_node() {
        Some(id) => id,
        None => {
            graph.nodes.push(Node {
                kind: NodeKind::Pseudo,
                key: PSEUDO_NODE_KEY.to_string(),
            });
            (graph.nodes.len() - 1) as NodeId
        }
    };
    let existing: std::collections::HashSet<NodeId> = graph
        .edges
        .iter()
        .filter(|e| e.kind == EdgeKind::PseudoRelation)
        .map(|e| if e.u == pseudo { e.v } else { e.u })
        .collect();
    for (i, node) in graph.nodes.iter().enumerate() {
        if node.kind == NodeKind::Passage && !existing.contains(&(i as NodeId)) {
            graph.edges.push(Edge {
                u: i as NodeId,
                v: pseudo,
                kind: EdgeKind::PseudoRelation,
                label: "pseudo_relation".to_string(),
                fact_ids: Vec::new(),
                surrogate_embedding: None,
            });
        }
    }
    graph.rebuild_lookup();
}
