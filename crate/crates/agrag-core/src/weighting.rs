//! Per-query graph weighting: personalized PageRank node influence scores
//! and semantic edge costs, layered over the immutable graph as a
//! `WeightedView`.

use crate::config::{EDGE_COST_FLOOR, PPR_MAX_ITERATIONS, PSEUDO_EDGE_COST};
use crate::error::{AgragError, Result};
use crate::graph::{EdgeKind, FactId, KnowledgeGraph, NodeKind};
use crate::vecmath::cosine;

/// Node influence scores and edge costs for one query.
#[derive(Debug, Clone)]
pub struct WeightedView {
    /// s_v, indexed by node id. Passage scores are damped by the balance
    /// factor after PPR.
    pub node_scores: Vec<f64>,
    /// c_e, indexed by edge id. Pseudo edges cost exactly 10; all other
    /// kinds fall in [EDGE_COST_FLOOR, 1].
    pub edge_costs: Vec<f64>,
    pub query_embedding: Vec<f32>,
    pub damping: f64,
    pub tolerance: f64,
}

impl WeightedView {
    pub fn edge_cost(&self, edge: u32) -> f64 {
        self.edge_costs[edge as usize]
    }

    pub fn node_score(&self, node: u32) -> f64 {
        self.node_scores[node as usize]
    }
}

/// Restart distribution: uniform mass over the distinct entity endpoints of
/// the mapped facts. An empty fact set degenerates to uniform over all
/// nodes (logged).
pub fn personalization_vector(graph: &KnowledgeGraph, mapped_facts: &[FactId]) -> Result<Vec<f64>> {
    let n = graph.node_count();
    let mut p = vec![0.0; n];
    if mapped_facts.is_empty() {
        log::warn!("empty mapped fact set; personalization degenerates to uniform");
        let w = 1.0 / n as f64;
        p.iter_mut().for_each(|x| *x = w);
        return Ok(p);
    }
    let mut endpoints = std::collections::BTreeSet::new();
    for &fid in mapped_facts {
        let fact = graph
            .facts
            .get(fid as usize)
            .ok_or_else(|| AgragError::IndexCorruption(format!("fact {fid} out of range")))?;
        for surface in [&fact.subject, &fact.object] {
            let node = graph.entity_node(surface).ok_or_else(|| {
                AgragError::IndexCorruption(format!("fact entity {surface} missing from graph"))
            })?;
            endpoints.insert(node);
        }
    }
    let w = 1.0 / endpoints.len() as f64;
    for node in endpoints {
        p[node as usize] = w;
    }
    Ok(p)
}

/// Personalized PageRank to a fixed point of
/// `PPR = (1-d)·p + d·P·PPR`, where the transition step distributes each
/// node's mass uniformly over its neighbors (dangling nodes spread
/// uniformly over all of V). Stops when the max-norm delta drops below
/// `tolerance`; errors out past the iteration cap.
pub fn ppr(graph: &KnowledgeGraph, p: &[f64], damping: f64, tolerance: f64) -> Result<Vec<f64>> {
    let n = graph.node_count();
    assert_eq!(p.len(), n, "personalization length must match node count");
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut scores = p.to_vec();
    let mut delta = f64::INFINITY;
    for _ in 0..PPR_MAX_ITERATIONS {
        let mut next = vec![0.0; n];
        let mut dangling_mass = 0.0;
        for u in 0..n {
            let neighbors = graph.neighbors(u as u32);
            if neighbors.is_empty() {
                dangling_mass += scores[u];
            } else {
                let share = scores[u] / neighbors.len() as f64;
                for &(v, _) in neighbors {
                    next[v as usize] += share;
                }
            }
        }
        let dangling_share = dangling_mass / n as f64;
        delta = 0.0f64;
        for v in 0..n {
            let value = (1.0 - damping) * p[v] + damping * (next[v] + dangling_share);
            delta = delta.max((value - scores[v]).abs());
            next[v] = value;
        }
        scores = next;
        if delta < tolerance {
            return Ok(scores);
        }
    }
    Err(AgragError::PprNonConvergence {
        iterations: PPR_MAX_ITERATIONS,
        delta,
    })
}

/// Multiplies passage-node scores by the balance factor; entity and pseudo
/// scores are unchanged.
pub fn apply_passage_damping(graph: &KnowledgeGraph, scores: &mut [f64], factor: f64) {
    for (i, node) in graph.nodes.iter().enumerate() {
        if node.kind == NodeKind::Passage {
            scores[i] *= factor;
        }
    }
}

/// Cost of a single similarity value per the (1 - MS) / 2 mapping, clamped
/// away from zero.
fn similarity_cost(ms: f64) -> f64 {
    ((1.0 - ms) / 2.0).max(EDGE_COST_FLOOR)
}

/// Per-edge costs against the query embedding. Relation edges price by the
/// best (maximum MS) backing fact; contains/synonym edges by their
/// surrogate text embedding; pseudo edges are fixed at 10.
pub fn edge_costs(graph: &KnowledgeGraph, query_embedding: &[f32]) -> Result<Vec<f64>> {
    let mut costs = Vec::with_capacity(graph.edges.len());
    for edge in &graph.edges {
        let cost = match edge.kind {
            EdgeKind::PseudoRelation => PSEUDO_EDGE_COST,
            EdgeKind::Relation => {
                let mut best = f64::NEG_INFINITY;
                for &fid in &edge.fact_ids {
                    let fact = &graph.facts[fid as usize];
                    let embedding = fact.embedding.as_ref().ok_or_else(|| {
                        AgragError::IndexCorruption(format!(
                            "fact {fid} ({}) has no embedding",
                            fact.text()
                        ))
                    })?;
                    best = best.max(cosine(query_embedding, embedding)?);
                }
                if best == f64::NEG_INFINITY {
                    return Err(AgragError::IndexCorruption(
                        "relation edge without backing facts".into(),
                    ));
                }
                similarity_cost(best)
            }
            EdgeKind::Contains | EdgeKind::Synonym => {
                let embedding = edge.surrogate_embedding.as_ref().ok_or_else(|| {
                    AgragError::IndexCorruption(format!(
                        "{:?} edge ({},{}) has no surrogate embedding",
                        edge.kind, edge.u, edge.v
                    ))
                })?;
                similarity_cost(cosine(query_embedding, embedding)?)
            }
        };
        costs.push(cost);
    }
    Ok(costs)
}

/// Runs the full weighting pass for one query.
pub fn compute_weighted_view(
    graph: &KnowledgeGraph,
    query_embedding: Vec<f32>,
    mapped_facts: &[FactId],
    damping: f64,
    tolerance: f64,
    passage_factor: f64,
) -> Result<WeightedView> {
    let p = personalization_vector(graph, mapped_facts)?;
    let mut scores = ppr(graph, &p, damping, tolerance)?;
    apply_passage_damping(graph, &mut scores, passage_factor);
    let costs = edge_costs(graph, &query_embedding)?;
    Ok(WeightedView {
        node_scores: scores,
        edge_costs: costs,
        query_embedding,
        damping,
        tolerance,
    })
}
