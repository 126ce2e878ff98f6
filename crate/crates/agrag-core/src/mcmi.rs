//! Reasoning-subgraph selection: a 2-approximate Steiner tree over the
//! mapped-fact terminals seeds the subgraph, then greedy expansion admits
//! neighbors whose influence-per-cost beats the running average ratio.
//!
//! The pseudo hub never participates: its edges are skipped during search
//! and it cannot be admitted.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use serde::Serialize;

use crate::error::{AgragError, Result};
use crate::graph::{EdgeId, EdgeKind, FactId, KnowledgeGraph, NodeId, NodeKind};
use crate::weighting::WeightedView;

/// Steiner seed: connects all terminals, cost is the sum of edge costs.
#[derive(Debug, Clone, PartialEq)]
pub struct SteinerTree {
    pub nodes: BTreeSet<NodeId>,
    pub edges: BTreeSet<EdgeId>,
    pub cost: f64,
}

/// One admission decision during greedy expansion.
#[derive(Debug, Clone, Serialize)]
pub struct TraceStep {
    pub node: NodeId,
    pub node_key: String,
    pub edge: EdgeId,
    /// s_v / c_e at the moment of admission. Infinite only for the
    /// bootstrap admission out of an edgeless seed.
    pub ratio: f64,
    /// Average-ratio threshold the candidate had to beat.
    pub threshold: f64,
}

/// Final reasoning subgraph plus the expansion audit trail.
#[derive(Debug, Clone)]
pub struct McmiSubgraph {
    pub nodes: BTreeSet<NodeId>,
    pub edges: BTreeSet<EdgeId>,
    pub trace: Vec<TraceStep>,
}

/// Whether an edge may be traversed: the pseudo hub and its spokes are
/// invisible to subgraph selection.
fn traversable(graph: &KnowledgeGraph, edge: EdgeId) -> bool {
    graph.edges[edge as usize].kind != EdgeKind::PseudoRelation
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: NodeId,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // min-heap on distance, ties by node id for determinism
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct Voronoi {
    dist: Vec<f64>,
    /// Closest terminal for each reached node.
    source: Vec<Option<NodeId>>,
    /// Edge taken into each node on its shortest path.
    pred: Vec<Option<EdgeId>>,
}

/// Multi-source Dijkstra from all terminals, partitioning the graph into
/// shortest-path regions. Ties break toward the smaller terminal id.
fn voronoi_regions(graph: &KnowledgeGraph, view: &WeightedView, terminals: &[NodeId]) -> Voronoi {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut source = vec![None; n];
    let mut pred = vec![None; n];
    let mut heap = BinaryHeap::new();
    for &t in terminals {
        dist[t as usize] = 0.0;
        source[t as usize] = Some(t);
        heap.push(HeapEntry { dist: 0.0, node: t });
    }
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if d > dist[u as usize] {
            continue;
        }
        for &(v, eid) in graph.neighbors(u) {
            if !traversable(graph, eid) {
                continue;
            }
            let nd = d + view.edge_cost(eid);
            let better = nd < dist[v as usize]
                || (nd == dist[v as usize] && source[u as usize] < source[v as usize]);
            if better {
                dist[v as usize] = nd;
                source[v as usize] = source[u as usize];
                pred[v as usize] = Some(eid);
                heap.push(HeapEntry { dist: nd, node: v });
            }
        }
    }
    Voronoi { dist, source, pred }
}

/// Union-find for the Kruskal passes.
struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        if self.0[x] != x {
            let root = self.find(self.0[x]);
            self.0[x] = root;
        }
        self.0[x]
    }
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

/// Mehlhorn's 2-approximate Steiner tree: shortest-path Voronoi regions,
/// an auxiliary terminal graph weighted by cheapest boundary paths, its
/// MST expanded back to real edges, then a final MST with non-terminal
/// leaves pruned.
pub fn steiner_tree(
    graph: &KnowledgeGraph,
    view: &WeightedView,
    terminals: &[NodeId],
) -> Result<SteinerTree> {
    let mut terms: Vec<NodeId> = terminals.to_vec();
    terms.sort_unstable();
    terms.dedup();
    if terms.is_empty() {
        return Ok(SteinerTree {
            nodes: BTreeSet::new(),
            edges: BTreeSet::new(),
            cost: 0.0,
        });
    }
    for &t in &terms {
        if graph.nodes[t as usize].kind == NodeKind::Pseudo {
            return Err(AgragError::IndexCorruption(
                "pseudo node cannot be a Steiner terminal".into(),
            ));
        }
    }
    if terms.len() == 1 {
        return Ok(SteinerTree {
            nodes: BTreeSet::from([terms[0]]),
            edges: BTreeSet::new(),
            cost: 0.0,
        });
    }

    let vor = voronoi_regions(graph, view, &terms);

    // Auxiliary terminal graph: cheapest boundary crossing per terminal pair.
    let mut aux: BTreeMap<(NodeId, NodeId), (f64, EdgeId)> = BTreeMap::new();
    for (eid, edge) in graph.edges.iter().enumerate() {
        if !traversable(graph, eid as EdgeId) {
            continue;
        }
        let (Some(su), Some(sv)) = (vor.source[edge.u as usize], vor.source[edge.v as usize])
        else {
            continue;
        };
        if su == sv {
            continue;
        }
        let weight =
            vor.dist[edge.u as usize] + view.edge_cost(eid as EdgeId) + vor.dist[edge.v as usize];
        let key = (su.min(sv), su.max(sv));
        match aux.get(&key) {
            Some(&(best, _)) if best <= weight => {}
            _ => {
                aux.insert(key, (weight, eid as EdgeId));
            }
        }
    }

    // MST of the terminal graph (Kruskal).
    let term_index: HashMap<NodeId, usize> =
        terms.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let mut aux_edges: Vec<(f64, NodeId, NodeId, EdgeId)> = aux
        .into_iter()
        .map(|((a, b), (w, eid))| (w, a, b, eid))
        .collect();
    aux_edges.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut dsu = Dsu::new(terms.len());
    let mut bridges = Vec::new();
    for (_, a, b, eid) in aux_edges {
        if dsu.union(term_index[&a], term_index[&b]) {
            bridges.push(eid);
        }
    }
    let root = dsu.find(0);
    if (1..terms.len()).any(|i| dsu.find(i) != root) {
        return Err(AgragError::UnreachableTerminal(
            "terminal set is not connected".into(),
        ));
    }

    // Expand bridges to real edge sets by walking predecessor chains.
    let mut edge_set: BTreeSet<EdgeId> = BTreeSet::new();
    for eid in bridges {
        edge_set.insert(eid);
        let edge = &graph.edges[eid as usize];
        for endpoint in [edge.u, edge.v] {
            let mut node = endpoint;
            while let Some(pe) = vor.pred[node as usize] {
                if !edge_set.insert(pe) {
                    break;
                }
                let pedge = &graph.edges[pe as usize];
                node = if pedge.u == node { pedge.v } else { pedge.u };
            }
        }
    }

    // Final MST over the expanded edge set, then prune non-terminal leaves.
    let node_list: BTreeSet<NodeId> = edge_set
        .iter()
        .flat_map(|&e| [graph.edges[e as usize].u, graph.edges[e as usize].v])
        .chain(terms.iter().copied())
        .collect();
    let local: HashMap<NodeId, usize> = node_list
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i))
        .collect();
    let mut sorted: Vec<EdgeId> = edge_set.iter().copied().collect();
    sorted.sort_by(|&a, &b| {
        view.edge_cost(a)
            .total_cmp(&view.edge_cost(b))
            .then(a.cmp(&b))
    });
    let mut dsu = Dsu::new(node_list.len());
    let mut tree_edges: BTreeSet<EdgeId> = BTreeSet::new();
    for eid in sorted {
        let edge = &graph.edges[eid as usize];
        if dsu.union(local[&edge.u], local[&edge.v]) {
            tree_edges.insert(eid);
        }
    }
    let terminal_set: BTreeSet<NodeId> = terms.iter().copied().collect();
    loop {
        let mut degree: HashMap<NodeId, Vec<EdgeId>> = HashMap::new();
        for &eid in &tree_edges {
            let edge = &graph.edges[eid as usize];
            degree.entry(edge.u).or_default().push(eid);
            degree.entry(edge.v).or_default().push(eid);
        }
        let removable: Vec<EdgeId> = degree
            .iter()
            .filter(|(node, incident)| incident.len() == 1 && !terminal_set.contains(node))
            .map(|(_, incident)| incident[0])
            .collect();
        if removable.is_empty() {
            break;
        }
        for eid in removable {
            tree_edges.remove(&eid);
        }
    }

    let nodes: BTreeSet<NodeId> = tree_edges
        .iter()
        .flat_map(|&e| [graph.edges[e as usize].u, graph.edges[e as usize].v])
        .chain(terms.iter().copied())
        .collect();
    let cost = tree_edges.iter().map(|&e| view.edge_cost(e)).sum();
    Ok(SteinerTree {
        nodes,
        edges: tree_edges,
        cost,
    })
}

/// r_MCMI over an edge set: mean of (s_u + s_v) / (2 c_e). An edgeless
/// subgraph has an infinite ratio, which triggers the one-time bootstrap
/// admission in `expand_mcmi`.
pub fn avg_ratio(graph: &KnowledgeGraph, view: &WeightedView, edges: &BTreeSet<EdgeId>) -> f64 {
    if edges.is_empty() {
        return f64::INFINITY;
    }
    let total: f64 = edges
        .iter()
        .map(|&e| {
            let edge = &graph.edges[e as usize];
            (view.node_score(edge.u) + view.node_score(edge.v)) / (2.0 * view.edge_cost(e))
        })
        .sum();
    total / edges.len() as f64
}

/// Greedy influence-per-cost expansion. Each round scores every frontier
/// node by s_v over its cheapest connector edge and admits the best one if
/// it strictly beats the current average ratio; the ratio is recomputed
/// after every admission. An edgeless seed admits its best neighbor once
/// unconditionally so the ratio becomes finite.
pub fn expand_mcmi(
    graph: &KnowledgeGraph,
    view: &WeightedView,
    seed_nodes: &BTreeSet<NodeId>,
    seed_edges: &BTreeSet<EdgeId>,
) -> McmiSubgraph {
    let mut nodes = seed_nodes.clone();
    let mut edges = seed_edges.clone();
    let mut trace = Vec::new();
    let mut ratio = avg_ratio(graph, view, &edges);
    let mut bootstrapped = false;

    loop {
        // frontier: best (max ratio, min node id) candidate this round
        let mut best: Option<(f64, NodeId, EdgeId)> = None;
        for &u in &nodes {
            for &(v, eid) in graph.neighbors(u) {
                if nodes.contains(&v)
                    || !traversable(graph, eid)
                    || graph.nodes[v as usize].kind == NodeKind::Pseudo
                {
                    continue;
                }
                let candidate_ratio = view.node_score(v) / view.edge_cost(eid);
                let improves = match best {
                    None => true,
                    Some((br, bn, be)) => {
                        candidate_ratio > br
                            || (candidate_ratio == br && (v < bn || (v == bn && eid < be)))
                    }
                };
                if improves {
                    best = Some((candidate_ratio, v, eid));
                }
            }
        }
        let Some((candidate_ratio, node, edge)) = best else {
            break;
        };
        let bootstrap = ratio.is_infinite() && !bootstrapped;
        if !bootstrap && candidate_ratio <= ratio {
            break;
        }
        if bootstrap {
            bootstrapped = true;
        }
        trace.push(TraceStep {
            node,
            node_key: graph.nodes[node as usize].key.clone(),
            edge,
            ratio: candidate_ratio,
            threshold: ratio,
        });
        nodes.insert(node);
        edges.insert(edge);
        ratio = avg_ratio(graph, view, &edges);
    }

    McmiSubgraph { nodes, edges, trace }
}

/// Seeds the reasoning subgraph: Steiner tree over the distinct entity
/// endpoints of the mapped facts, unioned with the relation edges carrying
/// those facts.
pub fn seed_subgraph(
    graph: &KnowledgeGraph,
    view: &WeightedView,
    mapped_facts: &[FactId],
) -> Result<(BTreeSet<NodeId>, BTreeSet<EdgeId>)> {
    let mut terminals = BTreeSet::new();
    for &fid in mapped_facts {
        let fact = graph
            .facts
            .get(fid as usize)
            .ok_or_else(|| AgragError::IndexCorruption(format!("fact {fid} out of range")))?;
        for surface in [&fact.subject, &fact.object] {
            let node = graph.entity_node(surface).ok_or_else(|| {
                AgragError::IndexCorruption(format!("fact entity {surface} missing from graph"))
            })?;
            terminals.insert(node);
        }
    }
    let term_vec: Vec<NodeId> = terminals.iter().copied().collect();
    let tree = steiner_tree(graph, view, &term_vec)?;
    let mut nodes = tree.nodes;
    let mut edges = tree.edges;
    let wanted: BTreeSet<FactId> = mapped_facts.iter().copied().collect();
    for (eid, edge) in graph.edges.iter().enumerate() {
        if edge.kind == EdgeKind::Relation && edge.fact_ids.iter().any(|f| wanted.contains(f)) {
            edges.insert(eid as EdgeId);
            nodes.insert(edge.u);
            nodes.insert(edge.v);
        }
    }
    Ok((nodes, edges))
}

/// Renders the subgraph as the textual reasoning graph handed to the
/// answer prompt. Relation lines follow each backing fact's own direction;
/// structural edges render in (u, v) order.
pub fn serialize_subgraph(
    graph: &KnowledgeGraph,
    nodes: &BTreeSet<NodeId>,
    edges: &BTreeSet<EdgeId>,
) -> String {
    let mut out = String::from("Entities:\n");
    for &n in nodes {
        let node = &graph.nodes[n as usize];
        if node.kind == NodeKind::Entity {
            out.push_str(&format!("- {}\n", node.key));
        }
    }
    let mut passages = Vec::new();
    for &n in nodes {
        let node = &graph.nodes[n as usize];
        if node.kind == NodeKind::Passage {
            if let Some(chunk) = graph.chunk_by_id(&node.key) {
                passages.push(chunk.head());
            }
        }
    }
    out.push_str("Relations:\n");
    for &eid in edges {
        let edge = &graph.edges[eid as usize];
        match edge.kind {
            EdgeKind::Relation => {
                let mut lines: Vec<String> = edge
                    .fact_ids
                    .iter()
                    .map(|&fid| {
                        let f = graph.fact(fid);
                        format!("- {} —[{}]→ {}\n", f.subject, f.relation, f.object)
                    })
                    .collect();
                lines.dedup();
                for line in lines {
                    out.push_str(&line);
                }
            }
            EdgeKind::PseudoRelation => {}
            EdgeKind::Contains | EdgeKind::Synonym => {
                let name = |id: NodeId| {
                    let node = &graph.nodes[id as usize];
                    match node.kind {
                        NodeKind::Passage => graph
                            .chunk_by_id(&node.key)
                            .map(|c| c.head())
                            .unwrap_or_else(|| node.key.clone()),
                        _ => node.key.clone(),
                    }
                };
                out.push_str(&format!(
                    "- {} —[{}]→ {}\n",
                    name(edge.u),
                    edge.label,
                    name(edge.v)
                ));
            }
        }
    }
    if !passages.is_empty() {
        out.push_str("Passages:\n");
        for head in passages {
            out.push_str(&format!("- {head}\n"));
        }
    }
    out
}

/// Exhaustive Steiner oracle: minimum MST cost over every node subset
/// containing the terminals. Exponential; refuses graphs above the cap.
pub fn brute_force_steiner(
    graph: &KnowledgeGraph,
    view: &WeightedView,
    terminals: &[NodeId],
    node_cap: usize,
) -> Result<f64> {
    let usable: Vec<NodeId> = (0..graph.node_count() as NodeId)
        .filter(|&n| graph.nodes[n as usize].kind != NodeKind::Pseudo)
        .collect();
    if usable.len() > node_cap {
        return Err(AgragError::OracleSizeCap {
            nodes: usable.len(),
            cap: node_cap,
        });
    }
    let mut terms: Vec<NodeId> = terminals.to_vec();
    terms.sort_unstable();
    terms.dedup();
    if terms.len() <= 1 {
        return Ok(0.0);
    }
    let term_set: BTreeSet<NodeId> = terms.iter().copied().collect();
    let optional: Vec<NodeId> = usable
        .iter()
        .copied()
        .filter(|n| !term_set.contains(n))
        .collect();
    let mut best = f64::INFINITY;
    for mask in 0..(1u32 << optional.len()) {
        let mut subset: Vec<NodeId> = terms.clone();
        for (i, &n) in optional.iter().enumerate() {
            if mask & (1 << i) != 0 {
                subset.push(n);
            }
        }
        let index: HashMap<NodeId, usize> =
            subset.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut candidate_edges: Vec<(f64, usize, usize)> = Vec::new();
        for (eid, edge) in graph.edges.iter().enumerate() {
            if !traversable(graph, eid as EdgeId) {
                continue;
            }
            if let (Some(&a), Some(&b)) = (index.get(&edge.u), index.get(&edge.v)) {
                candidate_edges.push((view.edge_cost(eid as EdgeId), a, b));
            }
        }
        candidate_edges.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut dsu = Dsu::new(subset.len());
        let mut cost = 0.0;
        let mut joined = 0;
        for (w, a, b) in candidate_edges {
            if dsu.union(a, b) {
                cost += w;
                joined += 1;
            }
        }
        if joined == subset.len() - 1 && cost < best {
            best = cost;
        }
    }
    if best.is_infinite() {
        return Err(AgragError::UnreachableTerminal(
            "no connected subset spans the terminals".into(),
        ));
    }
    Ok(best)
}
