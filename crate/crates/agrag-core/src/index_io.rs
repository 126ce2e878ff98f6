//! Binary index persistence.
//!
//! Single self-describing container: magic, format version, config
//! fingerprint, counts, then node/edge/fact/chunk/embedding sections. All
//! integers fixed-width little-endian, embeddings as f32, and a trailing
//! SHA-256 checksum over everything before it. A JSON export exists for
//! inspection (`inspect` CLI).

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use crate::corpus::Chunk;
use crate::error::{AgragError, Result};
use crate::extraction::TripleFact;
use crate::graph::{Edge, EdgeKind, KnowledgeGraph, Node, NodeKind};

const MAGIC: &[u8; 8] = b"AGRAGIDX";
pub const FORMAT_VERSION: u32 = 1;

fn format_err(msg: impl Into<String>) -> AgragError {
    AgragError::IndexFormat(msg.into())
}

fn write_string(out: &mut Vec<u8>, s: &str) {
    out.write_u32::<LittleEndian>(s.len() as u32).unwrap();
    out.extend_from_slice(s.as_bytes());
}

fn write_vec_f32(out: &mut Vec<u8>, v: &[f32]) {
    out.write_u32::<LittleEndian>(v.len() as u32).unwrap();
    for &x in v {
        out.write_f32::<LittleEndian>(x).unwrap();
    }
}

fn write_opt_vec_f32(out: &mut Vec<u8>, v: &Option<Vec<f32>>) {
    match v {
        Some(v) => {
            out.push(1);
            write_vec_f32(out, v);
        }
        None => out.push(0),
    }
}

fn read_string(r: &mut Cursor<&[u8]>) -> Result<String> {
    let len = r
        .read_u32::<LittleEndian>()
        .map_err(|_| format_err("truncated string length"))? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|_| format_err("truncated string body"))?;
    String::from_utf8(buf).map_err(|_| format_err("non-utf8 string"))
}

fn read_vec_f32(r: &mut Cursor<&[u8]>) -> Result<Vec<f32>> {
    let len = r
        .read_u32::<LittleEndian>()
        .map_err(|_| format_err("truncated vector length"))? as usize;
    let mut v = Vec::with_capacity(len);
    for _ in 0..len {
        v.push(
            r.read_f32::<LittleEndian>()
                .map_err(|_| format_err("truncated vector body"))?,
        );
    }
    Ok(v)
}

fn read_opt_vec_f32(r: &mut Cursor<&[u8]>) -> Result<Option<Vec<f32>>> {
    match r.read_u8().map_err(|_| format_err("truncated option tag"))? {
        0 => Ok(None),
        1 => Ok(Some(read_vec_f32(r)?)),
        t => Err(format_err(format!("bad option tag {t}"))),
    }
}

fn node_kind_tag(kind: NodeKind) -> u8 {
    match kind {
        NodeKind::Entity => 0,
        NodeKind::Passage => 1,
        NodeKind::Pseudo => 2,
    }
}

fn node_kind_from(tag: u8) -> Result<NodeKind> {
    match tag {
        0 => Ok(NodeKind::Entity),
        1 => Ok(NodeKind::Passage),
        2 => Ok(NodeKind::Pseudo),
        t => Err(format_err(format!("bad node kind {t}"))),
    }
}

fn edge_kind_tag(kind: EdgeKind) -> u8 {
    match kind {
        EdgeKind::Relation => 0,
        EdgeKind::Contains => 1,
        EdgeKind::Synonym => 2,
        EdgeKind::PseudoRelation => 3,
    }
}

fn edge_kind_from(tag: u8) -> Result<EdgeKind> {
    match tag {
        0 => Ok(EdgeKind::Relation),
        1 => Ok(EdgeKind::Contains),
        2 => Ok(EdgeKind::Synonym),
        3 => Ok(EdgeKind::PseudoRelation),
        t => Err(format_err(format!("bad edge kind {t}"))),
    }
}

/// Serializes the graph to bytes. Deterministic: identical graphs produce
/// identical bytes.
pub fn to_bytes(graph: &KnowledgeGraph) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(FORMAT_VERSION).unwrap();
    write_string(&mut out, &graph.config_fingerprint);
    out.write_u32::<LittleEndian>(graph.embedding_dim as u32)
        .unwrap();
    out.write_u32::<LittleEndian>(graph.nodes.len() as u32).unwrap();
    out.write_u32::<LittleEndian>(graph.edges.len() as u32).unwrap();
    out.write_u32::<LittleEndian>(graph.facts.len() as u32).unwrap();
    out.write_u32::<LittleEndian>(graph.chunks.len() as u32).unwrap();

    for node in &graph.nodes {
        out.push(node_kind_tag(node.kind));
        write_string(&mut out, &node.key);
    }
    for edge in &graph.edges {
        out.write_u32::<LittleEndian>(edge.u).unwrap();
        out.write_u32::<LittleEndian>(edge.v).unwrap();
        out.push(edge_kind_tag(edge.kind));
        write_string(&mut out, &edge.label);
        out.write_u32::<LittleEndian>(edge.fact_ids.len() as u32)
            .unwrap();
        for &fid in &edge.fact_ids {
            out.write_u32::<LittleEndian>(fid).unwrap();
        }
        write_opt_vec_f32(&mut out, &edge.surrogate_embedding);
    }
    for fact in &graph.facts {
        write_string(&mut out, &fact.subject);
        write_string(&mut out, &fact.relation);
        write_string(&mut out, &fact.object);
        write_string(&mut out, &fact.source_chunk);
        write_opt_vec_f32(&mut out, &fact.embedding);
    }
    for chunk in &graph.chunks {
        write_string(&mut out, &chunk.id);
        write_string(&mut out, &chunk.text);
        write_string(&mut out, &chunk.source_doc);
        out.write_u64::<LittleEndian>(chunk.position as u64).unwrap();
        out.write_u32::<LittleEndian>(chunk.tokens.len() as u32)
            .unwrap();
        for token in &chunk.tokens {
            write_string(&mut out, token);
        }
    }
    out.write_u32::<LittleEndian>(graph.entity_embeddings.len() as u32)
        .unwrap();
    for v in &graph.entity_embeddings {
        write_vec_f32(&mut out, v);
    }
    out.write_u32::<LittleEndian>(graph.chunk_embeddings.len() as u32)
        .unwrap();
    for v in &graph.chunk_embeddings {
        write_vec_f32(&mut out, v);
    }

    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<KnowledgeGraph> {
    if bytes.len() < MAGIC.len() + 4 + 32 {
        return Err(format_err("file too short to be an index"));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(format_err("bad magic; not an agrag index"));
    }
    let digest = Sha256::digest(body);
    if digest.as_slice() != checksum {
        return Err(AgragError::IndexChecksum);
    }
    let mut r = Cursor::new(body);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).unwrap();
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|_| format_err("truncated header"))?;
    if version != FORMAT_VERSION {
        return Err(AgragError::IndexVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let fingerprint = read_string(&mut r)?;
    let embedding_dim = r
        .read_u32::<LittleEndian>()
        .map_err(|_| format_err("truncated header"))? as usize;
    let n_nodes = r.read_u32::<LittleEndian>().map_err(|_| format_err("truncated header"))?;
    let n_edges = r.read_u32::<LittleEndian>().map_err(|_| format_err("truncated header"))?;
    let n_facts = r.read_u32::<LittleEndian>().map_err(|_| format_err("truncated header"))?;
    let n_chunks = r.read_u32::<LittleEndian>().map_err(|_| format_err("truncated header"))?;

    let mut nodes = Vec::with_capacity(n_nodes as usize);
    for _ in 0..n_nodes {
        let kind = node_kind_from(r.read_u8().map_err(|_| format_err("truncated node"))?)?;
        let key = read_string(&mut r)?;
        nodes.push(Node { kind, key });
    }
    let mut edges = Vec::with_capacity(n_edges as usize);
    for _ in 0..n_edges {
        let u = r.read_u32::<LittleEndian>().map_err(|_| format_err("truncated edge"))?;
        let v = r.read_u32::<LittleEndian>().map_err(|_| format_err("truncated edge"))?;
        let kind = edge_kind_from(r.read_u8().map_err(|_| format_err("truncated edge"))?)?;
        let label = read_string(&mut r)?;
        let n_fids = r
            .read_u32::<LittleEndian>()
            .map_err(|_| format_err("truncated edge facts"))?;
        let mut fact_ids = Vec::with_capacity(n_fids as usize);
        for _ in 0..n_fids {
            fact_ids.push(
                r.read_u32::<LittleEndian>()
                    .map_err(|_| format_err("truncated edge facts"))?,
            );
        }
        let surrogate_embedding = read_opt_vec_f32(&mut r)?;
        edges.push(Edge {
            u,
            v,
            kind,
            label,
            fact_ids,
            surrogate_embedding,
        });
    }
    let mut facts = Vec::with_capacity(n_facts as usize);
    for _ in 0..n_facts {
        facts.push(TripleFact {
            subject: read_string(&mut r)?,
            relation: read_string(&mut r)?,
            object: read_string(&mut r)?,
            source_chunk: read_string(&mut r)?,
            embedding: read_opt_vec_f32(&mut r)?,
        });
    }
    let mut chunks = Vec::with_capacity(n_chunks as usize);
    for _ in 0..n_chunks {
        let id = read_string(&mut r)?;
        let text = read_string(&mut r)?;
        let source_doc = read_string(&mut r)?;
        let position = r
            .read_u64::<LittleEndian>()
            .map_err(|_| format_err("truncated chunk"))? as usize;
        let n_tokens = r
            .read_u32::<LittleEndian>()
            .map_err(|_| format_err("truncated chunk tokens"))?;
        let mut tokens = Vec::with_capacity(n_tokens as usize);
        for _ in 0..n_tokens {
            tokens.push(read_string(&mut r)?);
        }
        chunks.push(Chunk {
            id,
            text,
            tokens,
            source_doc,
            position,
        });
    }
    let n_ee = r
        .read_u32::<LittleEndian>()
        .map_err(|_| format_err("truncated embeddings"))?;
    let mut entity_embeddings = Vec::with_capacity(n_ee as usize);
    for _ in 0..n_ee {
        entity_embeddings.push(read_vec_f32(&mut r)?);
    }
    let n_ce = r
        .read_u32::<LittleEndian>()
        .map_err(|_| format_err("truncated embeddings"))?;
    let mut chunk_embeddings = Vec::with_capacity(n_ce as usize);
    for _ in 0..n_ce {
        chunk_embeddings.push(read_vec_f32(&mut r)?);
    }
    if r.position() != body.len() as u64 {
        return Err(format_err("trailing bytes after embeddings section"));
    }

    for edge in &edges {
        if edge.u as usize >= nodes.len() || edge.v as usize >= nodes.len() {
            return Err(AgragError::IndexCorruption("edge endpoint out of range".into()));
        }
        for &fid in &edge.fact_ids {
            if fid as usize >= facts.len() {
                return Err(AgragError::IndexCorruption("edge fact id out of range".into()));
            }
        }
    }

    Ok(KnowledgeGraph::from_parts(
        nodes,
        edges,
        facts,
        chunks,
        entity_embeddings,
        chunk_embeddings,
        embedding_dim,
        fingerprint,
    ))
}

pub fn save_index(graph: &KnowledgeGraph, path: &Path) -> Result<()> {
    let bytes = to_bytes(graph);
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<KnowledgeGraph> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes)
}

/// JSON export of the whole index, for the `inspect` CLI.
pub fn export_json(graph: &KnowledgeGraph) -> serde_json::Value {
    serde_json::json!({
        "format_version": FORMAT_VERSION,
        "config_fingerprint": graph.config_fingerprint,
        "embedding_dim": graph.embedding_dim,
        "counts": {
            "nodes": graph.nodes.len(),
            "edges": graph.edges.len(),
            "facts": graph.facts.len(),
            "chunks": graph.chunks.len(),
        },
        "nodes": graph.nodes,
        "edges": graph.edges.iter().map(|e| serde_json::json!({
            "u": e.u,
            "v": e.v,
            "kind": e.kind,
            "label": e.label,
            "fact_ids": e.fact_ids,
        })).collect::<Vec<_>>(),
        "facts": graph.facts.iter().map(|f| serde_json::json!({
            "subject": f.subject,
            "relation": f.relation,
            "object": f.object,
            "source_chunk": f.source_chunk,
        })).collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::split_corpus;
    use crate::extraction::Entity;
    use crate::graph::build_graph;
    use crate::providers::{MockEmbeddingProvider, UsageLog};

    fn sample_graph() -> KnowledgeGraph {
        let chunks = split_corpus(&[("d".into(), "kidney spread tumors".into())], 8, 0).unwrap();
        let entities = vec![vec![
            Entity { surface: "kidney".into() },
            Entity { surface: "tumors".into() },
        ]];
        let triples = vec![vec![TripleFact {
            subject: "kidney".into(),
            relation: "spread".into(),
            object: "tumors".into(),
            source_chunk: chunks[0].id.clone(),
            embedding: None,
        }]];
        let provider = MockEmbeddingProvider::new(8, 1, UsageLog::new());
        build_graph(&chunks, &entities, &triples, &provider, 0.999, "fp").unwrap()
    }

    #[test]
    fn round_trip_structural_equality() {
        let g = sample_graph();
        let loaded = from_bytes(&to_bytes(&g)).unwrap();
        assert_eq!(g, loaded);
    }

    #[test]
    fn serialization_deterministic() {
        let g = sample_graph();
        assert_eq!(to_bytes(&g), to_bytes(&g));
    }

    #[test]
    fn empty_file_is_format_error() {
        match from_bytes(&[]) {
            Err(AgragError::IndexFormat(_)) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn corrupt_byte_is_checksum_error() {
        let mut bytes = to_bytes(&sample_graph());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        match from_bytes(&bytes) {
            Err(AgragError::IndexChecksum) => {}
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_error() {
        let bytes = to_bytes(&sample_graph());
        let truncated = &bytes[..bytes.len() - 40];
        assert!(from_bytes(truncated).is_err());
    }

    #[test]
    fn version_mismatch_is_distinct_error() {
        let mut bytes = to_bytes(&sample_graph());
        bytes[8] = 99; // version field
        let body_len = bytes.len() - 32;
        let digest = Sha256::digest(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&digest);
        match from_bytes(&bytes) {
            Err(AgragError::IndexVersion { found: 99, .. }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }
}
