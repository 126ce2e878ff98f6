//! Graph-based retrieval-augmented generation engine.
//!
//! Indexing turns a text corpus into a knowledge graph: statistics-scored
//! n-gram entities, LLM-extracted relation triples, passage nodes wired by
//! containment, synonym edges above an embedding threshold, and a pseudo
//! hub keeping the graph connected. Querying weights that graph per query
//! with personalized PageRank node scores and semantic edge costs, seeds a
//! reasoning subgraph with a 2-approximate Steiner tree over the mapped
//! facts, grows it greedily by influence-per-cost, and fuses the result
//! with hybrid BM25 + dense chunk retrieval before answer generation.

pub mod config;
pub mod corpus;
pub mod error;
pub mod extraction;
pub mod graph;
pub mod index_io;
pub mod mcmi;
pub mod pipeline;
pub mod providers;
pub mod retrieval;
pub mod vecmath;
pub mod weighting;

pub use config::{McmiMode, PipelineConfig};
pub use error::{AgragError, Result};
pub use graph::KnowledgeGraph;
pub use pipeline::{index_command, inspect_command, query_command, IndexReport, QueryResult};
