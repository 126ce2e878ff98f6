//! Prompt templates for relation extraction, triple filtering, and answer
//! generation, plus the parsers for their structured responses. The
//! templates use explicit section markers so both real models and the
//! deterministic mock can consume them.

use serde::Deserialize;

pub const RELATION_SYSTEM: &str = "You are a relation extractor. Given a list of entities and a \
text passage, detect relations between the listed entities that the passage supports. Respond \
with only a JSON array of objects with keys \"subject\", \"relation\", \"object\". Subject and \
object must be copied verbatim from the entity list.";

pub const FILTER_SYSTEM: &str = "You are a fact filter. Given a query and a numbered list of \
candidate facts, select the facts that are relevant to answering the query. Respond with only a \
JSON array of the selected fact indices.";

pub const ANSWER_SYSTEM: &str = "You are a question answering assistant. Answer the query using \
the reasoning graph and the retrieved text chunks provided.";

pub const TEXT_OPEN: &str = "<<<";
pub const TEXT_CLOSE: &str = ">>>";

pub fn relation_user(entities: &[String], chunk_text: &str) -> String {
    let list = serde_json::to_string(entities).expect("entity list serializes");
    format!("Entities: {list}\nText:\n{TEXT_OPEN}\n{chunk_text}\n{TEXT_CLOSE}")
}

pub fn filter_user(query: &str, facts: &[String]) -> String {
    let mut out = format!("Query: {query}\nFacts:\n");
    for (i, fact) in facts.iter().enumerate() {
        out.push_str(&format!("{i}. {fact}\n"));
    }
    out
}

pub fn answer_user(query: &str, graph_string: &str, chunks: &[String]) -> String {
    let mut out = format!("Query: {query}\nGraph:\n{TEXT_OPEN}\n{graph_string}\n{TEXT_CLOSE}\nChunks:\n");
    for chunk in chunks {
        out.push_str(&format!("{TEXT_OPEN}\n{chunk}\n{TEXT_CLOSE}\n"));
    }
    out
}

#[derive(Debug, Clone, Deserialize)]
pub struct RawTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

/// Parses a relation-extraction response. Tolerates a JSON array embedded
/// in surrounding prose by slicing from the first '[' to the last ']'.
pub fn parse_triples(response: &str) -> Option<Vec<RawTriple>> {
    let json = extract_json_array(response)?;
    serde_json::from_str(json).ok()
}

/// Parses a filter response into fact indices.
pub fn parse_indices(response: &str) -> Option<Vec<usize>> {
    let json = extract_json_array(response)?;
    serde_json::from_str(json).ok()
}

fn extract_json_array(response: &str) -> Option<&str> {
    let start = response.find('[')?;
    let end = response.rfind(']')?;
    if end < start {
        return None;
    }
    Some(&response[start..=end])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_triples_with_prose() {
        let triples =
            parse_triples("Sure: [{\"subject\":\"a\",\"relation\":\"r\",\"object\":\"b\"}] done")
                .unwrap();
        assert_eq!(triples.len(), 1);
        assert_eq!(triples[0].relation, "r");
    }

    #[test]
    fn parse_triples_malformed() {
        assert!(parse_triples("I think the relations are {").is_none());
        assert!(parse_triples("][").is_none());
    }

    #[test]
    fn parse_indices_roundtrip() {
        assert_eq!(parse_indices("[0, 2]").unwrap(), vec![0, 2]);
        assert_eq!(parse_indices("[]").unwrap(), Vec::<usize>::new());
    }
}
