//! JSON Lines QA datasets.
//!
//! One object per line:
//!
//! ```json
//! {"id": "q1", "question": "...", "query_entities": ["A"], "answers": ["C"],
//!  "graph": [["A", "r1", "B"], ["B", "r2", "C"]], "gold_chain": [["A", "r1", "B"]]}
//! ```
//!
//! `graph` may instead be a string naming a TSV file, resolved relative to
//! the dataset file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triplet};

#[derive(Debug, Clone)]
pub struct QaInstance {
    pub id: String,
    pub question: String,
    pub query_entities: Vec<String>,
    pub answers: Vec<String>,
    pub graph: Arc<KnowledgeGraph>,
    pub gold_chain: Option<Vec<Triplet>>,
}

/// One dataset line: a usable instance or the reason it was rejected.
#[derive(Debug)]
pub enum DatasetEntry {
    Instance(QaInstance),
    Invalid { id: String, line: usize, error: Error },
}

impl DatasetEntry {
    pub fn id(&self) -> &str {
        match self {
            DatasetEntry::Instance(inst) => &inst.id,
            DatasetEntry::Invalid { id, .. } => id,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GraphSource {
    Inline(Vec<Triplet>),
    File(PathBuf),
}

#[derive(Deserialize)]
struct RawInstance {
    id: String,
    question: String,
    query_entities: Vec<String>,
    answers: Vec<String>,
    graph: GraphSource,
    #[serde(default)]
    gold_chain: Option<Vec<Triplet>>,
}

#[derive(Deserialize)]
struct IdOnly {
    id: String,
}

/// Parses dataset text. Lines that fail become [`DatasetEntry::Invalid`];
/// a dataset with no entries at all is an error.
pub fn parse_dataset(text: &str, base_dir: &Path) -> Result<Vec<DatasetEntry>> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match parse_instance(line, base_dir) {
            Ok(inst) => entries.push(DatasetEntry::Instance(inst)),
            Err(error) => {
                let id = serde_json::from_str::<IdOnly>(line)
                    .map(|r| r.id)
                    .unwrap_or_else(|_| format!("line-{line_no}"));
                entries.push(DatasetEntry::Invalid { id, line: line_no, error });
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::Dataset("dataset has no instances".into()));
    }
    Ok(entries)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_dataset(&text, base)
}

fn parse_instance(line: &str, base_dir: &Path) -> Result<QaInstance> {
    let raw: RawInstance = serde_json::from_str(line)?;
    if raw.question.trim().is_empty() {
        return Err(Error::Dataset(format!("{}: question is empty", raw.id)));
    }
    if raw.answers.is_empty() {
        return Err(Error::Dataset(format!("{}: no gold answers", raw.id)));
    }
    if raw.query_entities.is_empty() {
        return Err(Error::Dataset(format!("{}: no query entities", raw.id)));
    }
    let graph = match raw.graph {
        GraphSource::Inline(triplets) => KnowledgeGraph::from_triplets(triplets),
        GraphSource::File(rel) => KnowledgeGraph::load_path(base_dir.join(rel))?,
    };
    if graph.is_empty() {
        return Err(Error::EmptyGraph);
    }
    Ok(QaInstance {
        id: raw.id,
        question: raw.question,
        query_entities: raw.query_entities,
        answers: raw.answers,
        graph: Arc::new(graph),
        gold_chain: raw.gold_chain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"id":"q1","question":"What does A lead to?","query_entities":["A"],"answers":["C"],"graph":[["A","r1","B"],["B","r2","C"]],"gold_chain":[["A","r1","B"],["B","r2","C"]]}"#;

    #[test]
    fn inline_graph() {
        let entries = parse_dataset(LINE, Path::new(".")).unwrap();
        let DatasetEntry::Instance(inst) = &entries[0] else { panic!("expected instance") };
        assert_eq!(inst.graph.len(), 2);
        assert_eq!(inst.gold_chain.as_ref().unwrap().len(), 2);
    }

    #[test]
    fn file_graph_relative_to_dataset() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("g.tsv"), "A\tr1\tB\n").unwrap();
        let line = r#"{"id":"q2","question":"q","query_entities":["A"],"answers":["B"],"graph":"g.tsv"}"#;
        std::fs::write(dir.path().join("d.jsonl"), line).unwrap();
        let entries = load_dataset(dir.path().join("d.jsonl")).unwrap();
        let DatasetEntry::Instance(inst) = &entries[0] else { panic!("expected instance") };
        assert!(inst.gold_chain.is_none());
        assert_eq!(inst.graph.len(), 1);
    }

    #[test]
    fn bad_line_is_isolated() {
        let bad = r#"{"id":"q9","question":"q","query_entities":["A"],"answers":["B"],"graph":[["A","->","B"]]}"#;
        let text = format!("{LINE}\n{bad}\nnot json\n");
        let entries = parse_dataset(&text, Path::new(".")).unwrap();
        assert_eq!(entries.len(), 3);
        assert!(matches!(entries[1], DatasetEntry::Invalid { line: 2, .. }));
        assert_eq!(entries[1].id(), "q9");
        assert_eq!(entries[2].id(), "line-3");
    }

    #[test]
    fn empty_dataset_is_error() {
        assert!(matches!(parse_dataset("\n\n", Path::new(".")), Err(Error::Dataset(_))));
    }

    #[test]
    fn missing_answers_rejected() {
        let line = r#"{"id":"q3","question":"q","query_entities":["A"],"answers":[],"graph":[["A","r","B"]]}"#;
        let entries = parse_dataset(line, Path::new(".")).unwrap();
        assert!(matches!(entries[0], DatasetEntry::Invalid { .. }));
    }
}
