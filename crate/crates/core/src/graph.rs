//! Triplet store: loading, incidence indexing, linearization and
//! similarity-ranked connected subgraph selection.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Separator between the fields of a linearized triplet.
pub const FIELD_DELIMITER: &str = " -> ";

/// Canonical form of an entity or relation label: NFC, surrounding whitespace removed.
pub fn normalize_label(label: &str) -> String {
    label.nfc().collect::<String>().trim().to_string()
}

/// A single `(head, relation, tail)` fact.
///
/// Fields are stored normalized and are guaranteed to be non-empty, free of
/// tabs and newlines, and unable to introduce a stray `->` delimiter when
/// the triplet is linearized.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "(String, String, String)", into = "(String, String, String)")]
pub struct Triplet {
    head: String,
    relation: String,
    tail: String,
}

impl Triplet {
    pub fn new(head: &str, relation: &str, tail: &str) -> Result<Self> {
        Ok(Self {
            head: check_field("head", head)?,
            relation: check_field("relation", relation)?,
            tail: check_field("tail", tail)?,
        })
    }

    pub fn head(&self) -> &str {
        &self.head
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn tail(&self) -> &str {
        &self.tail
    }

    pub fn involves(&self, entity: &str) -> bool {
        self.head == entity || self.tail == entity
    }

    pub fn is_self_loop(&self) -> bool {
        self.head == self.tail
    }

    /// `head -> relation -> tail`
    pub fn linearize(&self) -> String {
        format!(
            "{}{FIELD_DELIMITER}{}{FIELD_DELIMITER}{}",
            self.head, self.relation, self.tail
        )
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

impl TryFrom<(String, String, String)> for Triplet {
    type Error = Error;

    fn try_from((h, r, t): (String, String, String)) -> Result<Self> {
        Triplet::new(&h, &r, &t)
    }
}

impl From<Triplet> for (String, String, String) {
    fn from(t: Triplet) -> Self {
        (t.head, t.relation, t.tail)
    }
}

fn check_field(name: &str, raw: &str) -> Result<String> {
    let value = normalize_label(raw);
    if value.is_empty() {
        return Err(Error::InvalidTriplet(format!("{name} is empty")));
    }
    if value.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidTriplet(format!(
            "{name} `{value}` contains a tab or line break"
        )));
    }
    // Padding catches fields that begin or end with a bare `->` as well.
    if format!(" {value} ").contains(FIELD_DELIMITER) {
        return Err(Error::InvalidTriplet(format!(
            "{name} `{value}` contains the `->` delimiter"
        )));
    }
    Ok(value)
}

/// Immutable, deduplicated triplet set with an entity incidence index.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    triplets: Vec<Triplet>,
    positions: HashMap<Triplet, usize>,
    incidence: HashMap<String, Vec<usize>>,
}

impl KnowledgeGraph {
    /// Builds a graph from triplets, keeping the first occurrence of duplicates.
    pub fn from_triplets<I>(triplets: I) -> Self
    where
        I: IntoIterator<Item = Triplet>,
    {
        let mut graph = Self::default();
        for t in triplets {
            graph.insert(t);
        }
        graph
    }

    fn insert(&mut self, t: Triplet) {
        if self.positions.contains_key(&t) {
            return;
        }
        let idx = self.triplets.len();
        self.incidence.entry(t.head.clone()).or_default().push(idx);
        if !t.is_self_loop() {
            self.incidence.entry(t.tail.clone()).or_default().push(idx);
        }
        self.positions.insert(t.clone(), idx);
        self.triplets.push(t);
    }

    /// Reads the tab-separated triple format: one `head\trelation\ttail` per
    /// line, blank lines and lines starting with `#` skipped.
    pub fn load_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut graph = Self::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let t = Triplet::new(fields[0], fields[1], fields[2]).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            graph.insert(t);
        }
        Ok(graph)
    }

    pub fn from_tsv_str(text: &str) -> Result<Self> {
        Self::load_tsv(text.as_bytes())
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::load_tsv(std::io::BufReader::new(file))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triplets {
            out.push_str(&format!("{}\t{}\t{}\n", t.head, t.relation, t.tail));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn get(&self, idx: usize) -> Option<&Triplet> {
        self.triplets.get(idx)
    }

    pub fn index_of(&self, t: &Triplet) -> Option<usize> {
        self.positions.get(t).copied()
    }

    pub fn contains(&self, t: &Triplet) -> bool {
        self.positions.contains_key(t)
    }

    pub fn contains_entity(&self, entity: &str) -> bool {
        self.incidence.contains_key(&normalize_label(entity))
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.incidence.keys().map(String::as_str)
    }

    /// Indices of the triplets incident to `entity`, ascending.
    pub fn incident_indices(&self, entity: &str) -> &[usize] {
        self.incidence
            .get(&normalize_label(entity))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// All triplets with `entity` as head or tail, in insertion order.
    pub fn neighbors(&self, entity: &str) -> Vec<&Triplet> {
        self.incident_indices(entity)
            .iter()
            .map(|&i| &self.triplets[i])
            .collect()
    }

    /// `[ h1 -> r1 -> t1 | h2 -> r2 -> t2 | ... ]`
    pub fn linearize(&self) -> Result<String> {
        if self.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let body: Vec<String> = self.triplets.iter().map(Triplet::linearize).collect();
        Ok(format!("[ {} ]", body.join(" | ")))
    }

    /// Subgraph holding the given triplet indices, in the order of this graph.
    pub fn subgraph(&self, indices: impl IntoIterator<Item = usize>) -> KnowledgeGraph {
        let sorted: BTreeSet<usize> = indices.into_iter().collect();
        KnowledgeGraph::from_triplets(sorted.into_iter().map(|i| self.triplets[i].clone()))
    }
}

/// Parses the output of [`KnowledgeGraph::linearize`] back into triplets.
pub fn parse_linearized(text: &str) -> Result<Vec<Triplet>> {
    let inner = text
        .trim()
        .strip_prefix("[ ")
        .and_then(|s| s.strip_suffix(" ]"))
        .ok_or_else(|| Error::InvalidArgument("linearized graph must be wrapped in `[ ... ]`".into()))?;
    inner
        .split(" | ")
        .map(|part| {
            let fields: Vec<&str> = part.split(FIELD_DELIMITER).collect();
            match fields.as_slice() {
                [h, r, t] => Triplet::new(h, r, t),
                _ => Err(Error::InvalidTriplet(format!("`{part}` is not a triplet"))),
            }
        })
        .collect()
}

/// Question/triplet similarity used to rank triplets before selection.
pub trait SimilarityScorer {
    fn score(&self, triplet: &Triplet, question: &str) -> f64;
}

impl<F> SimilarityScorer for F
where
    F: Fn(&Triplet, &str) -> f64,
{
    fn score(&self, triplet: &Triplet, question: &str) -> f64 {
        self(triplet, question)
    }
}

/// Jaccard overlap between the lower-cased word sets of the question and of
/// the `(head, relation, tail)` text. Stands in for an embedding model.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordOverlapScorer;

impl WordOverlapScorer {
    fn words(text: &str) -> HashSet<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect()
    }
}

impl SimilarityScorer for WordOverlapScorer {
    fn score(&self, triplet: &Triplet, question: &str) -> f64 {
        let q = Self::words(question);
        let t = Self::words(&format!("({}, {}, {})", triplet.head, triplet.relation, triplet.tail));
        let union = q.union(&t).count();
        if union == 0 {
            return 0.0;
        }
        q.intersection(&t).count() as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriplet {
    pub triplet: Triplet,
    pub score: f64,
}

/// Scores every triplet and sorts by descending score. Ties keep graph order.
pub fn rank_triplets(
    graph: &KnowledgeGraph,
    scorer: &dyn SimilarityScorer,
    question: &str,
) -> Result<Vec<ScoredTriplet>> {
    let mut ranked = Vec::with_capacity(graph.len());
    for t in graph.triplets() {
        let score = scorer.score(t, question);
        if !score.is_finite() {
            return Err(Error::InvalidArgument(format!("similarity score for {t} is not finite")));
        }
        ranked.push(ScoredTriplet { triplet: t.clone(), score });
    }
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(ranked)
}

/// Breadth-first shortest-path forest over undirected incidence, rooted at
/// the query entities. Neighbours are visited in ascending triplet index.
struct PathForest<'g> {
    graph: &'g KnowledgeGraph,
    depth: HashMap<&'g str, usize>,
    parent: HashMap<&'g str, usize>,
}

impl<'g> PathForest<'g> {
    fn new(graph: &'g KnowledgeGraph, roots: &[String]) -> Self {
        let mut depth = HashMap::new();
        let mut parent = HashMap::new();
        let mut queue = VecDeque::new();
        for root in roots {
            if let Some((key, _)) = graph.incidence.get_key_value(root) {
                if depth.insert(key.as_str(), 0).is_none() {
                    queue.push_back(key.as_str());
                }
            }
        }
        while let Some(entity) = queue.pop_front() {
            let d = depth[entity];
            for &idx in &graph.incidence[entity] {
                let t = &graph.triplets[idx];
                let other = if t.head == entity { t.tail.as_str() } else { t.head.as_str() };
                if !depth.contains_key(other) {
                    depth.insert(other, d + 1);
                    parent.insert(other, idx);
                    queue.push_back(other);
                }
            }
        }
        Self { graph, depth, parent }
    }

    /// Triplets linking the closer endpoint of `t` back to a root, or `None`
    /// when `t` is not connected to any root.
    fn path_to(&self, t: &Triplet) -> Option<Vec<usize>> {
        let endpoint = match (self.depth.get(t.head()), self.depth.get(t.tail())) {
            (Some(h), Some(tl)) => {
                if h <= tl {
                    t.head()
                } else {
                    t.tail()
                }
            }
            (Some(_), None) => t.head(),
            (None, Some(_)) => t.tail(),
            (None, None) => return None,
        };
        let mut path = Vec::new();
        let mut entity = endpoint;
        while let Some(&idx) = self.parent.get(entity) {
            path.push(idx);
            let step = &self.graph.triplets[idx];
            entity = if step.head == entity { step.tail.as_str() } else { step.head.as_str() };
        }
        Some(path)
    }
}

/// Greedy connected top-k selection.
///
/// Triplets are taken in descending similarity order. Each taken triplet
/// brings along the shortest path connecting it to a query entity, so the
/// result stays connected. Selection stops once the result holds at least
/// `k` triplets; the last path may push it past `k`. Triplets unreachable
/// from every query entity are never selected.
pub fn select_topk_connected(
    graph: &KnowledgeGraph,
    query_entities: &[String],
    scorer: &dyn SimilarityScorer,
    question: &str,
    k: usize,
) -> Result<KnowledgeGraph> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let roots: Vec<String> = query_entities.iter().map(|e| normalize_label(e)).collect();
    if let Some(missing) = roots.iter().find(|e| !graph.incidence.contains_key(*e)) {
        return Err(Error::UnknownEntity(missing.clone()));
    }
    let forest = PathForest::new(graph, &roots);
    let ranked = rank_triplets(graph, scorer, question)?;

    let mut selected = BTreeSet::new();
    for entry in &ranked {
        if selected.len() >= k {
            break;
        }
        let idx = graph.positions[&entry.triplet];
        if selected.contains(&idx) {
            continue;
        }
        let Some(path) = forest.path_to(&entry.triplet) else {
            continue;
        };
        selected.extend(path);
        selected.insert(idx);
    }
    Ok(graph.subgraph(selected))
}
