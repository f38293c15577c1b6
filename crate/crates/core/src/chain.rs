//! Query-centric subgraph maintenance and well-formed chain validation.

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize_label, KnowledgeGraph, Triplet};

/// The set of triplets eligible as the next reasoning step.
///
/// Starts as every triplet touching a query entity and grows by the full
/// incidence of both endpoints of each chosen step. Values are cheap to
/// clone; the source graph is shared.
#[derive(Debug, Clone)]
pub struct QuerySubgraph {
    graph: Arc<KnowledgeGraph>,
    members: BTreeSet<usize>,
    visited: BTreeSet<String>,
    isolated: Vec<String>,
}

impl PartialEq for QuerySubgraph {
    fn eq(&self, other: &Self) -> bool {
        self.members == other.members && self.visited == other.visited
    }
}

impl QuerySubgraph {
    /// Union of the incidence sets of all query entities. Entities with no
    /// incident triplet are kept as visited and reported through
    /// [`QuerySubgraph::isolated_query_entities`].
    pub fn init(graph: Arc<KnowledgeGraph>, query_entities: &[String]) -> Result<Self> {
        if query_entities.is_empty() {
            return Err(Error::InvalidArgument("at least one query entity is required".into()));
        }
        let mut members = BTreeSet::new();
        let mut visited = BTreeSet::new();
        let mut isolated = Vec::new();
        for raw in query_entities {
            let entity = normalize_label(raw);
            let incident = graph.incident_indices(&entity);
            if incident.is_empty() {
                log::warn!("query entity `{entity}` has no incident triplets");
                isolated.push(entity.clone());
            }
            members.extend(incident.iter().copied());
            visited.insert(entity);
        }
        Ok(Self { graph, members, visited, isolated })
    }

    /// Adds every source triplet incident to either endpoint of `chosen`.
    pub fn expand(&self, chosen: &Triplet) -> Result<Self> {
        let idx = self
            .graph
            .index_of(chosen)
            .filter(|i| self.members.contains(i))
            .ok_or_else(|| {
                Error::Contract(format!("{chosen} is not in the query-centric subgraph"))
            })?;
        let mut next = self.clone();
        let t = &self.graph.triplets()[idx];
        for entity in [t.head(), t.tail()] {
            if next.visited.insert(entity.to_string()) {
                next.members.extend(self.graph.incident_indices(entity).iter().copied());
            }
        }
        Ok(next)
    }

    pub fn graph(&self) -> &Arc<KnowledgeGraph> {
        &self.graph
    }

    /// Member triplet indices into the source graph, ascending.
    pub fn indices(&self) -> &BTreeSet<usize> {
        &self.members
    }

    pub fn triplets(&self) -> Vec<Triplet> {
        self.members.iter().map(|&i| self.graph.triplets()[i].clone()).collect()
    }

    pub fn contains(&self, t: &Triplet) -> bool {
        self.graph.index_of(t).is_some_and(|i| self.members.contains(&i))
    }

    pub fn visited_entities(&self) -> &BTreeSet<String> {
        &self.visited
    }

    pub fn isolated_query_entities(&self) -> &[String] {
        &self.isolated
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Chain {
    pub steps: Vec<Triplet>,
}

impl Chain {
    pub fn new(steps: Vec<Triplet>) -> Self {
        Self { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, t: Triplet) {
        self.steps.push(t);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Property {
    /// The step is not a fact of the graph.
    #[serde(rename = "PROPERTY_1")]
    InGraph,
    /// Neither endpoint was a query entity or an endpoint of an earlier step.
    #[serde(rename = "PROPERTY_2")]
    Connected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based step number.
    pub step: usize,
    pub property: Property,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub well_formed: bool,
    pub violations: Vec<Violation>,
    /// Steps (1-based) repeating an earlier step. Informational only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub repeated_steps: Vec<usize>,
}

impl ValidationReport {
    /// Number of distinct steps with at least one violation.
    pub fn flagged_steps(&self) -> usize {
        self.violations.iter().map(|v| v.step).collect::<HashSet<_>>().len()
    }
}

pub fn validate_chain(
    chain: &Chain,
    graph: &KnowledgeGraph,
    query_entities: &[String],
) -> ValidationReport {
    let mut visited: HashSet<String> = query_entities.iter().map(|e| normalize_label(e)).collect();
    let mut seen = HashSet::new();
    let mut report = ValidationReport::default();
    for (i, t) in chain.steps.iter().enumerate() {
        let step = i + 1;
        if !graph.contains(t) {
            report.violations.push(Violation { step, property: Property::InGraph });
        }
        if !visited.contains(t.head()) && !visited.contains(t.tail()) {
            report.violations.push(Violation { step, property: Property::Connected });
        }
        if !seen.insert(t) {
            report.repeated_steps.push(step);
        }
        visited.insert(t.head().to_string());
        visited.insert(t.tail().to_string());
    }
    report.well_formed = report.violations.is_empty();
    report
}
