//! Token-at-a-time phase machine for hosts that run their own sampling loop.
//!
//! The host feeds every token it emits; the stream answers with the set of
//! tokens allowed next whenever a triplet is open, and grows the subgraph
//! when one closes. It applies exactly the rules the beam decoder uses.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::search::{SerializedGraph, StepConstraint};
use crate::chain::{Chain, QuerySubgraph};
use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triplet};
use crate::trie::ValidSet;
use crate::vocab::{SpecialTokens, TokenId, TokenSeq, TripletEncoder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Unconstrained,
    Constrained,
    Closed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub phase: Phase,
    pub triplet_completed: Option<Triplet>,
    /// Tokens allowed next; present only in the constrained phase.
    pub allowed: Option<ValidSet>,
}

#[derive(Debug, Clone)]
pub struct ConstrainedStream {
    serialized: Arc<SerializedGraph>,
    specials: SpecialTokens,
    subgraph: QuerySubgraph,
    constraint: StepConstraint,
    phase: Phase,
    step_prefix: TokenSeq,
    chain: Chain,
}

impl ConstrainedStream {
    pub fn new(
        graph: Arc<KnowledgeGraph>,
        query_entities: &[String],
        encoder: &(impl TripletEncoder + ?Sized),
    ) -> Result<Self> {
        let specials = encoder.specials();
        specials.validate(encoder.vocab_size())?;
        let serialized = Arc::new(SerializedGraph::new(&graph, encoder)?);
        let subgraph = QuerySubgraph::init(graph, query_entities)?;
        let constraint = StepConstraint::new(&subgraph, &serialized)?;
        Ok(Self {
            serialized,
            specials,
            subgraph,
            constraint,
            phase: Phase::Unconstrained,
            step_prefix: Vec::new(),
            chain: Chain::default(),
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn subgraph(&self) -> &QuerySubgraph {
        &self.subgraph
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    /// Tokens of the open triplet so far, starting with the open marker.
    pub fn step_prefix(&self) -> &[TokenId] {
        &self.step_prefix
    }

    pub fn allowed(&self) -> Option<ValidSet> {
        (self.phase == Phase::Constrained).then(|| self.constraint.valid_next(&self.step_prefix))
    }

    /// Advances the machine by one emitted token. On error the state is
    /// left unchanged.
    pub fn feed(&mut self, token: TokenId) -> Result<StepReport> {
        if token as usize >= self.serialized.vocab_size() {
            return Err(Error::TokenOutOfRange { id: token, size: self.serialized.vocab_size() });
        }
        match self.phase {
            Phase::Closed => Err(Error::Contract("stream is closed".into())),
            Phase::Unconstrained => {
                if token == self.specials.t_bos {
                    let prefix = vec![token];
                    let allowed = self.constraint.valid_next(&prefix);
                    if allowed.is_empty() {
                        return Err(Error::DeadEnd);
                    }
                    self.step_prefix = prefix;
                    self.phase = Phase::Constrained;
                    return Ok(self.report(None, Some(allowed)));
                }
                if token == self.specials.eos {
                    self.phase = Phase::Closed;
                }
                Ok(self.report(None, None))
            }
            Phase::Constrained => {
                let valid = self.constraint.valid_next(&self.step_prefix);
                if !valid.contains(token) {
                    return Err(Error::Contract(format!(
                        "token {token} is not allowed after {:?}",
                        self.step_prefix
                    )));
                }
                if token != self.specials.t_eos {
                    self.step_prefix.push(token);
                    let allowed = self.constraint.valid_next(&self.step_prefix);
                    return Ok(self.report(None, Some(allowed)));
                }
                let mut full = self.step_prefix.clone();
                full.push(token);
                let idx = self
                    .constraint
                    .triplet_index(&full)
                    .ok_or_else(|| Error::Contract("completed path is not a subgraph triplet".into()))?;
                let triplet = self.subgraph.graph().triplets()[idx].clone();
                let subgraph = self.subgraph.expand(&triplet)?;
                let constraint = StepConstraint::new(&subgraph, &self.serialized)?;
                self.subgraph = subgraph;
                self.constraint = constraint;
                self.chain.push(triplet.clone());
                self.step_prefix.clear();
                self.phase = Phase::Unconstrained;
                Ok(self.report(Some(triplet), None))
            }
        }
    }

    fn report(&self, triplet_completed: Option<Triplet>, allowed: Option<ValidSet>) -> StepReport {
        StepReport { phase: self.phase, triplet_completed, allowed }
    }
}
