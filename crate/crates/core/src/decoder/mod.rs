//! Graph-constrained decoding.
//!
//! Generation alternates between two phases. In the unconstrained phase the
//! model writes freely (greedy argmax) until it emits the triplet-open
//! marker, which hands control to the constrained phase, or end-of-sequence.
//! In the constrained phase every token is masked to the trie of the
//! candidate's query-centric subgraph until the triplet-close marker.
//!
//! [`dog_decode`] wraps this in a triplet-level beam: each step, every live
//! candidate proposes `beam_size` triplets through a token-level search,
//! successors are ranked by chain score (sum of triplet log-probabilities),
//! and the best `beam_size` survive.

pub mod scorer;
pub mod search;
pub mod stream;

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chain::{Chain, QuerySubgraph};
use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triplet};
use crate::trie::ValidSet;
use crate::vocab::{SpecialTokens, TokenId, TokenSeq, TripletEncoder};

pub use scorer::{LmScorer, RandomScorer, RuleSpec, ScriptedScorer, TableScorer, TableSpec};
pub use search::{
    generate_triplet, run_closing, run_unconstrained, SerializedGraph, StepConstraint, Terminator,
    TokenSearch, TripletProposal, UnconstrainedSpan,
};
pub use stream::{ConstrainedStream, Phase, StepReport};

pub const DEFAULT_MAX_UNCONSTRAINED_TOKENS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub max_steps: usize,
    pub max_unconstrained_tokens: usize,
    /// Recorded for reproducibility; the engine itself is deterministic and
    /// only seeded scorers consume it.
    pub seed: u64,
    #[serde(default)]
    pub token_search: TokenSearch,
    /// Divide each triplet score by its token count.
    #[serde(default)]
    pub length_normalize: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam_size: 1,
            max_steps: 4,
            max_unconstrained_tokens: DEFAULT_MAX_UNCONSTRAINED_TOKENS,
            seed: 0,
            token_search: TokenSearch::Beam,
            length_normalize: false,
        }
    }
}

impl DecodeConfig {
    pub fn new(beam_size: usize, max_steps: usize) -> Result<Self> {
        let config = Self { beam_size, max_steps, ..Self::default() };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::InvalidArgument("beam size must be at least 1".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max steps must be at least 1".into()));
        }
        if self.max_unconstrained_tokens == 0 {
            return Err(Error::InvalidArgument("max unconstrained tokens must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BeamCandidate {
    /// Prompt followed by everything generated so far.
    pub context: TokenSeq,
    pub prompt_len: usize,
    pub subgraph: QuerySubgraph,
    pub chain_score: f64,
    pub chain: Chain,
    /// Score of each chain step, aligned with `chain.steps`.
    pub triplet_scores: Vec<f64>,
    pub finished: bool,
}

impl BeamCandidate {
    pub fn generated(&self) -> &[TokenId] {
        &self.context[self.prompt_len..]
    }
}

/// Hooks into the decode loop; every method defaults to a no-op.
pub trait DecodeObserver {
    /// A trie lookup made while generating a triplet.
    fn on_valid_set(&mut self, _step_prefix: &[TokenId], _valid: &ValidSet) {}
    /// A subgraph expansion after `chosen` was generated.
    fn on_expand(&mut self, _before: &QuerySubgraph, _chosen: &Triplet, _after: &QuerySubgraph) {}
    /// The pool retained after triplet-level step `step` (1-based).
    fn on_pool(&mut self, _step: usize, _pool: &[BeamCandidate]) {}
}

pub struct NoopObserver;

impl DecodeObserver for NoopObserver {}

/// Runs the two-level beam search and returns the final pool, best first.
pub fn dog_decode(
    scorer: &dyn LmScorer,
    encoder: &dyn TripletEncoder,
    prompt: &[TokenId],
    graph: Arc<KnowledgeGraph>,
    query_entities: &[String],
    config: &DecodeConfig,
) -> Result<Vec<BeamCandidate>> {
    dog_decode_observed(scorer, encoder, prompt, graph, query_entities, config, &mut NoopObserver)
}

pub fn dog_decode_observed(
    scorer: &dyn LmScorer,
    encoder: &dyn TripletEncoder,
    prompt: &[TokenId],
    graph: Arc<KnowledgeGraph>,
    query_entities: &[String],
    config: &DecodeConfig,
    observer: &mut dyn DecodeObserver,
) -> Result<Vec<BeamCandidate>> {
    config.validate()?;
    if prompt.is_empty() {
        return Err(Error::InvalidArgument("prompt is empty".into()));
    }
    if scorer.vocab_size() != encoder.vocab_size() {
        return Err(Error::InvalidArgument(format!(
            "scorer vocabulary ({}) and tokenizer vocabulary ({}) differ",
            scorer.vocab_size(),
            encoder.vocab_size()
        )));
    }
    let specials = encoder.specials();
    specials.validate(encoder.vocab_size())?;
    let serialized = SerializedGraph::new(&graph, encoder)?;
    let subgraph = QuerySubgraph::init(graph, query_entities)?;

    let engine = Engine { scorer, serialized: &serialized, specials, config };
    let mut pool = vec![BeamCandidate {
        context: prompt.to_vec(),
        prompt_len: prompt.len(),
        subgraph,
        chain_score: 0.0,
        chain: Chain::default(),
        triplet_scores: Vec::new(),
        finished: false,
    }];

    for step in 1..=config.max_steps {
        if pool.iter().all(|c| c.finished) {
            break;
        }
        let mut next = Pool::default();
        for candidate in pool {
            if candidate.finished {
                next.push(candidate);
                continue;
            }
            match engine.advance(candidate, observer)? {
                Advance::Finished(done) => next.push(done),
                Advance::DeadEnd(stuck) => {
                    if step == 1 && next.is_empty() && stuck.chain.is_empty() {
                        return Err(Error::NoChain);
                    }
                    next.push(engine.close(stuck)?);
                }
                Advance::Successors(successors) => {
                    for s in successors {
                        next.push(s);
                    }
                }
            }
        }
        pool = next.into_top(config.beam_size);
        observer.on_pool(step, &pool);
    }

    pool.into_iter()
        .map(|c| if c.finished { Ok(c) } else { engine.close(c) })
        .collect()
}

enum Advance {
    Finished(BeamCandidate),
    DeadEnd(BeamCandidate),
    Successors(Vec<BeamCandidate>),
}

struct Engine<'a> {
    scorer: &'a dyn LmScorer,
    serialized: &'a SerializedGraph,
    specials: SpecialTokens,
    config: &'a DecodeConfig,
}

impl Engine<'_> {
    /// One triplet-level step for a live candidate: free text, then either
    /// termination or `beam_size` constrained triplets.
    fn advance(
        &self,
        mut candidate: BeamCandidate,
        observer: &mut dyn DecodeObserver,
    ) -> Result<Advance> {
        let span = run_unconstrained(
            self.scorer,
            &candidate.context,
            self.specials,
            self.config.max_unconstrained_tokens,
        )?;
        if span.terminator != Terminator::TBos {
            candidate.context.extend(span.tokens);
            candidate.finished = true;
            return Ok(Advance::Finished(candidate));
        }
        let constraint = StepConstraint::new(&candidate.subgraph, self.serialized)?;
        if constraint.is_empty() {
            // Drop the dangling open marker; the candidate will be closed.
            candidate.context.extend(&span.tokens[..span.tokens.len() - 1]);
            return Ok(Advance::DeadEnd(candidate));
        }
        let mut context = candidate.context.clone();
        context.extend(&span.tokens);
        let proposals = generate_triplet(
            self.scorer,
            &context,
            &candidate.subgraph,
            &constraint,
            self.specials,
            self.config.beam_size,
            self.config.token_search,
            self.config.length_normalize,
            observer,
        )?;
        let mut successors = Vec::with_capacity(proposals.len());
        for p in proposals {
            let subgraph = candidate.subgraph.expand(&p.triplet)?;
            observer.on_expand(&candidate.subgraph, &p.triplet, &subgraph);
            let mut ctx = context.clone();
            ctx.extend(&p.tokens[1..]);
            let mut chain = candidate.chain.clone();
            chain.push(p.triplet);
            let mut triplet_scores = candidate.triplet_scores.clone();
            triplet_scores.push(p.score);
            successors.push(BeamCandidate {
                context: ctx,
                prompt_len: candidate.prompt_len,
                subgraph,
                chain_score: candidate.chain_score + p.score,
                chain,
                triplet_scores,
                finished: false,
            });
        }
        Ok(Advance::Successors(successors))
    }

    /// Writes the conclusion of a candidate that can take no further step.
    fn close(&self, mut candidate: BeamCandidate) -> Result<BeamCandidate> {
        let span = run_closing(
            self.scorer,
            &candidate.context,
            self.specials,
            self.config.max_unconstrained_tokens,
        )?;
        candidate.context.extend(span.tokens);
        candidate.finished = true;
        Ok(candidate)
    }
}

/// Next-step pool; successors with identical contexts are merged keeping
/// the higher score.
#[derive(Default)]
struct Pool {
    entries: Vec<BeamCandidate>,
    by_context: HashMap<TokenSeq, usize>,
}

impl Pool {
    fn push(&mut self, candidate: BeamCandidate) {
        match self.by_context.get(&candidate.context) {
            Some(&i) => {
                if candidate.chain_score > self.entries[i].chain_score {
                    self.entries[i] = candidate;
                }
            }
            None => {
                self.by_context.insert(candidate.context.clone(), self.entries.len());
                self.entries.push(candidate);
            }
        }
    }

    fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stable sort by descending chain score, then keep `k`.
    fn into_top(mut self, k: usize) -> Vec<BeamCandidate> {
        self.entries.sort_by(|a, b| b.chain_score.total_cmp(&a.chain_score));
        self.entries.truncate(k);
        self.entries
    }
}

#[cfg(test)]
mod tests;
