//! Token-level generation: free text between triplets and trie-constrained
//! search for the next triplet.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::scorer::{checked_logits, LmScorer};
use super::DecodeObserver;
use crate::chain::QuerySubgraph;
use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triplet};
use crate::trie::{argmax, log_softmax, mask_logits, TokenTrie, ValidSet};
use crate::vocab::{SpecialTokens, TokenId, TokenSeq, TripletEncoder};

/// Token encodings of every triplet of a graph, indexed like the graph.
#[derive(Debug, Clone)]
pub struct SerializedGraph {
    specials: SpecialTokens,
    vocab_size: usize,
    sequences: Vec<TokenSeq>,
}

impl SerializedGraph {
    pub fn new(graph: &KnowledgeGraph, encoder: &(impl TripletEncoder + ?Sized)) -> Result<Self> {
        let sequences = graph
            .triplets()
            .iter()
            .map(|t| encoder.encode_triplet(t))
            .collect::<Result<Vec<_>>>()?;
        let vocab_size = encoder.vocab_size();
        if let Some(&id) = sequences.iter().flatten().find(|&&id| id as usize >= vocab_size) {
            return Err(Error::TokenOutOfRange { id, size: vocab_size });
        }
        Ok(Self { specials: encoder.specials(), vocab_size, sequences })
    }

    pub fn specials(&self) -> SpecialTokens {
        self.specials
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn sequence(&self, idx: usize) -> &[TokenId] {
        &self.sequences[idx]
    }
}

/// Trie over the current subgraph plus the map from complete token
/// sequences back to triplets.
#[derive(Debug, Clone)]
pub struct StepConstraint {
    trie: TokenTrie,
    by_tokens: HashMap<TokenSeq, usize>,
}

impl StepConstraint {
    /// Rebuilt from scratch for every subgraph.
    pub fn new(subgraph: &QuerySubgraph, serialized: &SerializedGraph) -> Result<Self> {
        let mut by_tokens = HashMap::with_capacity(subgraph.len());
        for &idx in subgraph.indices() {
            let seq = serialized.sequence(idx);
            if let Some(prev) = by_tokens.insert(seq.to_vec(), idx) {
                return Err(Error::InvalidTriplet(format!(
                    "triplets {prev} and {idx} share one token encoding"
                )));
            }
        }
        let trie = TokenTrie::from_sequences(by_tokens.keys().map(Vec::as_slice));
        Ok(Self { trie, by_tokens })
    }

    pub fn trie(&self) -> &TokenTrie {
        &self.trie
    }

    pub fn valid_next(&self, step_prefix: &[TokenId]) -> ValidSet {
        self.trie.valid_next(step_prefix)
    }

    /// Graph index of the triplet whose full encoding is `seq`.
    pub fn triplet_index(&self, seq: &[TokenId]) -> Option<usize> {
        self.by_tokens.get(seq).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.by_tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Terminator {
    /// The model opened a triplet; the marker is the last span token.
    TBos,
    /// The model ended generation; the marker is the last span token.
    Eos,
    /// The token budget ran out.
    Budget,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnconstrainedSpan {
    pub tokens: TokenSeq,
    pub terminator: Terminator,
}

/// Greedy free generation until the model emits the triplet-open marker,
/// the end-of-sequence marker, or `budget` tokens.
pub fn run_unconstrained(
    scorer: &dyn LmScorer,
    context: &[TokenId],
    specials: SpecialTokens,
    budget: usize,
) -> Result<UnconstrainedSpan> {
    generate_free(scorer, context, specials, budget, true)
}

/// Like [`run_unconstrained`] but the triplet-open marker is never chosen;
/// used to write the conclusion once no further step is possible.
pub fn run_closing(
    scorer: &dyn LmScorer,
    context: &[TokenId],
    specials: SpecialTokens,
    budget: usize,
) -> Result<UnconstrainedSpan> {
    generate_free(scorer, context, specials, budget, false)
}

fn generate_free(
    scorer: &dyn LmScorer,
    context: &[TokenId],
    specials: SpecialTokens,
    budget: usize,
    allow_triplet: bool,
) -> Result<UnconstrainedSpan> {
    let mut ctx = context.to_vec();
    let start = ctx.len();
    while ctx.len() - start < budget {
        let mut logits = checked_logits(scorer, &ctx)?;
        if !allow_triplet {
            logits[specials.t_bos as usize] = f64::NEG_INFINITY;
        }
        let next = argmax(&logits).expect("vocabulary is non-empty") as TokenId;
        ctx.push(next);
        let terminator = if next == specials.eos {
            Some(Terminator::Eos)
        } else if allow_triplet && next == specials.t_bos {
            Some(Terminator::TBos)
        } else {
            None
        };
        if let Some(terminator) = terminator {
            return Ok(UnconstrainedSpan { tokens: ctx.split_off(start), terminator });
        }
    }
    Ok(UnconstrainedSpan { tokens: ctx.split_off(start), terminator: Terminator::Budget })
}

/// How the token-level search inside one triplet is run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenSearch {
    /// Width-`bs` beam search over the trie; width 1 is greedy decoding.
    #[default]
    Beam,
    /// Best-first search returning the exact `bs` most probable triplets.
    Exact,
}

/// One completed triplet from the token-level search.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletProposal {
    pub triplet: Triplet,
    /// Graph index of `triplet`.
    pub index: usize,
    /// Full encoding, from the open marker through the close marker.
    pub tokens: TokenSeq,
    /// Sum of masked log-probabilities of every token after the open marker.
    pub score: f64,
}

#[derive(Debug, Clone)]
struct Hypothesis {
    suffix: TokenSeq,
    score: f64,
}

struct Frontier(Hypothesis);

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // Max-heap: higher score first, then lexicographically smaller tokens.
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .score
            .total_cmp(&other.0.score)
            .then_with(|| other.0.suffix.cmp(&self.0.suffix))
    }
}

struct TripletSearch<'a> {
    scorer: &'a dyn LmScorer,
    context: &'a [TokenId],
    constraint: &'a StepConstraint,
    specials: SpecialTokens,
}

impl TripletSearch<'_> {
    fn step_prefix(&self, suffix: &[TokenId]) -> TokenSeq {
        let mut prefix = Vec::with_capacity(suffix.len() + 1);
        prefix.push(self.specials.t_bos);
        prefix.extend_from_slice(suffix);
        prefix
    }

    /// Children of `h` with their cumulative scores, in ascending token order.
    fn expand(&self, h: &Hypothesis, observer: &mut dyn DecodeObserver) -> Result<Vec<Hypothesis>> {
        let prefix = self.step_prefix(&h.suffix);
        let valid = self.constraint.valid_next(&prefix);
        observer.on_valid_set(&prefix, &valid);
        if valid.is_empty() {
            return Err(Error::Contract("anchored prefix fell off the trie".into()));
        }
        let mut ctx = self.context.to_vec();
        ctx.extend_from_slice(&h.suffix);
        let logits = checked_logits(self.scorer, &ctx)?;
        let logp = log_softmax(&mask_logits(&logits, &valid)?);
        Ok(valid
            .iter()
            .map(|id| {
                let mut suffix = h.suffix.clone();
                suffix.push(id);
                Hypothesis { suffix, score: h.score + logp[id as usize] }
            })
            .collect())
    }

    fn is_complete(&self, h: &Hypothesis) -> bool {
        h.suffix.last() == Some(&self.specials.t_eos)
    }

    fn beam(&self, width: usize, observer: &mut dyn DecodeObserver) -> Result<Vec<Hypothesis>> {
        let mut live = vec![Hypothesis { suffix: Vec::new(), score: 0.0 }];
        let mut finished = Vec::new();
        while !live.is_empty() && finished.len() < width {
            let mut expansions = Vec::new();
            for h in &live {
                expansions.extend(self.expand(h, observer)?);
            }
            expansions.sort_by(|a, b| b.score.total_cmp(&a.score));
            expansions.truncate(width);
            live.clear();
            for h in expansions {
                if self.is_complete(&h) {
                    finished.push(h);
                } else {
                    live.push(h);
                }
            }
        }
        finished.sort_by(|a, b| b.score.total_cmp(&a.score));
        finished.truncate(width);
        Ok(finished)
    }

    // Log-probabilities are non-positive, so a path never scores above its
    // prefix and completed sequences leave the heap in exact rank order.
    fn exact(&self, k: usize, observer: &mut dyn DecodeObserver) -> Result<Vec<Hypothesis>> {
        let mut heap = BinaryHeap::new();
        heap.push(Frontier(Hypothesis { suffix: Vec::new(), score: 0.0 }));
        let mut finished = Vec::new();
        while let Some(Frontier(h)) = heap.pop() {
            if self.is_complete(&h) {
                finished.push(h);
                if finished.len() == k {
                    break;
                }
                continue;
            }
            for child in self.expand(&h, observer)? {
                heap.push(Frontier(child));
            }
        }
        Ok(finished)
    }
}

/// Proposes up to `width` distinct triplets of the current subgraph,
/// best first. `context` must end with the triplet-open marker.
#[allow(clippy::too_many_arguments)]
pub fn generate_triplet(
    scorer: &dyn LmScorer,
    context: &[TokenId],
    subgraph: &QuerySubgraph,
    constraint: &StepConstraint,
    specials: SpecialTokens,
    width: usize,
    mode: TokenSearch,
    length_normalize: bool,
    observer: &mut dyn DecodeObserver,
) -> Result<Vec<TripletProposal>> {
    if width == 0 {
        return Err(Error::InvalidArgument("search width must be at least 1".into()));
    }
    if constraint.is_empty() {
        return Err(Error::DeadEnd);
    }
    if context.last() != Some(&specials.t_bos) {
        return Err(Error::Contract(
            "triplet generation must start right after the triplet-open marker".into(),
        ));
    }
    let search = TripletSearch { scorer, context, constraint, specials };
    let hyps = match mode {
        TokenSearch::Beam => search.beam(width, observer)?,
        TokenSearch::Exact => search.exact(width, observer)?,
    };
    let graph = subgraph.graph();
    let mut proposals = hyps
        .into_iter()
        .map(|h| {
            let tokens = search.step_prefix(&h.suffix);
            let index = constraint
                .triplet_index(&tokens)
                .ok_or_else(|| Error::Contract("completed path is not a subgraph triplet".into()))?;
            let score = if length_normalize { h.score / h.suffix.len() as f64 } else { h.score };
            Ok(TripletProposal { triplet: graph.triplets()[index].clone(), index, tokens, score })
        })
        .collect::<Result<Vec<_>>>()?;
    if length_normalize {
        proposals.sort_by(|a, b| b.score.total_cmp(&a.score));
    }
    Ok(proposals)
}
