//! Plain-Rust layer behind the Python classes: host-owned token ids in,
//! plain tuples and vectors out. Everything here is usable without an
//! interpreter, which keeps it testable with `cargo test`.

use std::sync::Arc;

use kgdecode_core::chain::Chain;
use kgdecode_core::decoder::{dog_decode, BeamCandidate, ConstrainedStream, DecodeConfig, LmScorer, Phase, StepReport};
use kgdecode_core::graph::{KnowledgeGraph, Triplet};
use kgdecode_core::trie::{mask_logits, ValidSet};
use kgdecode_core::vocab::{PretokenizedTriplets, SpecialTokens, TokenId};
use kgdecode_core::{Error, Result};

pub type TripletTuple = (String, String, String);

pub fn to_triplet(t: &TripletTuple) -> Result<Triplet> {
    Triplet::new(&t.0, &t.1, &t.2)
}

pub fn to_tuple(t: &Triplet) -> TripletTuple {
    t.clone().into()
}

pub fn to_chain(steps: &[TripletTuple]) -> Result<Chain> {
    Ok(Chain::new(steps.iter().map(to_triplet).collect::<Result<_>>()?))
}

pub fn phase_name(phase: Phase) -> &'static str {
    match phase {
        Phase::Unconstrained => "unconstrained",
        Phase::Constrained => "constrained",
        Phase::Closed => "closed",
    }
}

/// Token ids the host tokenizer assigned to every graph triplet, together
/// with the three marker ids and the vocabulary size.
#[derive(Debug, Clone)]
pub struct HostEncoding {
    pub specials: SpecialTokens,
    pub vocab_size: usize,
    pub encodings: Vec<(TripletTuple, Vec<TokenId>)>,
}

impl HostEncoding {
    pub fn encoder(&self) -> Result<PretokenizedTriplets> {
        let mut enc = PretokenizedTriplets::new(self.specials, self.vocab_size)?;
        for (t, ids) in &self.encodings {
            enc.insert(to_triplet(t)?, ids.clone())?;
        }
        Ok(enc)
    }
}

/// Result of feeding one token to a [`Session`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeedResult {
    pub phase: &'static str,
    pub triplet_completed: Option<TripletTuple>,
    pub allowed: Option<Vec<TokenId>>,
}

impl From<StepReport> for FeedResult {
    fn from(r: StepReport) -> Self {
        Self {
            phase: phase_name(r.phase),
            triplet_completed: r.triplet_completed.as_ref().map(to_tuple),
            allowed: r.allowed.map(|v| v.to_vec()),
        }
    }
}

/// A constrained stream for a host that runs its own sampling loop.
#[derive(Debug, Clone)]
pub struct Session {
    stream: ConstrainedStream,
}

impl Session {
    pub fn open(graph: Arc<KnowledgeGraph>, query_entities: &[String], encoding: &HostEncoding) -> Result<Self> {
        let encoder = encoding.encoder()?;
        Ok(Self { stream: ConstrainedStream::new(graph, query_entities, &encoder)? })
    }

    pub fn feed(&mut self, token: TokenId) -> Result<FeedResult> {
        self.stream.feed(token).map(FeedResult::from)
    }

    pub fn allowed(&self) -> Option<Vec<TokenId>> {
        self.stream.allowed().map(|v| v.to_vec())
    }

    pub fn phase(&self) -> &'static str {
        phase_name(self.stream.phase())
    }

    pub fn chain(&self) -> Vec<TripletTuple> {
        self.stream.chain().steps.iter().map(to_tuple).collect()
    }

    /// Masks a logit vector to the currently allowed tokens. Outside the
    /// constrained phase the logits are returned unchanged.
    pub fn mask(&self, logits: &[f64]) -> Result<Vec<f64>> {
        match self.stream.allowed() {
            Some(valid) => mask_logits(logits, &valid),
            None => Ok(logits.to_vec()),
        }
    }
}

pub fn mask_with(logits: &[f64], allowed: &[TokenId]) -> Result<Vec<f64>> {
    mask_logits(logits, &allowed.iter().copied().collect::<ValidSet>())
}

/// One finished beam candidate in host-friendly form.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateOut {
    pub generated: Vec<TokenId>,
    pub chain: Vec<TripletTuple>,
    pub chain_score: f64,
    pub triplet_scores: Vec<f64>,
    pub finished: bool,
}

impl From<&BeamCandidate> for CandidateOut {
    fn from(c: &BeamCandidate) -> Self {
        Self {
            generated: c.generated().to_vec(),
            chain: c.chain.steps.iter().map(to_tuple).collect(),
            chain_score: c.chain_score,
            triplet_scores: c.triplet_scores.clone(),
            finished: c.finished,
        }
    }
}

/// Adapts a fallible logits callback to the scorer interface.
pub struct CallbackScorer<F> {
    pub vocab_size: usize,
    pub callback: F,
}

impl<F> LmScorer for CallbackScorer<F>
where
    F: Fn(&[TokenId]) -> std::result::Result<Vec<f64>, String>,
{
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logits(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        (self.callback)(context).map_err(Error::Scorer)
    }
}

pub fn decode_with(
    scorer: &dyn LmScorer,
    encoding: &HostEncoding,
    prompt: &[TokenId],
    graph: Arc<KnowledgeGraph>,
    query_entities: &[String],
    config: &DecodeConfig,
) -> Result<Vec<CandidateOut>> {
    let encoder = encoding.encoder()?;
    let pool = dog_decode(scorer, &encoder, prompt, graph, query_entities, config)?;
    Ok(pool.iter().map(CandidateOut::from).collect())
}
