//! Random worlds and brute-force oracles shared by the integration tests.
//! Nothing here calls into the decoder's own search or trie code.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use kgdecode_core::decoder::LmScorer;
use kgdecode_core::graph::{KnowledgeGraph, Triplet};
use kgdecode_core::vocab::{SpecialTokens, TokenId, TokenSeq, Tokenizer, VocabularyBuilder, WhitespaceTokenizer};
use rand::seq::SliceRandom;
use rand::Rng;

const WORDS: &[&str] = &["alpha", "beta", "gamma", "delta", "omega", "kappa", "sigma", "tau"];
const RELATIONS: &[&str] = &["born in", "part of", "capital", "located in", "plays", "of"];
pub const PROMPT: &str = "question : where does it lead ?";
const FILLER: &str = "so the answer is * .";

pub struct World {
    pub graph: Arc<KnowledgeGraph>,
    pub tok: WhitespaceTokenizer,
    pub query: Vec<String>,
    pub prompt: TokenSeq,
}

impl World {
    pub fn specials(&self) -> SpecialTokens {
        self.tok.specials()
    }

    pub fn vocab_size(&self) -> usize {
        self.tok.vocab_size()
    }

    pub fn seqs(&self, indices: impl IntoIterator<Item = usize>) -> Vec<TokenSeq> {
        serializations(&self.graph, &self.tok, indices)
    }
}

fn entity_name(rng: &mut impl Rng) -> String {
    let first = WORDS.choose(rng).unwrap();
    if rng.gen_bool(0.35) {
        format!("{first} {}", WORDS.choose(rng).unwrap())
    } else {
        first.to_string()
    }
}

/// A graph of `n_triplets` distinct triplets over a small shared vocabulary,
/// so entity and relation words recur across fields.
pub fn random_graph(rng: &mut impl Rng, n_triplets: usize) -> KnowledgeGraph {
    let n_entities = (n_triplets / 2 + 2).min(40);
    let mut entities = BTreeSet::new();
    while entities.len() < n_entities {
        let name = entity_name(rng);
        let name = if entities.contains(&name) { format!("{name} {}", entities.len()) } else { name };
        entities.insert(name);
    }
    let entities: Vec<String> = entities.into_iter().collect();
    let mut triplets = BTreeSet::new();
    let mut ordered = Vec::new();
    let mut attempts = 0;
    while ordered.len() < n_triplets && attempts < 10_000 {
        attempts += 1;
        let h = entities.choose(rng).unwrap();
        let t = if rng.gen_bool(0.06) { h } else { entities.choose(rng).unwrap() };
        let r = RELATIONS.choose(rng).unwrap();
        let triplet = Triplet::new(h, r, t).unwrap();
        if triplets.insert(triplet.clone()) {
            ordered.push(triplet);
        }
    }
    KnowledgeGraph::from_triplets(ordered)
}

pub fn world_for(rng: &mut impl Rng, graph: KnowledgeGraph) -> World {
    let mut b = VocabularyBuilder::new();
    for t in graph.triplets() {
        b.add_triplet(t);
    }
    b.add_text(PROMPT).add_text(FILLER);
    let tok = WhitespaceTokenizer::new(b.build());
    let entities: Vec<String> = graph.entities().map(str::to_string).collect();
    let n_query = if entities.len() > 1 && rng.gen_bool(0.3) { 2 } else { 1 };
    let query: Vec<String> = entities.choose_multiple(rng, n_query).cloned().collect();
    let prompt = tok.encode(PROMPT).unwrap();
    World { graph: Arc::new(graph), tok, query, prompt }
}

pub fn random_world(rng: &mut impl Rng, min: usize, max: usize) -> World {
    let n = rng.gen_range(min..=max);
    let graph = random_graph(rng, n);
    world_for(rng, graph)
}

pub fn serializations(
    graph: &KnowledgeGraph,
    tok: &WhitespaceTokenizer,
    indices: impl IntoIterator<Item = usize>,
) -> Vec<TokenSeq> {
    indices
        .into_iter()
        .map(|i| {
            let t = &graph.triplets()[i];
            tok.encode(&format!("< {} -> {} -> {} >", t.head(), t.relation(), t.tail())).unwrap()
        })
        .collect()
}

/// Graph indices touching a query entity or an endpoint of `chain`,
/// recomputed by a full scan.
pub fn subgraph_oracle(graph: &KnowledgeGraph, query: &[String], chain: &[Triplet]) -> BTreeSet<usize> {
    let mut visited: BTreeSet<&str> = query.iter().map(String::as_str).collect();
    for t in chain {
        visited.insert(t.head());
        visited.insert(t.tail());
    }
    graph
        .triplets()
        .iter()
        .enumerate()
        .filter(|(_, t)| visited.contains(t.head()) || visited.contains(t.tail()))
        .map(|(i, _)| i)
        .collect()
}

/// `{x : prefix·x is a contiguous substring of some sequence}`.
pub fn substring_oracle(seqs: &[TokenSeq], prefix: &[TokenId]) -> BTreeSet<TokenId> {
    let mut out = BTreeSet::new();
    for s in seqs {
        for start in 0..s.len() {
            let tail = &s[start..];
            if tail.len() > prefix.len() && tail.starts_with(prefix) {
                out.insert(tail[prefix.len()]);
            }
        }
    }
    out
}

/// `{x : prefix·x is a prefix of some sequence}`.
pub fn prefix_oracle(seqs: &[TokenSeq], prefix: &[TokenId]) -> BTreeSet<TokenId> {
    seqs.iter()
        .filter(|s| s.len() > prefix.len() && s.starts_with(prefix))
        .map(|s| s[prefix.len()])
        .collect()
}

pub fn ref_argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn ref_log_softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    let lse = m + z.ln();
    xs.iter().map(|x| x - lse).collect()
}

pub fn ref_mask(logits: &[f64], valid: &BTreeSet<TokenId>) -> Vec<f64> {
    logits
        .iter()
        .enumerate()
        .map(|(i, &x)| if valid.contains(&(i as TokenId)) { x } else { f64::NEG_INFINITY })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    Open,
    Eos,
    Budget,
}

/// Greedy free text; with `allow_open` false the open marker is banned.
pub fn ref_free_span(
    scorer: &dyn LmScorer,
    context: &[TokenId],
    sp: SpecialTokens,
    budget: usize,
    allow_open: bool,
) -> (TokenSeq, Stop) {
    let mut ctx = context.to_vec();
    let mut out = Vec::new();
    while out.len() < budget {
        let mut logits = scorer.next_logits(&ctx).unwrap();
        if !allow_open {
            logits[sp.t_bos as usize] = f64::NEG_INFINITY;
        }
        let next = ref_argmax(&logits) as TokenId;
        ctx.push(next);
        out.push(next);
        if next == sp.eos {
            return (out, Stop::Eos);
        }
        if allow_open && next == sp.t_bos {
            return (out, Stop::Open);
        }
    }
    (out, Stop::Budget)
}

/// Masked log-probability of `target` (open marker through close marker)
/// after `context`, with valid sets from a scan of `seqs`.
pub fn ref_triplet_score(scorer: &dyn LmScorer, context: &[TokenId], seqs: &[TokenSeq], target: &[TokenId]) -> f64 {
    let mut total = 0.0;
    let mut ctx = context.to_vec();
    for j in 1..target.len() {
        let valid = prefix_oracle(seqs, &target[..j]);
        let logits = scorer.next_logits(&ctx).unwrap();
        total += ref_log_softmax(&ref_mask(&logits, &valid))[target[j] as usize];
        ctx.push(target[j]);
    }
    total
}
