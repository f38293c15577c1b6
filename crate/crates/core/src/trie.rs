//! Suffix-inserted token trie and logit masking.
//!
//! Every suffix of every serialized triplet is inserted, so a lookup answers
//! "which tokens may follow this window". Because the triplet-open marker
//! occurs only at position 0 of each serialization, lookups whose prefix
//! starts with that marker behave exactly like a plain prefix trie over
//! whole triplets; that is the only kind of lookup the decoder issues.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::Triplet;
use crate::vocab::{TokenId, TripletEncoder};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Node {
    children: BTreeMap<TokenId, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenTrie {
    nodes: Vec<Node>,
}

impl Default for TokenTrie {
    fn default() -> Self {
        Self { nodes: vec![Node::default()] }
    }
}

/// Token ids permitted at the next position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidSet(BTreeSet<TokenId>);

impl ValidSet {
    pub fn contains(&self, id: TokenId) -> bool {
        self.0.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Ascending.
    pub fn iter(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.0.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<TokenId> {
        self.iter().collect()
    }
}

impl FromIterator<TokenId> for ValidSet {
    fn from_iter<I: IntoIterator<Item = TokenId>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl TokenTrie {
    /// Inserts every suffix of every sequence.
    pub fn from_sequences<'a, I>(sequences: I) -> Self
    where
        I: IntoIterator<Item = &'a [TokenId]>,
    {
        let mut trie = Self::default();
        for seq in sequences {
            for start in 0..seq.len() {
                trie.insert(&seq[start..]);
            }
        }
        trie
    }

    /// Serializes each triplet with `encoder` and builds the trie.
    pub fn build(triplets: &[Triplet], encoder: &(impl TripletEncoder + ?Sized)) -> Result<Self> {
        let seqs = triplets
            .iter()
            .map(|t| encoder.encode_triplet(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_sequences(seqs.iter().map(Vec::as_slice)))
    }

    fn insert(&mut self, seq: &[TokenId]) {
        let mut node = 0;
        for &tok in seq {
            node = match self.nodes[node].children.get(&tok) {
                Some(&child) => child,
                None => {
                    let child = self.nodes.len();
                    self.nodes.push(Node::default());
                    self.nodes[node].children.insert(tok, child);
                    child
                }
            };
        }
    }

    fn walk(&self, prefix: &[TokenId]) -> Option<usize> {
        prefix
            .iter()
            .try_fold(0, |node, tok| self.nodes[node].children.get(tok).copied())
    }

    /// Child keys of the node reached by `prefix`; empty when the walk falls
    /// off the trie.
    pub fn valid_next(&self, prefix: &[TokenId]) -> ValidSet {
        match self.walk(prefix) {
            Some(node) => self.nodes[node].children.keys().copied().collect(),
            None => ValidSet::default(),
        }
    }

    pub fn contains_path(&self, path: &[TokenId]) -> bool {
        self.walk(path).is_some()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes[0].children.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Nested-map rendering with ascending keys, e.g. `{5: {6: {}}, 6: {}}`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        self.dump_node(0, &mut out);
        out
    }

    fn dump_node(&self, node: usize, out: &mut String) {
        out.push('{');
        for (i, (tok, &child)) in self.nodes[node].children.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{tok}: ");
            self.dump_node(child, out);
        }
        out.push('}');
    }
}

/// Keeps logits of valid tokens bit-for-bit and sets every other entry to
/// negative infinity.
pub fn mask_logits(logits: &[f64], valid: &ValidSet) -> Result<Vec<f64>> {
    if valid.is_empty() {
        return Err(Error::EmptyValidSet);
    }
    if let Some(id) = valid.iter().find(|&id| id as usize >= logits.len()) {
        return Err(Error::TokenOutOfRange { id, size: logits.len() });
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("logits must be finite".into()));
    }
    let mut masked = vec![f64::NEG_INFINITY; logits.len()];
    for id in valid.iter() {
        masked[id as usize] = logits[id as usize];
    }
    Ok(masked)
}

/// Numerically stable log-softmax; `-inf` inputs map to `-inf`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![f64::NEG_INFINITY; logits.len()];
    }
    let sum: f64 = logits.iter().map(|&x| (x - max).exp()).sum();
    let log_norm = max + sum.ln();
    logits.iter().map(|&x| x - log_norm).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Index of the largest logit; the lowest index wins ties.
pub fn argmax(logits: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in logits.iter().enumerate() {
        if best.is_none_or(|(_, b)| x > b) {
            best = Some((i, x));
        }
    }
    best.map(|(i, _)| i)
}
