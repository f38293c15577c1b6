//! Knowledge-graph constrained decoding.
//!
//! A language model generating a reasoning chain is forced, token by token,
//! to emit only triplets that exist in a knowledge graph and connect to what
//! has been said so far. Free text between triplets is left alone.

pub mod chain;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod trie;
pub mod vocab;

pub use chain::{validate_chain, Chain, Property, QuerySubgraph, ValidationReport, Violation};
pub use decoder::{
    dog_decode, dog_decode_observed, BeamCandidate, ConstrainedStream, DecodeConfig, DecodeObserver, LmScorer,
    TokenSearch,
};
pub use error::{Error, Result};
pub use graph::{select_topk_connected, KnowledgeGraph, SimilarityScorer, Triplet, WordOverlapScorer};
pub use trie::{mask_logits, TokenTrie, ValidSet};
pub use vocab::{SpecialTokens, TokenId, TokenSeq, Tokenizer, TripletEncoder, Vocabulary, WhitespaceTokenizer};
