use thiserror::Error;

use crate::vocab::TokenId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid triplet: {0}")]
    InvalidTriplet(String),

    #[error("graph is empty")]
    EmptyGraph,

    #[error("query entity `{0}` does not occur in the graph")]
    UnknownEntity(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot encode text: {0}")]
    Encode(String),

    #[error("token id {id} is outside the vocabulary (size {size})")]
    TokenOutOfRange { id: TokenId, size: usize },

    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),

    #[error("cannot parse triplet from tokens: {0}")]
    TripletSyntax(String),

    #[error("valid token set is empty")]
    EmptyValidSet,

    #[error("constraint violation: {0}")]
    Contract(String),

    #[error("query-centric subgraph is empty, no triplet can be generated")]
    DeadEnd,

    #[error("no candidate produced a reasoning chain")]
    NoChain,

    #[error("scorer error: {0}")]
    Scorer(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
