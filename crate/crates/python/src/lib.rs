//! Python extension module `kgdecode`.
//!
//! The host keeps its own tokenizer and model: it passes the token ids of
//! every graph triplet and either drives a [`PySession`] token by token or
//! hands a logits callback to [`decode`].

pub mod bridge;

use std::sync::Arc;

use kgdecode_core::chain::validate_chain;
use kgdecode_core::decoder::{DecodeConfig, TokenSearch};
use kgdecode_core::eval::{self, PromptTemplate};
use kgdecode_core::graph::{select_topk_connected, KnowledgeGraph, WordOverlapScorer};
use kgdecode_core::vocab::{SpecialTokens, TokenId};
use pyo3::exceptions::{PyIOError, PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use bridge::{CallbackScorer, CandidateOut, FeedResult, HostEncoding, Session, TripletTuple};

fn to_py(e: kgdecode_core::Error) -> PyErr {
    use kgdecode_core::Error;
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::UnknownEntity(_) => PyKeyError::new_err(e.to_string()),
        Error::DeadEnd | Error::NoChain | Error::Contract(_) | Error::Scorer(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "KnowledgeGraph", module = "kgdecode", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyKnowledgeGraph {
    inner: Arc<KnowledgeGraph>,
}

#[pymethods]
impl PyKnowledgeGraph {
    #[new]
    fn new(triplets: Vec<TripletTuple>) -> PyResult<Self> {
        let ts = triplets.iter().map(bridge::to_triplet).collect::<Result<Vec<_>, _>>().map_err(to_py)?;
        Ok(Self { inner: Arc::new(KnowledgeGraph::from_triplets(ts)) })
    }

    #[staticmethod]
    fn from_tsv(text: &str) -> PyResult<Self> {
        Ok(Self { inner: Arc::new(KnowledgeGraph::from_tsv_str(text).map_err(to_py)?) })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: Arc::new(KnowledgeGraph::load_path(path).map_err(to_py)?) })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, t: TripletTuple) -> bool {
        bridge::to_triplet(&t).is_ok_and(|t| self.inner.contains(&t))
    }

    fn triplets(&self) -> Vec<TripletTuple> {
        self.inner.triplets().iter().map(bridge::to_tuple).collect()
    }

    fn entities(&self) -> Vec<String> {
        self.inner.entities().map(str::to_string).collect()
    }

    fn neighbors(&self, entity: &str) -> Vec<TripletTuple> {
        self.inner.neighbors(entity).into_iter().map(bridge::to_tuple).collect()
    }

    fn linearize(&self) -> PyResult<String> {
        self.inner.linearize().map_err(to_py)
    }

    fn to_tsv(&self) -> String {
        self.inner.to_tsv()
    }

    /// Top-`k` triplets by word overlap with the question, kept connected
    /// to the query entities.
    #[pyo3(signature = (query_entities, question, k = 120))]
    fn select_topk(&self, query_entities: Vec<String>, question: &str, k: usize) -> PyResult<Self> {
        let out = select_topk_connected(&self.inner, &query_entities, &WordOverlapScorer, question, k).map_err(to_py)?;
        Ok(Self { inner: Arc::new(out) })
    }

    fn __repr__(&self) -> String {
        format!("KnowledgeGraph({} triplets)", self.inner.len())
    }
}

fn host_encoding(
    encodings: Vec<(TripletTuple, Vec<TokenId>)>,
    t_bos: TokenId,
    t_eos: TokenId,
    eos: TokenId,
    vocab_size: usize,
) -> HostEncoding {
    HostEncoding { specials: SpecialTokens { t_bos, t_eos, eos }, vocab_size, encodings }
}

#[pyclass(name = "StepReport", module = "kgdecode", frozen, get_all)]
pub struct PyStepReport {
    phase: &'static str,
    triplet_completed: Option<TripletTuple>,
    allowed: Option<Vec<TokenId>>,
}

impl From<FeedResult> for PyStepReport {
    fn from(r: FeedResult) -> Self {
        Self { phase: r.phase, triplet_completed: r.triplet_completed, allowed: r.allowed }
    }
}

/// Token-by-token constrained stream over a graph.
#[pyclass(name = "Session", module = "kgdecode")]
pub struct PySession {
    inner: Session,
}

#[pymethods]
impl PySession {
    #[new]
    #[pyo3(signature = (graph, query_entities, encodings, *, t_bos, t_eos, eos, vocab_size))]
    fn new(
        graph: &PyKnowledgeGraph,
        query_entities: Vec<String>,
        encodings: Vec<(TripletTuple, Vec<TokenId>)>,
        t_bos: TokenId,
        t_eos: TokenId,
        eos: TokenId,
        vocab_size: usize,
    ) -> PyResult<Self> {
        let enc = host_encoding(encodings, t_bos, t_eos, eos, vocab_size);
        Ok(Self { inner: Session::open(graph.inner.clone(), &query_entities, &enc).map_err(to_py)? })
    }

    fn feed(&mut self, token: TokenId) -> PyResult<PyStepReport> {
        self.inner.feed(token).map(PyStepReport::from).map_err(to_py)
    }

    /// Allowed next tokens, or None outside a triplet.
    fn allowed(&self) -> Option<Vec<TokenId>> {
        self.inner.allowed()
    }

    fn mask(&self, logits: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.mask(&logits).map_err(to_py)
    }

    #[getter]
    fn phase(&self) -> &'static str {
        self.inner.phase()
    }

    fn chain(&self) -> Vec<TripletTuple> {
        self.inner.chain()
    }
}

#[pyclass(name = "Candidate", module = "kgdecode", frozen, get_all)]
pub struct PyCandidate {
    generated: Vec<TokenId>,
    chain: Vec<TripletTuple>,
    chain_score: f64,
    triplet_scores: Vec<f64>,
    finished: bool,
}

impl From<CandidateOut> for PyCandidate {
    fn from(c: CandidateOut) -> Self {
        Self {
            generated: c.generated,
            chain: c.chain,
            chain_score: c.chain_score,
            triplet_scores: c.triplet_scores,
            finished: c.finished,
        }
    }
}

#[pymethods]
impl PyCandidate {
    fn __repr__(&self) -> String {
        format!("Candidate(score={:.4}, steps={})", self.chain_score, self.chain.len())
    }
}

/// Runs the beam decoder. `scorer(context_ids) -> list[float]` must return
/// `vocab_size` finite logits.
#[pyfunction]
#[pyo3(signature = (
    scorer, graph, query_entities, prompt, encodings, *, t_bos, t_eos, eos, vocab_size,
    beam_size = 1, max_steps = 4, max_unconstrained_tokens = 128, token_search = "beam",
))]
#[allow(clippy::too_many_arguments)]
fn decode(
    py: Python<'_>,
    scorer: Py<PyAny>,
    graph: &PyKnowledgeGraph,
    query_entities: Vec<String>,
    prompt: Vec<TokenId>,
    encodings: Vec<(TripletTuple, Vec<TokenId>)>,
    t_bos: TokenId,
    t_eos: TokenId,
    eos: TokenId,
    vocab_size: usize,
    beam_size: usize,
    max_steps: usize,
    max_unconstrained_tokens: usize,
    token_search: &str,
) -> PyResult<Vec<PyCandidate>> {
    let token_search = match token_search {
        "beam" => TokenSearch::Beam,
        "exact" => TokenSearch::Exact,
        other => return Err(PyValueError::new_err(format!("token_search must be 'beam' or 'exact', got {other:?}"))),
    };
    let config = DecodeConfig { beam_size, max_steps, max_unconstrained_tokens, token_search, ..DecodeConfig::default() };
    config.validate().map_err(to_py)?;
    let enc = host_encoding(encodings, t_bos, t_eos, eos, vocab_size);
    let callback = |ctx: &[TokenId]| -> Result<Vec<f64>, String> {
        scorer
            .bind(py)
            .call1((ctx.to_vec(),))
            .and_then(|r| r.extract::<Vec<f64>>())
            .map_err(|e| e.to_string())
    };
    let cb = CallbackScorer { vocab_size, callback };
    let out = bridge::decode_with(&cb, &enc, &prompt, graph.inner.clone(), &query_entities, &config).map_err(to_py)?;
    Ok(out.into_iter().map(PyCandidate::from).collect())
}

/// Masks logits to the allowed ids: others become -inf, allowed values are
/// kept unchanged.
#[pyfunction]
fn mask_logits(logits: Vec<f64>, allowed: Vec<TokenId>) -> PyResult<Vec<f64>> {
    bridge::mask_with(&logits, &allowed).map_err(to_py)
}

#[pyfunction]
fn extract_answers(text: &str) -> Vec<String> {
    eval::extract_answers(text)
}

#[pyfunction]
fn hits_at_1(predicted: Vec<String>, gold: Vec<String>) -> f64 {
    eval::hits_at_1(&predicted, &gold)
}

#[pyfunction]
fn triplet_f1(predicted: Vec<TripletTuple>, gold: Vec<TripletTuple>) -> PyResult<f64> {
    let pred = bridge::to_chain(&predicted).map_err(to_py)?;
    let gold = bridge::to_chain(&gold).map_err(to_py)?;
    Ok(eval::triplet_f1(&pred, &gold.steps))
}

#[pyfunction]
fn ill_triplet_rate(chain: Vec<TripletTuple>, graph: &PyKnowledgeGraph, query_entities: Vec<String>) -> PyResult<f64> {
    let chain = bridge::to_chain(&chain).map_err(to_py)?;
    Ok(eval::ill_triplet_rate(&chain, &graph.inner, &query_entities))
}

/// Checks a chain and returns `(well_formed, [(step, property), ...])`.
#[pyfunction]
fn validate(
    chain: Vec<TripletTuple>,
    graph: &PyKnowledgeGraph,
    query_entities: Vec<String>,
) -> PyResult<(bool, Vec<(usize, String)>)> {
    let chain = bridge::to_chain(&chain).map_err(to_py)?;
    let report = validate_chain(&chain, &graph.inner, &query_entities);
    let violations = report
        .violations
        .iter()
        .map(|v| {
            let name = match v.property {
                kgdecode_core::chain::Property::InGraph => "PROPERTY_1",
                kgdecode_core::chain::Property::Connected => "PROPERTY_2",
            };
            (v.step, name.to_string())
        })
        .collect();
    Ok((report.well_formed, violations))
}

/// Renders the few-shot prompt; `template` needs `{graph}` and `{question}`.
#[pyfunction]
#[pyo3(signature = (graph, question, template = None))]
fn build_prompt(graph: &PyKnowledgeGraph, question: &str, template: Option<&str>) -> PyResult<String> {
    let template = match template {
        Some(t) => PromptTemplate::new(t).map_err(to_py)?,
        None => PromptTemplate::default(),
    };
    template.render(&graph.inner, question).map_err(to_py)
}

#[pymodule]
pub fn kgdecode(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKnowledgeGraph>()?;
    m.add_class::<PySession>()?;
    m.add_class::<PyStepReport>()?;
    m.add_class::<PyCandidate>()?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(mask_logits, m)?)?;
    m.add_function(wrap_pyfunction!(extract_answers, m)?)?;
    m.add_function(wrap_pyfunction!(hits_at_1, m)?)?;
    m.add_function(wrap_pyfunction!(triplet_f1, m)?)?;
    m.add_function(wrap_pyfunction!(ill_triplet_rate, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add("ANSWER_PRIMING", eval::ANSWER_PRIMING)?;
    Ok(())
}
