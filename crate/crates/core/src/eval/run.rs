//! Dataset-level pipeline: prompt, decode, extract, score.

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::answers::extract_answers;
use super::dataset::{DatasetEntry, QaInstance};
use super::metrics::{hits_at_1, ill_triplet_rate, triplet_f1};
use super::prompt::PromptTemplate;
use super::trace::{DecodeTrace, InstanceMetrics, TraceCandidate};
use crate::decoder::{dog_decode, DecodeConfig, LmScorer, RandomScorer, ScriptedScorer, TableSpec};
use crate::error::{Error, Result};
use crate::vocab::{canonical_whitespace, Tokenizer, Vocabulary, VocabularyBuilder, WhitespaceTokenizer};

/// Which mock language model drives decoding.
#[derive(Debug, Clone)]
pub enum ScorerSpec {
    /// Suffix-rule logit table, optionally overridden per instance id.
    Table(TableSpec),
    /// Whitespace-tokenized text replayed after the prompt.
    Scripted(String),
    /// Hash-seeded random logits.
    Random,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: DecodeConfig,
    pub template: PromptTemplate,
    /// Fixed vocabulary; when absent one is built per instance from the
    /// prompt, the graph and the scorer's tokens.
    pub vocab: Option<Vocabulary>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub instances: usize,
    pub decoded: usize,
    pub failed: usize,
    /// Mean over decoded instances.
    pub hits_at_1: f64,
    /// Mean over decoded instances that carry a gold chain.
    pub triplet_f1: Option<f64>,
    pub ill_triplet_rate: f64,
}

impl AggregateReport {
    pub fn from_traces(traces: &[DecodeTrace]) -> Self {
        let mut report = Self { instances: traces.len(), ..Self::default() };
        let (mut hits, mut ill) = (0.0, 0.0);
        let (mut f1_sum, mut f1_count) = (0.0, 0usize);
        for t in traces {
            if t.error.is_some() {
                report.failed += 1;
                continue;
            }
            report.decoded += 1;
            hits += t.metrics.hits_at_1.unwrap_or(0.0);
            ill += t.metrics.ill_triplet_rate.unwrap_or(0.0);
            if let Some(f1) = t.metrics.triplet_f1 {
                f1_sum += f1;
                f1_count += 1;
            }
        }
        if report.decoded > 0 {
            report.hits_at_1 = hits / report.decoded as f64;
            report.ill_triplet_rate = ill / report.decoded as f64;
        }
        if f1_count > 0 {
            report.triplet_f1 = Some(f1_sum / f1_count as f64);
        }
        report
    }
}

/// Per-instance metrics for a finished trace.
pub fn score_trace(trace: &DecodeTrace, instance: &QaInstance) -> InstanceMetrics {
    let chain = trace.predicted_chain().cloned().unwrap_or_default();
    InstanceMetrics {
        hits_at_1: Some(hits_at_1(trace.prediction(), &instance.answers)),
        triplet_f1: instance.gold_chain.as_ref().map(|gold| triplet_f1(&chain, gold)),
        ill_triplet_rate: Some(ill_triplet_rate(&chain, &instance.graph, &instance.query_entities)),
    }
}

fn instance_vocab(instance: &QaInstance, prompt: &str, scorer: &ScorerSpec) -> Vocabulary {
    let mut builder = VocabularyBuilder::new();
    builder.add_text(prompt);
    for t in instance.graph.triplets() {
        builder.add_triplet(t);
    }
    match scorer {
        ScorerSpec::Table(spec) => {
            for tok in spec.tokens() {
                builder.add_token(&tok);
            }
        }
        ScorerSpec::Scripted(text) => {
            builder.add_text(text);
        }
        ScorerSpec::Random => {}
    }
    builder.build()
}

fn instance_seed(seed: u64, instance_id: &str) -> u64 {
    instance_id.bytes().fold(seed ^ 0x9e37_79b9_7f4a_7c15, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Decodes one instance and scores it.
pub fn decode_instance(instance: &QaInstance, scorer: &ScorerSpec, options: &RunOptions) -> Result<DecodeTrace> {
    let prompt = canonical_whitespace(&options.template.render(&instance.graph, &instance.question)?);
    let vocab = match &options.vocab {
        Some(v) => v.clone(),
        None => instance_vocab(instance, &prompt, scorer),
    };
    let tokenizer = WhitespaceTokenizer::new(vocab);
    let prompt_ids = tokenizer.encode(&prompt)?;
    let specials = tokenizer.specials();
    let size = Tokenizer::vocab_size(&tokenizer);

    let lm: Box<dyn LmScorer> = match scorer {
        ScorerSpec::Table(spec) => Box::new(spec.for_instance(&instance.id).resolve(tokenizer.vocab())?),
        ScorerSpec::Scripted(text) => {
            let script = tokenizer.encode(&canonical_whitespace(text))?;
            Box::new(ScriptedScorer::new(size, script, prompt_ids.len(), specials.eos)?)
        }
        ScorerSpec::Random => Box::new(RandomScorer::new(size, instance_seed(options.config.seed, &instance.id))),
    };

    let pool = dog_decode(
        lm.as_ref(),
        &tokenizer,
        &prompt_ids,
        instance.graph.clone(),
        &instance.query_entities,
        &options.config,
    )?;

    let mut candidates = Vec::with_capacity(pool.len());
    for c in pool {
        let generated = c.generated();
        let body = match generated.last() {
            Some(&last) if last == specials.eos => &generated[..generated.len() - 1],
            _ => generated,
        };
        let text = tokenizer.decode(body)?;
        candidates.push(TraceCandidate {
            predicted_answers: extract_answers(&text),
            chain: c.chain,
            chain_score: c.chain_score,
            text,
        });
    }
    let mut trace = DecodeTrace::new(instance.id.clone(), candidates);
    trace.metrics = score_trace(&trace, instance);
    Ok(trace)
}

/// Decodes every entry. Invalid entries and failed decodes become error
/// traces; the run itself fails only on bad options.
pub fn run_dataset(
    entries: &[DatasetEntry],
    scorer: &ScorerSpec,
    options: &RunOptions,
) -> Result<(Vec<DecodeTrace>, AggregateReport)> {
    options.config.validate()?;
    if entries.is_empty() {
        return Err(Error::Dataset("dataset has no instances".into()));
    }
    let mut traces = Vec::with_capacity(entries.len());
    for entry in entries {
        let trace = match entry {
            DatasetEntry::Invalid { id, line, error } => {
                warn!("skipping line {line} ({id}): {error}");
                DecodeTrace::failed(id.clone(), format!("line {line}: {error}"))
            }
            DatasetEntry::Instance(inst) => match decode_instance(inst, scorer, options) {
                Ok(t) => t,
                Err(e) => {
                    warn!("instance {} failed: {e}", inst.id);
                    DecodeTrace::failed(inst.id.clone(), e)
                }
            },
        };
        traces.push(trace);
    }
    let report = AggregateReport::from_traces(&traces);
    info!(
        "decoded {}/{} instances, hits@1 {:.4}",
        report.decoded, report.instances, report.hits_at_1
    );
    Ok((traces, report))
}
