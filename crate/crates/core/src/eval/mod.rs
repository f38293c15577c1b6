//! KGQA evaluation: datasets, prompting, answer extraction and metrics.

pub mod answers;
pub mod dataset;
pub mod metrics;
pub mod prompt;
pub mod run;
pub mod trace;

pub use answers::extract_answers;
pub use dataset::{load_dataset, parse_dataset, DatasetEntry, QaInstance};
pub use metrics::{hits_at_1, ill_triplet_rate, normalize_answer, triplet_f1};
pub use prompt::{PromptTemplate, ANSWER_PRIMING, DEFAULT_TEMPLATE};
pub use run::{decode_instance, run_dataset, score_trace, AggregateReport, RunOptions, ScorerSpec};
pub use trace::{DecodeTrace, InstanceMetrics, TraceCandidate, TRACE_SCHEMA};

/// Renders the prompt for one instance.
pub fn build_prompt(instance: &QaInstance, template: &PromptTemplate) -> crate::error::Result<String> {
    template.render(&instance.graph, &instance.question)
}
