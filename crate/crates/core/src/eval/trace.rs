use serde::{Deserialize, Serialize};

use crate::chain::Chain;

pub const TRACE_SCHEMA: &str = "dog_trace_v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCandidate {
    pub chain: Chain,
    pub chain_score: f64,
    pub text: String,
    pub predicted_answers: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hits_at_1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triplet_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ill_triplet_rate: Option<f64>,
}

/// Everything recorded for one dataset instance. Candidates are ordered by
/// descending chain score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub schema: String,
    pub instance_id: String,
    pub candidates: Vec<TraceCandidate>,
    #[serde(default)]
    pub metrics: InstanceMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl DecodeTrace {
    pub fn new(instance_id: impl Into<String>, candidates: Vec<TraceCandidate>) -> Self {
        Self {
            schema: TRACE_SCHEMA.to_string(),
            instance_id: instance_id.into(),
            candidates,
            metrics: InstanceMetrics::default(),
            error: None,
        }
    }

    pub fn failed(instance_id: impl Into<String>, error: impl ToString) -> Self {
        Self { error: Some(error.to_string()), ..Self::new(instance_id, Vec::new()) }
    }

    /// Answers of the best candidate that produced any, walking down the beam.
    pub fn prediction(&self) -> &[String] {
        self.candidates
            .iter()
            .find(|c| !c.predicted_answers.is_empty())
            .map(|c| c.predicted_answers.as_slice())
            .unwrap_or(&[])
    }

    /// Chain of the candidate that supplied [`Self::prediction`], or of the
    /// top candidate when none did.
    pub fn predicted_chain(&self) -> Option<&Chain> {
        self.candidates
            .iter()
            .find(|c| !c.predicted_answers.is_empty())
            .or_else(|| self.candidates.first())
            .map(|c| &c.chain)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }
}
