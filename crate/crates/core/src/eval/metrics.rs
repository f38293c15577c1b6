use std::collections::HashSet;

use unicode_normalization::UnicodeNormalization;

use crate::chain::{validate_chain, Chain};
use crate::graph::{KnowledgeGraph, Triplet};

/// Case-folded, NFC, trimmed, inner whitespace collapsed to single spaces.
pub fn normalize_answer(s: &str) -> String {
    let nfc: String = s.nfc().collect();
    nfc.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// 1.0 when the first prediction matches any gold answer, else 0.0.
pub fn hits_at_1(predicted: &[String], gold: &[String]) -> f64 {
    let Some(first) = predicted.first() else {
        return 0.0;
    };
    let first = normalize_answer(first);
    if gold.iter().any(|g| normalize_answer(g) == first) {
        1.0
    } else {
        0.0
    }
}

fn triplet_key(t: &Triplet) -> (String, String, String) {
    (normalize_answer(t.head()), normalize_answer(t.relation()), normalize_answer(t.tail()))
}

/// Set-level F1 between predicted and gold steps. Duplicated predictions
/// count once.
pub fn triplet_f1(predicted: &Chain, gold: &[Triplet]) -> f64 {
    let pred: HashSet<_> = predicted.steps.iter().map(triplet_key).collect();
    let gold: HashSet<_> = gold.iter().map(triplet_key).collect();
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let overlap = pred.intersection(&gold).count() as f64;
    if overlap == 0.0 {
        return 0.0;
    }
    let precision = overlap / pred.len() as f64;
    let recall = overlap / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Fraction of steps that break well-formedness; 0 for an empty chain.
pub fn ill_triplet_rate(predicted: &Chain, graph: &KnowledgeGraph, query_entities: &[String]) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    let report = validate_chain(predicted, graph, query_entities);
    report.flagged_steps() as f64 / predicted.len() as f64
}
