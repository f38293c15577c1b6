use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;

pub const GRAPH_SLOT: &str = "{graph}";
pub const QUESTION_SLOT: &str = "{question}";

/// Line that primes the model to start its step-by-step chain.
pub const ANSWER_PRIMING: &str = "Answer: Let's break down the steps to find the answer to the question.";

/// Three-shot KGQA prompt with `{graph}` and `{question}` slots.
pub const DEFAULT_TEMPLATE: &str = include_str!("../../prompts/default_template.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(DEFAULT_TEMPLATE).expect("bundled template is valid")
    }
}

impl PromptTemplate {
    /// Each slot must appear exactly once.
    pub fn new(text: &str) -> Result<Self> {
        for slot in [GRAPH_SLOT, QUESTION_SLOT] {
            match text.matches(slot).count() {
                1 => {}
                0 => return Err(Error::Template(format!("missing slot {slot}"))),
                n => return Err(Error::Template(format!("slot {slot} appears {n} times"))),
            }
        }
        Ok(Self { text: text.to_string() })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Fills both slots; the priming line is appended when the template
    /// does not already end with it.
    pub fn render(&self, graph: &KnowledgeGraph, question: &str) -> Result<String> {
        let linearized = graph.linearize()?;
        let g = self.text.find(GRAPH_SLOT).expect("validated");
        let q = self.text.find(QUESTION_SLOT).expect("validated");
        let mut parts = [(g, GRAPH_SLOT.len(), linearized.as_str()), (q, QUESTION_SLOT.len(), question)];
        parts.sort_by_key(|p| p.0);

        let mut out = String::with_capacity(self.text.len() + linearized.len() + question.len());
        let mut cursor = 0;
        for (pos, len, value) in parts {
            out.push_str(&self.text[cursor..pos]);
            out.push_str(value);
            cursor = pos + len;
        }
        out.push_str(&self.text[cursor..]);

        let trimmed_len = out.trim_end().len();
        out.truncate(trimmed_len);
        if !out.ends_with(ANSWER_PRIMING) {
            out.push_str("\n\n");
            out.push_str(ANSWER_PRIMING);
        }
        Ok(out)
    }
}
