//! The language-model seam and the mock scorers used by tests and the CLI.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocabulary};

/// Next-token logits provider.
///
/// Implementations must return exactly `vocab_size()` finite values and be
/// deterministic for identical contexts.
pub trait LmScorer {
    fn vocab_size(&self) -> usize;
    fn next_logits(&self, context: &[TokenId]) -> Result<Vec<f64>>;
}

impl<S: LmScorer + ?Sized> LmScorer for &S {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_logits(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        (**self).next_logits(context)
    }
}

impl<S: LmScorer + ?Sized> LmScorer for Box<S> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_logits(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        (**self).next_logits(context)
    }
}

/// Calls the scorer and enforces its output contract.
pub(crate) fn checked_logits(scorer: &dyn LmScorer, context: &[TokenId]) -> Result<Vec<f64>> {
    let logits = scorer.next_logits(context)?;
    if logits.len() != scorer.vocab_size() {
        return Err(Error::Scorer(format!(
            "expected {} logits, got {}",
            scorer.vocab_size(),
            logits.len()
        )));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Scorer("scorer returned a non-finite logit".into()));
    }
    Ok(logits)
}

#[derive(Debug, Clone, PartialEq)]
struct Rule {
    suffix: Vec<TokenId>,
    logits: Vec<(TokenId, f64)>,
}

/// Suffix-keyed logit table.
///
/// The rule with the longest suffix matching the end of the context decides
/// the whole vector: listed tokens get their logit, every other token gets
/// `default`. Equal-length matches resolve to the rule listed first. An
/// empty suffix matches every context.
#[derive(Debug, Clone, PartialEq)]
pub struct TableScorer {
    vocab_size: usize,
    default: f64,
    rules: Vec<Rule>,
}

impl TableScorer {
    pub fn uniform(vocab_size: usize) -> Self {
        Self { vocab_size, default: 0.0, rules: Vec::new() }
    }

    pub fn with_default(mut self, default: f64) -> Self {
        self.default = default;
        self
    }

    pub fn rule(mut self, suffix: Vec<TokenId>, logits: Vec<(TokenId, f64)>) -> Result<Self> {
        for &(id, x) in &logits {
            if id as usize >= self.vocab_size {
                return Err(Error::TokenOutOfRange { id, size: self.vocab_size });
            }
            if !x.is_finite() {
                return Err(Error::Scorer(format!("logit for token {id} is not finite")));
            }
        }
        self.rules.push(Rule { suffix, logits });
        Ok(self)
    }

    fn matching_rule(&self, context: &[TokenId]) -> Option<&Rule> {
        let mut best: Option<&Rule> = None;
        for rule in &self.rules {
            if context.ends_with(&rule.suffix)
                && best.is_none_or(|b| rule.suffix.len() > b.suffix.len())
            {
                best = Some(rule);
            }
        }
        best
    }
}

impl LmScorer for TableScorer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logits(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        let mut logits = vec![self.default; self.vocab_size];
        if let Some(rule) = self.matching_rule(context) {
            for &(id, x) in &rule.logits {
                logits[id as usize] = x;
            }
        }
        Ok(logits)
    }
}

/// One rule of a [`TableSpec`]: `suffix` is whitespace-separated token text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSpec {
    #[serde(default)]
    pub suffix: String,
    pub logits: BTreeMap<String, f64>,
}

/// JSON form of a table scorer, written in token strings.
///
/// ```json
/// {"default": 0.0,
///  "rules": [{"suffix": "question.", "logits": {"<": 10.0}}],
///  "instances": {"q7": {"rules": []}}}
/// ```
///
/// `instances` optionally overrides the table per dataset instance id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    #[serde(default)]
    pub default: f64,
    #[serde(default)]
    pub rules: Vec<RuleSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub instances: BTreeMap<String, TableSpec>,
}

impl TableSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// The table to use for `instance_id`.
    pub fn for_instance(&self, instance_id: &str) -> &TableSpec {
        self.instances.get(instance_id).unwrap_or(self)
    }

    /// Every token string mentioned by this table and its overrides.
    pub fn tokens(&self) -> Vec<String> {
        let mut out = Vec::new();
        for rule in &self.rules {
            out.extend(rule.suffix.split_whitespace().map(str::to_string));
            out.extend(rule.logits.keys().cloned());
        }
        for table in self.instances.values() {
            out.extend(table.tokens());
        }
        out
    }

    pub fn resolve(&self, vocab: &Vocabulary) -> Result<TableScorer> {
        let lookup = |tok: &str| {
            vocab
                .id(tok)
                .ok_or_else(|| Error::Scorer(format!("table mentions unknown token `{tok}`")))
        };
        let mut scorer = TableScorer::uniform(vocab.size()).with_default(self.default);
        for rule in &self.rules {
            let suffix = rule.suffix.split_whitespace().map(lookup).collect::<Result<Vec<_>>>()?;
            let logits = rule
                .logits
                .iter()
                .map(|(tok, &x)| Ok((lookup(tok)?, x)))
                .collect::<Result<Vec<_>>>()?;
            scorer = scorer.rule(suffix, logits)?;
        }
        Ok(scorer)
    }
}

/// Replays a fixed token script. The script position is the number of
/// context tokens past `offset` (normally the prompt length); once the
/// script is exhausted the scorer asks for `eos`.
#[derive(Debug, Clone)]
pub struct ScriptedScorer {
    vocab_size: usize,
    script: Vec<TokenId>,
    offset: usize,
    eos: TokenId,
}

impl ScriptedScorer {
    pub const HIT: f64 = 10.0;

    pub fn new(vocab_size: usize, script: Vec<TokenId>, offset: usize, eos: TokenId) -> Result<Self> {
        if let Some(&id) = script.iter().chain([&eos]).find(|&&id| id as usize >= vocab_size) {
            return Err(Error::TokenOutOfRange { id, size: vocab_size });
        }
        Ok(Self { vocab_size, script, offset, eos })
    }
}

impl LmScorer for ScriptedScorer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logits(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        let pos = context.len().saturating_sub(self.offset);
        let target = self.script.get(pos).copied().unwrap_or(self.eos);
        let mut logits = vec![0.0; self.vocab_size];
        logits[target as usize] = Self::HIT;
        Ok(logits)
    }
}

/// Pseudo-random logits derived from a hash of `(seed, context)`:
/// uniform in `[-scale, scale]` plus fixed per-token boosts.
#[derive(Debug, Clone)]
pub struct RandomScorer {
    vocab_size: usize,
    seed: u64,
    scale: f64,
    boosts: Vec<(TokenId, f64)>,
}

impl RandomScorer {
    pub fn new(vocab_size: usize, seed: u64) -> Self {
        Self { vocab_size, seed, scale: 3.0, boosts: Vec::new() }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_boost(mut self, id: TokenId, boost: f64) -> Self {
        self.boosts.push((id, boost));
        self
    }

    fn context_hash(&self, context: &[TokenId]) -> u64 {
        // FNV-1a, stable across platforms and releases.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed;
        for &id in context {
            for b in id.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

impl LmScorer for RandomScorer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logits(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.context_hash(context));
        let mut logits: Vec<f64> = (0..self.vocab_size)
            .map(|_| rng.gen_range(-self.scale..=self.scale))
            .collect();
        for &(id, boost) in &self.boosts {
            if let Some(x) = logits.get_mut(id as usize) {
                *x += boost;
            }
        }
        Ok(logits)
    }
}
