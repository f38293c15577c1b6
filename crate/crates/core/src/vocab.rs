//! Token ids, vocabularies and the tokenizer contract.
//!
//! The engine only ever sees token ids. A [`Tokenizer`] turns text into ids
//! and back; [`WhitespaceTokenizer`] is the reference adapter (one id per
//! whitespace-delimited symbol). Hosts that tokenize on their own side can
//! hand over finished triplet encodings through [`PretokenizedTriplets`].

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Triplet, FIELD_DELIMITER};

pub type TokenId = u32;
pub type TokenSeq = Vec<TokenId>;

pub const T_BOS_SURFACE: &str = "<";
pub const T_EOS_SURFACE: &str = ">";
pub const EOS_SURFACE: &str = "<eos>";

/// Ids of the three markers that drive the phase machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpecialTokens {
    /// Opens a triplet and switches decoding to the constrained phase.
    pub t_bos: TokenId,
    /// Closes a triplet.
    pub t_eos: TokenId,
    /// Ends the whole generation.
    pub eos: TokenId,
}

impl SpecialTokens {
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        for (name, id) in [("t_bos", self.t_bos), ("t_eos", self.t_eos), ("eos", self.eos)] {
            if id as usize >= vocab_size {
                return Err(Error::Vocabulary(format!(
                    "{name} id {id} outside vocabulary of size {vocab_size}"
                )));
            }
        }
        if self.t_bos == self.t_eos || self.t_bos == self.eos || self.t_eos == self.eos {
            return Err(Error::Vocabulary("special token ids must be distinct".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
    specials: SpecialTokens,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, specials: SpecialTokens) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Vocabulary("vocabulary is empty".into()));
        }
        if tokens.len() > TokenId::MAX as usize {
            return Err(Error::Vocabulary("too many tokens".into()));
        }
        specials.validate(tokens.len())?;
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if ids.insert(tok.clone(), i as TokenId).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token `{tok}`")));
            }
        }
        Ok(Self { tokens, ids, specials })
    }

    /// Vocabulary file: one token per line, line number is the id. The
    /// first three lines must be `<`, `>` and `<eos>`.
    pub fn from_lines(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        let reserved = [T_BOS_SURFACE, T_EOS_SURFACE, EOS_SURFACE];
        for (i, want) in reserved.iter().enumerate() {
            match tokens.get(i) {
                Some(got) if got == want => {}
                got => {
                    return Err(Error::Vocabulary(format!(
                        "line {} must be `{want}`, found {:?}",
                        i + 1,
                        got
                    )))
                }
            }
        }
        if let Some((i, _)) = tokens
            .iter()
            .enumerate()
            .find(|(_, t)| t.is_empty() || t.contains(char::is_whitespace))
        {
            return Err(Error::Vocabulary(format!(
                "line {}: tokens must be non-empty and contain no whitespace",
                i + 1
            )));
        }
        Self::new(tokens, SpecialTokens { t_bos: 0, t_eos: 1, eos: 2 })
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_lines(&std::fs::read_to_string(path)?)
    }

    pub fn to_lines(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn specials(&self) -> SpecialTokens {
        self.specials
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Grows a whitespace vocabulary from sample text. Ids are assigned in
/// first-seen order after the three reserved markers.
#[derive(Debug, Clone)]
pub struct VocabularyBuilder {
    tokens: Vec<String>,
    seen: HashMap<String, TokenId>,
}

impl Default for VocabularyBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl VocabularyBuilder {
    pub fn new() -> Self {
        let mut builder = Self { tokens: Vec::new(), seen: HashMap::new() };
        for tok in [T_BOS_SURFACE, T_EOS_SURFACE, EOS_SURFACE] {
            builder.add_token(tok);
        }
        builder
    }

    pub fn add_token(&mut self, token: &str) -> &mut Self {
        if !self.seen.contains_key(token) {
            self.seen.insert(token.to_string(), self.tokens.len() as TokenId);
            self.tokens.push(token.to_string());
        }
        self
    }

    pub fn add_text(&mut self, text: &str) -> &mut Self {
        for tok in text.split_whitespace() {
            self.add_token(tok);
        }
        self
    }

    pub fn add_triplet(&mut self, t: &Triplet) -> &mut Self {
        self.add_text(&t.linearize())
    }

    pub fn build(&self) -> Vocabulary {
        Vocabulary::new(self.tokens.clone(), SpecialTokens { t_bos: 0, t_eos: 1, eos: 2 })
            .expect("builder keeps tokens unique and reserves the markers")
    }
}

/// Text <-> id adapter. `decode(encode(text)) == text` must hold for every
/// text `encode` accepts.
pub trait Tokenizer {
    fn vocab_size(&self) -> usize;
    fn specials(&self) -> SpecialTokens;
    fn encode(&self, text: &str) -> Result<TokenSeq>;
    fn decode(&self, ids: &[TokenId]) -> Result<String>;
}

/// Collapses runs of whitespace to single spaces and trims the ends.
pub fn canonical_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// One token per whitespace-delimited symbol.
///
/// Only text in canonical whitespace form (see [`canonical_whitespace`]) is
/// encodable, which is what makes the round trip lossless.
#[derive(Debug, Clone)]
pub struct WhitespaceTokenizer {
    vocab: Vocabulary,
}

impl WhitespaceTokenizer {
    pub fn new(vocab: Vocabulary) -> Self {
        Self { vocab }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.size()
    }

    pub fn specials(&self) -> SpecialTokens {
        self.vocab.specials()
    }
}

impl Tokenizer for WhitespaceTokenizer {
    fn vocab_size(&self) -> usize {
        self.vocab.size()
    }

    fn specials(&self) -> SpecialTokens {
        self.vocab.specials()
    }

    fn encode(&self, text: &str) -> Result<TokenSeq> {
        if canonical_whitespace(text) != text {
            return Err(Error::Encode("text is not in canonical whitespace form".into()));
        }
        text.split(' ')
            .filter(|s| !s.is_empty())
            .map(|sym| {
                self.vocab
                    .id(sym)
                    .ok_or_else(|| Error::Encode(format!("unknown symbol `{sym}`")))
            })
            .collect()
    }

    fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let words = ids
            .iter()
            .map(|&id| {
                self.vocab
                    .token(id)
                    .ok_or(Error::TokenOutOfRange { id, size: self.vocab.size() })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(words.join(" "))
    }
}

/// Surface form of a serialized triplet: `< head -> relation -> tail >`.
pub fn triplet_surface(t: &Triplet) -> String {
    format!("{T_BOS_SURFACE} {} {T_EOS_SURFACE}", t.linearize())
}

/// Checks that `seq` is anchored: opens with t_bos, closes with t_eos, and
/// contains neither marker anywhere else.
pub fn check_anchored(seq: &[TokenId], specials: SpecialTokens) -> Result<()> {
    let n = seq.len();
    if n < 2 || seq[0] != specials.t_bos || seq[n - 1] != specials.t_eos {
        return Err(Error::InvalidTriplet(
            "serialization must start with the triplet-open marker and end with the triplet-close marker".into(),
        ));
    }
    let interior = &seq[1..n - 1];
    if interior.contains(&specials.t_bos) || interior.contains(&specials.t_eos) {
        return Err(Error::InvalidTriplet(
            "a field encodes to a triplet marker token".into(),
        ));
    }
    if interior.contains(&specials.eos) {
        return Err(Error::InvalidTriplet("a field encodes to the end-of-sequence token".into()));
    }
    Ok(())
}

pub fn serialize_triplet(tokenizer: &(impl Tokenizer + ?Sized), t: &Triplet) -> Result<TokenSeq> {
    let ids = tokenizer.encode(&triplet_surface(t))?;
    check_anchored(&ids, tokenizer.specials())?;
    Ok(ids)
}

pub fn parse_triplet(tokenizer: &(impl Tokenizer + ?Sized), seq: &[TokenId]) -> Result<Triplet> {
    let specials = tokenizer.specials();
    if seq.first() != Some(&specials.t_bos) || seq.last() != Some(&specials.t_eos) || seq.len() < 2 {
        return Err(Error::TripletSyntax("sequence is not delimited by triplet markers".into()));
    }
    let text = tokenizer.decode(seq)?;
    let interior = text
        .strip_prefix(T_BOS_SURFACE)
        .and_then(|s| s.strip_suffix(T_EOS_SURFACE))
        .ok_or_else(|| Error::TripletSyntax(format!("`{text}` lacks surface markers")))?
        .trim();
    let parts: Vec<&str> = interior.split(FIELD_DELIMITER).collect();
    match parts.as_slice() {
        [h, r, t] => Triplet::new(h, r, t),
        _ => Err(Error::TripletSyntax(format!(
            "expected 3 fields, found {} in `{interior}`",
            parts.len()
        ))),
    }
}

/// Source of triplet token encodings for trie construction.
pub trait TripletEncoder {
    fn vocab_size(&self) -> usize;
    fn specials(&self) -> SpecialTokens;
    fn encode_triplet(&self, t: &Triplet) -> Result<TokenSeq>;
}

impl<T: Tokenizer + ?Sized> TripletEncoder for T {
    fn vocab_size(&self) -> usize {
        Tokenizer::vocab_size(self)
    }

    fn specials(&self) -> SpecialTokens {
        Tokenizer::specials(self)
    }

    fn encode_triplet(&self, t: &Triplet) -> Result<TokenSeq> {
        serialize_triplet(self, t)
    }
}

/// Triplet encodings supplied up front by a host that owns the tokenizer.
#[derive(Debug, Clone)]
pub struct PretokenizedTriplets {
    specials: SpecialTokens,
    vocab_size: usize,
    encodings: HashMap<Triplet, TokenSeq>,
}

impl PretokenizedTriplets {
    pub fn new(specials: SpecialTokens, vocab_size: usize) -> Result<Self> {
        specials.validate(vocab_size)?;
        Ok(Self { specials, vocab_size, encodings: HashMap::new() })
    }

    pub fn insert(&mut self, t: Triplet, seq: TokenSeq) -> Result<()> {
        if let Some(&id) = seq.iter().find(|&&id| id as usize >= self.vocab_size) {
            return Err(Error::TokenOutOfRange { id, size: self.vocab_size });
        }
        check_anchored(&seq, self.specials)?;
        self.encodings.insert(t, seq);
        Ok(())
    }

}

impl TripletEncoder for PretokenizedTriplets {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn specials(&self) -> SpecialTokens {
        self.specials
    }

    fn encode_triplet(&self, t: &Triplet) -> Result<TokenSeq> {
        self.encodings
            .get(t)
            .cloned()
            .ok_or_else(|| Error::Encode(format!("no encoding supplied for {t}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tokenizer() -> WhitespaceTokenizer {
        let mut b = VocabularyBuilder::new();
        b.add_text("A -> r1 -> B r s Grand Bahama location.location.containedby Bahamas");
        WhitespaceTokenizer::new(b.build())
    }

    #[test]
    fn encode_counts_symbols() {
        let tok = tokenizer();
        assert_eq!(tok.encode("A -> r1 -> B").unwrap().len(), 5);
        assert!(tok.encode("").unwrap().is_empty());
        let ids = tok.encode("< A -> r1 -> B >").unwrap();
        assert_eq!(ids.len(), 7);
        assert_eq!(ids[0], tok.specials().t_bos);
        assert_eq!(ids[6], tok.specials().t_eos);
    }

    #[test]
    fn encode_rejects_unknown_and_noncanonical() {
        let tok = tokenizer();
        assert!(tok.encode("A  B").is_err());
        assert!(tok.encode(" A").is_err());
        assert!(tok.encode("unknown").is_err());
    }

    #[test]
    fn serialize_freebase_step() {
        let tok = tokenizer();
        let t = Triplet::new("Grand Bahama", "location.location.containedby", "Bahamas").unwrap();
        let ids = serialize_triplet(&tok, &t).unwrap();
        assert_eq!(
            tok.decode(&ids).unwrap(),
            "< Grand Bahama -> location.location.containedby -> Bahamas >"
        );
    }

    #[test]
    fn serialize_layout() {
        let tok = tokenizer();
        let v = tok.vocab();
        let t = Triplet::new("A", "r1", "B").unwrap();
        let ids = serialize_triplet(&tok, &t).unwrap();
        let arrow = v.id("->").unwrap();
        assert_eq!(
            ids,
            vec![0, v.id("A").unwrap(), arrow, v.id("r1").unwrap(), arrow, v.id("B").unwrap(), 1]
        );
    }

    #[test]
    fn serialize_rejects_marker_in_field() {
        let tok = tokenizer();
        let t = Triplet::new("A <", "r1", "B").unwrap();
        assert!(serialize_triplet(&tok, &t).is_err());
        let t = Triplet::new("A", "r1", "> B").unwrap();
        assert!(serialize_triplet(&tok, &t).is_err());
    }

    #[test]
    fn parse_rejects_wrong_arity() {
        let tok = tokenizer();
        let two = tok.encode("< A -> B >").unwrap();
        assert!(matches!(parse_triplet(&tok, &two), Err(Error::TripletSyntax(_))));
        let four = tok.encode("< A -> r -> s -> B >").unwrap();
        assert!(matches!(parse_triplet(&tok, &four), Err(Error::TripletSyntax(_))));
        let bare = tok.encode("A -> r -> B").unwrap();
        assert!(parse_triplet(&tok, &bare).is_err());
    }

    #[test]
    fn vocab_file_format() {
        let v = Vocabulary::from_lines("<\n>\n<eos>\nA\nB\n").unwrap();
        assert_eq!(v.size(), 5);
        assert_eq!(v.id("B"), Some(4));
        assert_eq!(Vocabulary::from_lines(&v.to_lines()).unwrap(), v);
        assert!(Vocabulary::from_lines(">\n<\n<eos>\n").is_err());
        assert!(Vocabulary::from_lines("<\n>\n<eos>\nA\nA\n").is_err());
    }

    #[test]
    fn specials_must_be_distinct() {
        let s = SpecialTokens { t_bos: 0, t_eos: 0, eos: 1 };
        assert!(s.validate(3).is_err());
        let s = SpecialTokens { t_bos: 0, t_eos: 1, eos: 5 };
        assert!(s.validate(3).is_err());
    }

    #[test]
    fn pretokenized_checks_anchoring() {
        let specials = SpecialTokens { t_bos: 0, t_eos: 1, eos: 2 };
        let mut p = PretokenizedTriplets::new(specials, 10).unwrap();
        let t = Triplet::new("A", "r", "B").unwrap();
        assert!(p.insert(t.clone(), vec![0, 3, 0, 1]).is_err());
        assert!(p.insert(t.clone(), vec![0, 3, 11, 1]).is_err());
        p.insert(t.clone(), vec![0, 3, 4, 5, 1]).unwrap();
        assert_eq!(p.encode_triplet(&t).unwrap(), vec![0, 3, 4, 5, 1]);
    }

    fn field() -> impl Strategy<Value = String> {
        proptest::collection::vec("[a-zA-Z0-9_.]{1,6}", 1..3).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn round_trip_and_anchoring(h in field(), r in field(), tl in field()) {
            let t = Triplet::new(&h, &r, &tl).unwrap();
            let mut b = VocabularyBuilder::new();
            b.add_triplet(&t);
            let tok = WhitespaceTokenizer::new(b.build());
            let ids = serialize_triplet(&tok, &t).unwrap();
            prop_assert_eq!(ids[0], tok.specials().t_bos);
            prop_assert_eq!(ids.iter().filter(|&&i| i == tok.specials().t_bos).count(), 1);
            prop_assert_eq!(parse_triplet(&tok, &ids).unwrap(), t);
        }
    }
}
