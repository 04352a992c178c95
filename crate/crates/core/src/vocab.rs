//! Token vocabulary, sequences, and the string lexicon used by the
//! synthetic corpus.
//!
//! Content tokens are ids `0..size`; the mask sentinel is a dedicated id
//! outside that range. Sequences never contain ids above `mask_id`.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

pub type TokenId = u32;

/// Closed vocabulary of content tokens plus one absorbing mask sentinel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    size: u32,
    mask_id: u32,
}

impl Vocabulary {
    /// `size` content tokens; the mask id is `size` itself.
    pub fn new(size: u32) -> Result<Self> {
        if size == 0 {
            return Err(CoreError::InvalidInput("vocabulary size must be >= 1".into()));
        }
        Ok(Self { size, mask_id: size })
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    pub fn is_content(&self, id: TokenId) -> bool {
        id < self.size
    }

    /// All ids must be content tokens or the mask sentinel.
    pub fn validate(&self, seq: &TokenSequence) -> Result<()> {
        for (i, &t) in seq.tokens().iter().enumerate() {
            if t > self.mask_id {
                return Err(CoreError::InvalidSequence(format!(
                    "token id {t} at position {i} exceeds mask id {}",
                    self.mask_id
                )));
            }
        }
        Ok(())
    }

    /// Like `validate`, but additionally rejects the mask sentinel.
    pub fn validate_content(&self, seq: &TokenSequence) -> Result<()> {
        for (i, &t) in seq.tokens().iter().enumerate() {
            if !self.is_content(t) {
                return Err(CoreError::InvalidSequence(format!(
                    "position {i} holds id {t}, expected a content token below {}",
                    self.size
                )));
            }
        }
        Ok(())
    }
}

/// Fixed-length token id sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence(Vec<TokenId>);

impl TokenSequence {
    pub fn new(tokens: Vec<TokenId>) -> Self {
        Self(tokens)
    }

    pub fn filled(len: usize, id: TokenId) -> Self {
        Self(vec![id; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.0
    }

    pub fn tokens_mut(&mut self) -> &mut [TokenId] {
        &mut self.0
    }

    pub fn get(&self, i: usize) -> TokenId {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, id: TokenId) {
        self.0[i] = id;
    }

    /// Positions equal to `mask_id`, ascending.
    pub fn masked_positions(&self, mask_id: TokenId) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == mask_id)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count_masked(&self, mask_id: TokenId) -> usize {
        self.0.iter().filter(|&&t| t == mask_id).count()
    }

    pub fn concat(&self, other: &TokenSequence) -> TokenSequence {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        TokenSequence(v)
    }

    pub fn slice(&self, from: usize, to: usize) -> TokenSequence {
        TokenSequence(self.0[from..to].to_vec())
    }
}

impl From<Vec<TokenId>> for TokenSequence {
    fn from(v: Vec<TokenId>) -> Self {
        Self(v)
    }
}

/// Bidirectional token-id / string table with whitespace tokenization.
///
/// Insertion order fixes the id assignment, so two lexicons built from the
/// same token stream are identical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    tokens: Vec<String>,
    #[serde(skip)]
    index: std::collections::HashMap<String, TokenId>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self { tokens: Vec::new(), index: Default::default() }
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let mut lex = Self::new();
        for t in tokens {
            lex.intern(&t);
        }
        lex
    }

    /// Rebuild the string->id index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as TokenId))
            .collect();
    }

    pub fn intern(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Vocabulary whose content tokens are exactly the interned strings.
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::new(self.tokens.len() as u32)
    }

    /// Whitespace-split `text` and map each piece to its id.
    /// Unknown tokens are a data error.
    pub fn tokenize(&self, text: &str) -> Result<TokenSequence> {
        let mut ids = Vec::new();
        for piece in text.split_whitespace() {
            let id = self
                .id(piece)
                .ok_or_else(|| CoreError::Data(format!("unknown token {piece:?}")))?;
            ids.push(id);
        }
        Ok(TokenSequence::new(ids))
    }

    /// Space-joined surface form. Mask ids (or any id outside the table)
    /// render as `<mask>`.
    pub fn render(&self, seq: &TokenSequence) -> String {
        seq.tokens()
            .iter()
            .map(|&t| self.token(t).unwrap_or("<mask>"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_rejects_zero_size() {
        assert!(Vocabulary::new(0).is_err());
    }

    #[test]
    fn mask_id_is_outside_content_range() {
        let v = Vocabulary::new(7).unwrap();
        assert_eq!(v.mask_id(), 7);
        assert!(v.is_content(6));
        assert!(!v.is_content(7));
    }

    #[test]
    fn validate_flags_out_of_range_ids() {
        let v = Vocabulary::new(3).unwrap();
        let ok = TokenSequence::new(vec![0, 2, 3]);
        assert!(v.validate(&ok).is_ok());
        assert!(v.validate_content(&ok).is_err());
        let bad = TokenSequence::new(vec![0, 4]);
        assert!(v.validate(&bad).is_err());
    }

    #[test]
    fn lexicon_round_trips_text() {
        let mut lex = Lexicon::new();
        for t in ["a", "=", "5", ";"] {
            lex.intern(t);
        }
        let seq = lex.tokenize("a = 5 ;").unwrap();
        assert_eq!(lex.render(&seq), "a = 5 ;");
        assert!(lex.tokenize("unknown").is_err());
    }

    #[test]
    fn lexicon_index_survives_serde() {
        let mut lex = Lexicon::new();
        lex.intern("x");
        lex.intern("y");
        let json = serde_json::to_string(&lex).unwrap();
        let mut back: Lexicon = serde_json::from_str(&json).unwrap();
        back.rebuild_index();
        assert_eq!(back.id("y"), Some(1));
    }
}
