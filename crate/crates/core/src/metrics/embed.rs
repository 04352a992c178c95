//! Sequence embeddings for the semantic-similarity metric.

use crate::error::{CoreError, Result};
use crate::vocab::{TokenSequence, Vocabulary};

/// Maps a token sequence to a fixed-dimension real vector.
///
/// Implementations must be deterministic and must return a non-zero
/// vector for any non-empty input.
pub trait EmbeddingFunction {
    fn embed(&self, seq: &TokenSequence) -> Vec<f64>;
    fn dim(&self) -> usize;
}

/// Reference embedding: token-multiset count vector over the vocabulary.
///
/// Mask tokens are ignored so partially masked inputs embed to the counts
/// of their visible content.
#[derive(Debug, Clone)]
pub struct BagOfTokens {
    vocab: Vocabulary,
}

impl BagOfTokens {
    pub fn new(vocab: Vocabulary) -> Self {
        Self { vocab }
    }
}

impl EmbeddingFunction for BagOfTokens {
    fn embed(&self, seq: &TokenSequence) -> Vec<f64> {
        let mut counts = vec![0.0; self.vocab.size() as usize];
        for &tok in seq.tokens() {
            if tok != self.vocab.mask_id() {
                if let Some(slot) = counts.get_mut(tok as usize) {
                    *slot += 1.0;
                }
            }
        }
        counts
    }

    fn dim(&self) -> usize {
        self.vocab.size() as usize
    }
}

/// Cosine of two equal-length vectors. Errors on a zero-norm side.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CoreError::InvalidInput(format!(
            "embedding dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(CoreError::InvalidInput(
            "zero-norm embedding in cosine similarity".into(),
        ));
    }
    Ok(dot / (na * nb))
}
