//! Exact-posterior denoiser over an explicit joint distribution.
//!
//! Holds a weighted support of clean sequences and answers queries with the
//! true conditional `p(x0_i | visible tokens)` by direct enumeration.
//! Intended for small state spaces where closed-form checks are possible.

use super::{Denoiser, DenoiserOutput};
use crate::error::{CoreError, Result};
use crate::vocab::{TokenSequence, Vocabulary};

const MAX_STATE_SPACE: usize = 10_000;

pub struct OracleDenoiser {
    support: Vec<(TokenSequence, f64)>,
    vocab: Vocabulary,
    len: usize,
}

impl OracleDenoiser {
    /// `support` must be non-empty, same-length clean sequences with
    /// positive weights. Weights are normalized internally.
    pub fn new(support: Vec<(TokenSequence, f64)>, vocab: Vocabulary) -> Result<Self> {
        if support.is_empty() {
            return Err(CoreError::InvalidInput("oracle support must be non-empty".into()));
        }
        let len = support[0].0.len();
        if len == 0 {
            return Err(CoreError::InvalidInput("oracle sequences must be non-empty".into()));
        }
        let space = (vocab.size() as usize).checked_pow(len as u32).unwrap_or(usize::MAX);
        if space > MAX_STATE_SPACE {
            return Err(CoreError::StateSpaceTooLarge(format!(
                "{}^{len} joint configurations exceed {MAX_STATE_SPACE}",
                vocab.size()
            )));
        }
        let mut total = 0.0;
        for (seq, w) in &support {
            if seq.len() != len {
                return Err(CoreError::InvalidInput(
                    "oracle support sequences must share one length".into(),
                ));
            }
            vocab.validate_content(seq)?;
            if !(*w > 0.0) {
                return Err(CoreError::InvalidInput("oracle weights must be positive".into()));
            }
            total += w;
        }
        let support = support
            .into_iter()
            .map(|(s, w)| (s, w / total))
            .collect();
        Ok(Self { support, vocab, len })
    }

    /// Exact posterior over the token at `position` given the visible
    /// entries of `observed`.
    pub fn posterior(&self, observed: &TokenSequence, position: usize) -> Result<Vec<f64>> {
        let mask = self.vocab.mask_id();
        let mut row = vec![0.0; self.vocab.size() as usize];
        let mut mass = 0.0;
        for (seq, w) in &self.support {
            let consistent = observed
                .tokens()
                .iter()
                .zip(seq.tokens())
                .all(|(&o, &s)| o == mask || o == s);
            if consistent {
                row[seq.get(position) as usize] += w;
                mass += w;
            }
        }
        if mass <= 0.0 {
            return Err(CoreError::InvalidInput(
                "observed tokens are inconsistent with the oracle support".into(),
            ));
        }
        for p in &mut row {
            *p /= mass;
        }
        Ok(row)
    }

    pub fn support(&self) -> &[(TokenSequence, f64)] {
        &self.support
    }
}

impl Denoiser for OracleDenoiser {
    fn predict(&self, observed: &TokenSequence) -> Result<DenoiserOutput> {
        if observed.len() != self.len {
            return Err(CoreError::InvalidSequence(format!(
                "oracle expects length {}, got {}",
                self.len,
                observed.len()
            )));
        }
        self.vocab.validate(observed)?;
        let mut rows = Vec::new();
        for pos in observed.masked_positions(self.vocab.mask_id()) {
            rows.push((pos, self.posterior(observed, pos)?));
        }
        Ok(DenoiserOutput::new(rows))
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn concurrent_callable(&self) -> bool {
        true
    }
}
