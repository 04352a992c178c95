//! Denoiser interface and the two reference implementations.
//!
//! A denoiser maps a partially masked sequence to one categorical
//! distribution over content tokens per masked position. Visible positions
//! get no row. Implementations must be deterministic functions of their
//! input; all sampling happens in the reverse dynamics, not here.

mod corpus;
mod oracle;
mod tabular;

pub use corpus::{
    build_lexicon, generate_corpus, CorpusParams, CorpusRecord, FaultKind, SyntheticProblem,
    CHAIN_LEN, QUERY_LEN,
};
pub use oracle::OracleDenoiser;
pub use tabular::{fit_tabular, TabularDenoiser};

use crate::error::Result;
use crate::vocab::{TokenSequence, Vocabulary};
use std::sync::atomic::{AtomicU64, Ordering};

/// Per-position categorical outputs for the masked positions of one query.
/// Rows are kept sorted by position.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserOutput {
    rows: Vec<(usize, Vec<f64>)>,
}

impl DenoiserOutput {
    pub fn new(mut rows: Vec<(usize, Vec<f64>)>) -> Self {
        rows.sort_by_key(|(p, _)| *p);
        Self { rows }
    }

    pub fn empty() -> Self {
        Self { rows: Vec::new() }
    }

    pub fn rows(&self) -> &[(usize, Vec<f64>)] {
        &self.rows
    }

    pub fn row(&self, position: usize) -> Option<&[f64]> {
        self.rows
            .binary_search_by_key(&position, |(p, _)| *p)
            .ok()
            .map(|i| self.rows[i].1.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub trait Denoiser {
    /// Distributions for every masked position of `observed`.
    fn predict(&self, observed: &TokenSequence) -> Result<DenoiserOutput>;

    fn vocab(&self) -> &Vocabulary;

    /// Whether concurrent `predict` calls are safe. Callers that fan out
    /// across threads must serialize access when this is false.
    fn concurrent_callable(&self) -> bool {
        false
    }
}

/// Decorator that counts `predict` calls; used for cost accounting.
pub struct CountingDenoiser<'a> {
    inner: &'a dyn Denoiser,
    calls: AtomicU64,
}

impl<'a> CountingDenoiser<'a> {
    pub fn new(inner: &'a dyn Denoiser) -> Self {
        Self { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }
}

impl Denoiser for CountingDenoiser<'_> {
    fn predict(&self, observed: &TokenSequence) -> Result<DenoiserOutput> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.predict(observed)
    }

    fn vocab(&self) -> &Vocabulary {
        self.inner.vocab()
    }

    fn concurrent_callable(&self) -> bool {
        self.inner.concurrent_callable()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_sorted_and_addressable() {
        let out = DenoiserOutput::new(vec![(5, vec![1.0]), (2, vec![0.5, 0.5])]);
        assert_eq!(out.rows()[0].0, 2);
        assert!(out.row(5).is_some());
        assert!(out.row(3).is_none());
    }
}
