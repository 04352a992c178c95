//! The six consistency sub-metrics and their weighted composite.
//!
//! All operations here are pure. Sequence-level metrics take rendered
//! strings where the definition is textual (numbers, answers, characters)
//! and token sequences where it is positional.

mod embed;
mod extract;
mod text;

pub use embed::{cosine_similarity, BagOfTokens, EmbeddingFunction};
pub use extract::{AnswerExtractor, Extraction, ExtractionTier, TaskKind};
pub use text::{canonical_number, levenshtein, scan_numbers};

use crate::diffusion::MaskPattern;
use crate::error::{CoreError, Result};
use crate::vocab::TokenSequence;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

const NUMBER_EPS: f64 = 1e-9;

/// The six per-repetition component scores, each in [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub s_tok: f64,
    pub s_sem: f64,
    pub s_num: f64,
    pub s_ans: f64,
    pub s_char: f64,
    pub s_conf: f64,
}

impl Components {
    pub const NAMES: [&'static str; 6] = ["s_tok", "s_sem", "s_num", "s_ans", "s_char", "s_conf"];

    pub fn perfect() -> Self {
        Self { s_tok: 1.0, s_sem: 1.0, s_num: 1.0, s_ans: 1.0, s_char: 1.0, s_conf: 1.0 }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.s_tok, self.s_sem, self.s_num, self.s_ans, self.s_char, self.s_conf]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self { s_tok: v[0], s_sem: v[1], s_num: v[2], s_ans: v[3], s_char: v[4], s_conf: v[5] }
    }

    /// Arithmetic mean of the six components.
    pub fn mean(&self) -> f64 {
        self.as_array().iter().sum::<f64>() / 6.0
    }
}

/// Non-negative weights over the six components.
///
/// Loadable from a JSON document with exactly the keys
/// `s_tok, s_sem, s_num, s_ans, s_char, s_conf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightProfile {
    pub s_tok: f64,
    pub s_sem: f64,
    pub s_num: f64,
    pub s_ans: f64,
    pub s_char: f64,
    pub s_conf: f64,
}

impl WeightProfile {
    /// Uniform weights summing to 1.
    pub fn uniform() -> Self {
        let w = 1.0 / 6.0;
        Self { s_tok: w, s_sem: w, s_num: w, s_ans: w, s_char: w, s_conf: w }
    }

    /// All weight on a single component, by index into [`Components::NAMES`].
    pub fn single(index: usize) -> Self {
        let mut v = [0.0; 6];
        v[index] = 1.0;
        Self::from_array(v)
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.s_tok, self.s_sem, self.s_num, self.s_ans, self.s_char, self.s_conf]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self { s_tok: v[0], s_sem: v[1], s_num: v[2], s_ans: v[3], s_char: v[4], s_conf: v[5] }
    }

    pub fn total(&self) -> f64 {
        self.as_array().iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in Components::NAMES.iter().zip(self.as_array()) {
            if !w.is_finite() || w < 0.0 {
                return Err(CoreError::InvalidInput(format!(
                    "weight {name} must be finite and non-negative, got {w}"
                )));
            }
        }
        Ok(())
    }

    /// Rescaled so the weights sum to 1. Errors when all weights are zero.
    pub fn normalized(&self) -> Result<Self> {
        self.validate()?;
        let total = self.total();
        if total == 0.0 {
            return Err(CoreError::InvalidInput("all weights are zero".into()));
        }
        let v = self.as_array().map(|w| w / total);
        Ok(Self::from_array(v))
    }
}

impl Default for WeightProfile {
    fn default() -> Self {
        Self::uniform()
    }
}

/// One scored reconstruction: the components and their weighted combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BmcScore {
    pub components: Components,
    pub composite: f64,
}

impl BmcScore {
    pub fn new(components: Components, weights: &WeightProfile) -> Result<Self> {
        Ok(Self { components, composite: composite(&components, weights)? })
    }
}

/// Weighted linear combination of the components. Errors on negative weight.
pub fn composite(components: &Components, weights: &WeightProfile) -> Result<f64> {
    weights.validate()?;
    Ok(components
        .as_array()
        .iter()
        .zip(weights.as_array())
        .map(|(s, w)| s * w)
        .sum())
}

/// Fraction of masked positions reconstructed exactly.
///
/// Errors on length mismatch or an empty mask set so callers decide how a
/// no-op perturbation scores instead of getting a silent 1.0.
pub fn token_accuracy(
    x0: &TokenSequence,
    x_hat: &TokenSequence,
    pattern: &MaskPattern,
) -> Result<f64> {
    if x0.len() != x_hat.len() || x0.len() != pattern.len() {
        return Err(CoreError::InvalidInput(format!(
            "token_accuracy length mismatch: x0={}, x_hat={}, pattern={}",
            x0.len(),
            x_hat.len(),
            pattern.len()
        )));
    }
    let masked = pattern.masked_indices();
    if masked.is_empty() {
        return Err(CoreError::NoMaskedPositions(
            "token accuracy over an empty mask set".into(),
        ));
    }
    let hits = masked
        .iter()
        .filter(|&&i| x0.tokens()[i] == x_hat.tokens()[i])
        .count();
    Ok(hits as f64 / masked.len() as f64)
}

/// Cosine similarity of the two sequence embeddings, clamped to [0,1].
pub fn semantic_similarity(
    x0: &TokenSequence,
    x_hat: &TokenSequence,
    embed: &dyn EmbeddingFunction,
) -> Result<f64> {
    if x0.is_empty() || x_hat.is_empty() {
        return Err(CoreError::InvalidSequence(
            "semantic similarity needs non-empty sequences".into(),
        ));
    }
    let cos = cosine_similarity(&embed.embed(x0), &embed.embed(x_hat))?;
    Ok(cos.clamp(0.0, 1.0))
}

fn number_multiset(text: &str) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for n in scan_numbers(text) {
        *counts.entry(n).or_insert(0) += 1;
    }
    counts
}

/// Multiset recall of numbers in the reconstruction against the original,
/// |N(x0) ∩ N(x_hat)| / (|N(x0)| + 1e-9), optionally multiplied by the
/// matching precision term. A numberless original scores 0 by this
/// epsilon convention, identity included.
pub fn number_retention(x0_text: &str, x_hat_text: &str, precision_penalty: bool) -> f64 {
    let orig = number_multiset(x0_text);
    let recon = number_multiset(x_hat_text);
    let n_orig: usize = orig.values().sum();
    let n_recon: usize = recon.values().sum();
    let common: usize = orig
        .iter()
        .map(|(num, &c)| c.min(recon.get(num).copied().unwrap_or(0)))
        .sum();
    let recall = common as f64 / (n_orig as f64 + NUMBER_EPS);
    if precision_penalty {
        recall * (common as f64 / (n_recon as f64 + NUMBER_EPS))
    } else {
        recall
    }
}

/// Why a final-answer comparison produced its score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchReason {
    Matched,
    Mismatch,
    MissingOriginal,
    MissingReconstruction,
    MissingBoth,
}

/// Binary answer-match outcome with its diagnostic reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerMatch {
    pub score: f64,
    pub reason: MatchReason,
    pub original: Option<Extraction>,
    pub reconstructed: Option<Extraction>,
}

/// 1 iff both texts yield an extractable answer and the canonical forms
/// are equal; any extraction failure scores 0 with the reason recorded.
pub fn final_answer_match(
    x0_text: &str,
    x_hat_text: &str,
    extractor: &AnswerExtractor,
) -> AnswerMatch {
    let original = extractor.extract(x0_text);
    let reconstructed = extractor.extract(x_hat_text);
    let (score, reason) = match (&original, &reconstructed) {
        (Some(a), Some(b)) if a.answer == b.answer => (1.0, MatchReason::Matched),
        (Some(_), Some(_)) => (0.0, MatchReason::Mismatch),
        (None, Some(_)) => (0.0, MatchReason::MissingOriginal),
        (Some(_), None) => (0.0, MatchReason::MissingReconstruction),
        (None, None) => (0.0, MatchReason::MissingBoth),
    };
    AnswerMatch { score, reason, original, reconstructed }
}

/// Normalized character similarity of the rendered strings,
/// 1 − lev(a,b) / max(|a|,|b|). Two empty strings score 1.
pub fn char_similarity(a: &str, b: &str) -> f64 {
    let la = a.chars().count();
    let lb = b.chars().count();
    let max_len = la.max(lb);
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / max_len as f64
}

/// Mean of the per-step confidences recorded during reconstruction.
pub fn intrinsic_confidence(step_confidences: &[f64]) -> Result<f64> {
    if step_confidences.is_empty() {
        return Err(CoreError::InvalidInput(
            "intrinsic_confidence requires at least one recorded step".into(),
        ));
    }
    Ok(step_confidences.iter().sum::<f64>() / step_confidences.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Vocabulary;
    use approx::assert_abs_diff_eq;

    fn pattern(kept: Vec<bool>) -> MaskPattern {
        let gamma = kept.iter().filter(|&&k| !k).count() as f64 / kept.len() as f64;
        MaskPattern::new(kept, gamma)
    }

    #[test]
    fn token_accuracy_identity_and_counting() {
        let x0 = TokenSequence::new(vec![1, 2, 3, 4]);
        let kept = pattern(vec![false, true, false, false]);
        assert_eq!(token_accuracy(&x0, &x0, &kept).unwrap(), 1.0);

        let wrong = TokenSequence::new(vec![0, 2, 0, 0]);
        assert_eq!(token_accuracy(&x0, &wrong, &kept).unwrap(), 0.0);

        // 10 masked, 7 reconstructed exactly.
        let x0 = TokenSequence::new(vec![5; 10]);
        let mut toks = vec![5; 10];
        toks[0] = 1;
        toks[1] = 1;
        toks[2] = 1;
        let x_hat = TokenSequence::new(toks);
        let all_masked = pattern(vec![false; 10]);
        assert_abs_diff_eq!(token_accuracy(&x0, &x_hat, &all_masked).unwrap(), 0.7);
    }

    #[test]
    fn token_accuracy_rejects_empty_mask_set() {
        let x0 = TokenSequence::new(vec![1, 2]);
        let err = token_accuracy(&x0, &x0, &pattern(vec![true, true])).unwrap_err();
        assert!(matches!(err, CoreError::NoMaskedPositions(_)));
    }

    #[test]
    fn semantic_identity_and_disjoint() {
        let emb = BagOfTokens::new(Vocabulary::new(8).unwrap());
        let a = TokenSequence::new(vec![1, 2, 3]);
        assert_abs_diff_eq!(semantic_similarity(&a, &a, &emb).unwrap(), 1.0);
        let b = TokenSequence::new(vec![4, 5, 6]);
        assert_eq!(semantic_similarity(&a, &b, &emb).unwrap(), 0.0);
    }

    #[test]
    fn semantic_half_shared_matches_direct_cosine() {
        let emb = BagOfTokens::new(Vocabulary::new(8).unwrap());
        // multisets {1,2,3,4} and {1,2,5,6}: dot = 2, norms = 2 each
        let a = TokenSequence::new(vec![1, 2, 3, 4]);
        let b = TokenSequence::new(vec![1, 2, 5, 6]);
        assert_abs_diff_eq!(semantic_similarity(&a, &b, &emb).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn number_retention_fixtures() {
        assert_abs_diff_eq!(
            number_retention("16 then 7 then 9", "9 7 16", false),
            1.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            number_retention("16 3 13 4 9", "16 3 13 5 8", false),
            0.6,
            epsilon = 1e-9
        );
        // surplus numbers only hurt when the penalty is on
        let x0 = "16 7 9";
        let x_hat = "16 7 9 also 100 makes 900";
        assert_abs_diff_eq!(number_retention(x0, x_hat, false), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(number_retention(x0, x_hat, true), 0.6, epsilon = 1e-8);
    }

    #[test]
    fn number_retention_empty_original_scores_zero() {
        assert_eq!(number_retention("no digits here", "no digits here", false), 0.0);
        assert_eq!(number_retention("no digits here", "42", true), 0.0);
    }

    #[test]
    fn number_retention_respects_multiplicity() {
        // {7,7} vs {7}: only one of the two sevens is recovered
        assert_abs_diff_eq!(number_retention("7 and 7", "7", false), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn answer_match_basic() {
        let ex = AnswerExtractor::numeric();
        let m = final_answer_match("x ; ANSWER 9", "y ; ANSWER 9", &ex);
        assert_eq!(m.score, 1.0);
        assert_eq!(m.reason, MatchReason::Matched);

        let m = final_answer_match("Answer: 18", "Answer: 81", &ex);
        assert_eq!(m.score, 0.0);
        assert_eq!(m.reason, MatchReason::Mismatch);
    }

    #[test]
    fn answer_match_across_tiers() {
        let ex = AnswerExtractor::numeric();
        let m = final_answer_match("#### 42", "so we get 42", &ex);
        assert_eq!(m.score, 1.0);
        assert_eq!(m.original.as_ref().unwrap().tier, ExtractionTier::Structural);
        assert_eq!(m.reconstructed.as_ref().unwrap().tier, ExtractionTier::Fallback);
    }

    #[test]
    fn answer_match_failure_reasons() {
        let ex = AnswerExtractor::numeric();
        assert_eq!(
            final_answer_match("no numbers", "ANSWER 3", &ex).reason,
            MatchReason::MissingOriginal
        );
        assert_eq!(
            final_answer_match("ANSWER 3", "no numbers", &ex).reason,
            MatchReason::MissingReconstruction
        );
        assert_eq!(
            final_answer_match("nothing", "nothing", &ex).reason,
            MatchReason::MissingBoth
        );
    }

    #[test]
    fn char_similarity_fixtures() {
        assert_eq!(char_similarity("same", "same"), 1.0);
        assert_eq!(char_similarity("", ""), 1.0);
        assert_eq!(char_similarity("", "abc"), 0.0);
        let a = "The answer is 18 dollars.";
        let b = "The answer is 81 dollars.";
        let got = char_similarity(a, b);
        assert_abs_diff_eq!(got, 1.0 - 2.0 / 25.0, epsilon = 1e-12);
        assert!((got - 0.93).abs() <= 0.02);
        assert_eq!(char_similarity(a, b), char_similarity(b, a));
    }

    #[test]
    fn intrinsic_confidence_mean_and_error() {
        assert_abs_diff_eq!(intrinsic_confidence(&[0.8, 0.6]).unwrap(), 0.7);
        assert_eq!(intrinsic_confidence(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(intrinsic_confidence(&[0.25]).unwrap(), 0.25);
        assert!(intrinsic_confidence(&[]).is_err());
    }

    #[test]
    fn composite_fixtures() {
        let uniform = WeightProfile::uniform();
        assert_abs_diff_eq!(composite(&Components::perfect(), &uniform).unwrap(), 1.0);
        let zero = Components::from_array([0.0; 6]);
        assert_eq!(composite(&zero, &uniform).unwrap(), 0.0);
        let mixed = Components::from_array([1.0, 0.5, 0.0, 1.0, 0.9, 0.6]);
        assert_abs_diff_eq!(
            composite(&mixed, &uniform).unwrap(),
            4.0 / 6.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn composite_rejects_negative_weight() {
        let mut w = WeightProfile::uniform();
        w.s_num = -0.1;
        assert!(composite(&Components::perfect(), &w).is_err());
    }

    #[test]
    fn weight_profile_json_round_trip() {
        let json = r#"{"s_tok":0.5,"s_sem":0.1,"s_num":0.1,"s_ans":0.1,"s_char":0.1,"s_conf":0.1}"#;
        let w: WeightProfile = serde_json::from_str(json).unwrap();
        assert_eq!(w.s_tok, 0.5);
        let back = serde_json::to_string(&w).unwrap();
        let again: WeightProfile = serde_json::from_str(&back).unwrap();
        assert_eq!(w, again);
        assert!(serde_json::from_str::<WeightProfile>(r#"{"s_tok":1.0,"bogus":1.0}"#).is_err());
    }

    #[test]
    fn single_profiles_pick_one_component() {
        let c = Components::from_array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        for (i, expect) in c.as_array().iter().enumerate() {
            let w = WeightProfile::single(i);
            assert_abs_diff_eq!(composite(&c, &w).unwrap(), *expect);
        }
    }
}
