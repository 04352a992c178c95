//! Gated, annealed training reward: zero unless the final answer is
//! correct, otherwise a base reward plus an annealed multiple of the
//! consistency score. Reward computation only; no policy optimizer.

use crate::error::{CoreError, Result};
use crate::metrics::AnswerExtractor;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub r_base: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Training horizon the anneal runs over.
    pub total_steps: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { r_base: 1.5, alpha_min: 0.5, alpha_max: 1.0, total_steps: 1000 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_base.is_finite() && self.r_base >= 0.0) {
            return Err(CoreError::InvalidInput(format!(
                "r_base = {} must be finite and >= 0",
                self.r_base
            )));
        }
        if !(0.0 <= self.alpha_min && self.alpha_min <= self.alpha_max) {
            return Err(CoreError::InvalidInput(format!(
                "need 0 <= alpha_min <= alpha_max, got [{}, {}]",
                self.alpha_min, self.alpha_max
            )));
        }
        if self.total_steps == 0 {
            return Err(CoreError::InvalidInput("total_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Linear anneal from `alpha_min` at step 0 to `alpha_max` at the horizon.
/// Endpoints are returned exactly, not through the interpolation.
pub fn anneal(step: usize, config: &RewardConfig) -> Result<f64> {
    config.validate()?;
    if step > config.total_steps {
        return Err(CoreError::StepOutOfRange { t: step, max: config.total_steps });
    }
    if step == 0 {
        return Ok(config.alpha_min);
    }
    if step == config.total_steps {
        return Ok(config.alpha_max);
    }
    let frac = step as f64 / config.total_steps as f64;
    Ok(config.alpha_min + (config.alpha_max - config.alpha_min) * frac)
}

/// Correctness-gated reward: `r_base + anneal(step) * score` when the
/// candidate's extracted answer equals the gold answer, exactly 0
/// otherwise. An unextractable candidate counts as incorrect; rewarding
/// unparsable output is worse than occasionally missing a sloppy correct
/// one.
pub fn gated_reward(
    candidate_text: &str,
    gold_answer: &str,
    extractor: &AnswerExtractor,
    score: f64,
    step: usize,
    config: &RewardConfig,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&score) {
        return Err(CoreError::InvalidInput(format!(
            "score = {score} outside [0, 1]; pass the normalized composite"
        )));
    }
    let alpha = anneal(step, config)?;
    let gold = extractor.canonicalize_gold(gold_answer);
    let correct = extractor
        .extract(candidate_text)
        .map(|e| e.answer == gold)
        .unwrap_or(false);
    Ok(if correct { config.r_base + alpha * score } else { 0.0 })
}
