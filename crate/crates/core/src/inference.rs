//! Inference-time drivers: candidate generation and the verify-and-select
//! strategies layered on the consistency estimator.

use crate::denoiser::Denoiser;
use crate::error::{CoreError, Result};
use crate::estimator::{bmc_score, BmcConfig};
use crate::metrics::AnswerExtractor;
use crate::rng::{derive_seed, rng_from_seed, sample_categorical};
use crate::vocab::{Lexicon, TokenId, TokenSequence};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// How candidates are sampled from the denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Solution span length in tokens.
    pub length: usize,
    /// Reverse steps; the denoiser is queried exactly once per step, so
    /// this is also the generation cost in denoiser calls.
    pub steps: usize,
    /// 0 places the argmax token, 1 samples the row as-is, other values
    /// sharpen or flatten the row before sampling.
    pub temperature: f64,
}

impl GenerationConfig {
    pub fn new(length: usize) -> Self {
        Self { length, steps: length, temperature: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.steps == 0 {
            return Err(CoreError::InvalidInput(
                "generation needs length >= 1 and steps >= 1".into(),
            ));
        }
        if !(self.temperature >= 0.0) {
            return Err(CoreError::InvalidInput(format!(
                "temperature = {} must be >= 0",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// A generated solution span plus the probability the denoiser put on each
/// token when it was placed.
#[derive(Debug, Clone)]
pub struct Generated {
    pub solution: TokenSequence,
    /// Placed-token probability per position, in position order.
    pub placed_probs: Vec<f64>,
}

impl Generated {
    /// Mean predicted probability over the unmasking decisions; the
    /// per-candidate confidence used by the confidence selector.
    pub fn mean_confidence(&self) -> f64 {
        self.placed_probs.iter().sum::<f64>() / self.placed_probs.len() as f64
    }
}

/// Rank positions by descending row max-probability, position as the
/// tie-break, and return the first `take`.
fn top_confident<'a>(
    rows: impl Iterator<Item = (usize, &'a [f64])>,
    take: usize,
) -> Vec<usize> {
    let mut ranked: Vec<(usize, f64)> = rows
        .map(|(p, row)| (p, row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    ranked.into_iter().take(take).map(|(p, _)| p).collect()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = i;
        }
    }
    best
}

fn sample_with_temperature(rng: &mut impl Rng, row: &[f64], temperature: f64) -> usize {
    if temperature == 0.0 {
        return argmax(row);
    }
    if (temperature - 1.0).abs() < 1e-12 {
        return sample_categorical(rng, row);
    }
    let weights: Vec<f64> = row
        .iter()
        .map(|&p| if p > 0.0 { p.powf(1.0 / temperature) } else { 0.0 })
        .collect();
    sample_categorical(rng, &weights)
}

/// Sample one solution span conditioned on the query.
///
/// The query is prefixed and pinned visible; the span starts fully masked
/// and is revealed over `steps` passes, each unmasking the
/// ceil(remaining / steps-left) positions the denoiser is most certain
/// about. One denoiser call per step, always, so generation cost is
/// exactly `steps` calls.
pub fn generate(
    query: &TokenSequence,
    denoiser: &dyn Denoiser,
    config: &GenerationConfig,
    seed: u64,
) -> Result<Generated> {
    config.validate()?;
    let vocab = denoiser.vocab();
    vocab.validate_content(query)?;
    let mask = vocab.mask_id();
    let mut state = query.concat(&TokenSequence::filled(config.length, mask));
    let mut placed = vec![0.0; config.length];
    let mut rng = rng_from_seed(seed);
    for step in 0..config.steps {
        let output = denoiser.predict(&state)?;
        let span_rows = || {
            output
                .rows()
                .iter()
                .filter(|(p, _)| *p >= query.len())
                .map(|(p, r)| (*p, r.as_slice()))
        };
        let steps_left = config.steps - step;
        let quota = span_rows().count().div_ceil(steps_left);
        for pos in top_confident(span_rows(), quota) {
            let row = output.row(pos).expect("selected row exists");
            let tok = sample_with_temperature(&mut rng, row, config.temperature) as TokenId;
            state.set(pos, tok);
            placed[pos - query.len()] = row[tok as usize];
        }
    }
    let solution = state.slice(query.len(), state.len());
    if solution.count_masked(mask) > 0 {
        return Err(CoreError::InvalidInput(format!(
            "generation left masks: steps = {} cannot reveal length = {}",
            config.steps, config.length
        )));
    }
    Ok(Generated { solution, placed_probs: placed })
}

/// Deterministic confidence of an existing candidate: replay the unmasking
/// schedule with the candidate's own tokens forced in, recording the
/// probability the denoiser put on each, and average over positions.
///
/// This is the verification baseline: it needs no sampling and costs
/// exactly `steps` denoiser calls.
pub fn model_confidence(
    query: &TokenSequence,
    solution: &TokenSequence,
    denoiser: &dyn Denoiser,
    steps: usize,
) -> Result<f64> {
    if steps == 0 {
        return Err(CoreError::InvalidInput("steps must be >= 1".into()));
    }
    let vocab = denoiser.vocab();
    vocab.validate_content(query)?;
    vocab.validate_content(solution)?;
    if solution.is_empty() {
        return Err(CoreError::InvalidSequence("empty candidate solution".into()));
    }
    let mask = vocab.mask_id();
    let mut state = query.concat(&TokenSequence::filled(solution.len(), mask));
    let mut total = 0.0;
    for step in 0..steps {
        let output = denoiser.predict(&state)?;
        let span_rows = || {
            output
                .rows()
                .iter()
                .filter(|(p, _)| *p >= query.len())
                .map(|(p, r)| (*p, r.as_slice()))
        };
        let steps_left = steps - step;
        let quota = span_rows().count().div_ceil(steps_left);
        for pos in top_confident(span_rows(), quota) {
            let truth = solution.get(pos - query.len());
            let row = output.row(pos).expect("selected row exists");
            total += row[truth as usize];
            state.set(pos, truth);
        }
    }
    Ok(total / solution.len() as f64)
}

/// Selection rule for [`best_of_n`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Composite,
    Confidence,
}

/// Outcome of a best-of-n draw.
#[derive(Debug, Clone)]
pub struct BestOfN {
    pub chosen: TokenSequence,
    pub index: usize,
    pub score: f64,
    pub scores: Vec<f64>,
}

/// Generate `n` candidates and keep the argmax under the selector, lowest
/// index on ties. Candidate `i` uses the same derived seeds as every other
/// strategy, so strategies sharing a seed see identical candidate streams.
pub fn best_of_n(
    query: &TokenSequence,
    denoiser: &dyn Denoiser,
    lexicon: &Lexicon,
    n: usize,
    selector: Selector,
    gen_config: &GenerationConfig,
    bmc_config: &BmcConfig,
    seed: u64,
) -> Result<BestOfN> {
    if n == 0 {
        return Err(CoreError::InvalidInput("best_of_n needs n >= 1".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    let mut scores = Vec::with_capacity(n);
    let mut candidates = Vec::with_capacity(n);
    for i in 0..n {
        let gen = generate(query, denoiser, gen_config, derive_seed(seed, 2 * i as u64))?;
        let score = match selector {
            Selector::Confidence => gen.mean_confidence(),
            Selector::Composite => {
                let cfg = BmcConfig { seed: derive_seed(seed, 2 * i as u64 + 1), ..bmc_config.clone() };
                bmc_score(query, &gen.solution, denoiser, lexicon, &cfg)?.mean_composite
            }
        };
        scores.push(score);
        candidates.push(gen.solution);
        if best.map(|(_, s)| score > s).unwrap_or(true) {
            best = Some((i, score));
        }
    }
    let (index, score) = best.expect("n >= 1");
    Ok(BestOfN { chosen: candidates.swap_remove(index), index, score, scores })
}

/// Majority vote over extracted answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistency {
    /// Majority answer; `None` when no generation yielded an answer.
    pub answer: Option<String>,
    /// Votes for the majority answer over all `n` generations.
    pub vote_ratio: f64,
    pub answers: Vec<Option<String>>,
}

/// Extract an answer from each of `n` generations and take the majority,
/// ties broken toward the answer that appeared first.
pub fn self_consistency(
    query: &TokenSequence,
    denoiser: &dyn Denoiser,
    lexicon: &Lexicon,
    n: usize,
    extractor: &AnswerExtractor,
    gen_config: &GenerationConfig,
    seed: u64,
) -> Result<SelfConsistency> {
    if n == 0 {
        return Err(CoreError::InvalidInput("self_consistency needs n >= 1".into()));
    }
    let mut answers = Vec::with_capacity(n);
    for i in 0..n {
        let gen = generate(query, denoiser, gen_config, derive_seed(seed, 2 * i as u64))?;
        let text = lexicon.render(&gen.solution);
        answers.push(extractor.extract(&text).map(|e| e.answer));
    }
    let mut counts: Vec<(String, usize)> = Vec::new(); // first-seen order
    for ans in answers.iter().flatten() {
        match counts.iter_mut().find(|(a, _)| a == ans) {
            Some((_, c)) => *c += 1,
            None => counts.push((ans.clone(), 1)),
        }
    }
    // strict > over first-seen order breaks ties toward the earliest answer
    let mut chosen: Option<(String, usize)> = None;
    for (a, c) in counts {
        if chosen.as_ref().map(|(_, best)| c > *best).unwrap_or(true) {
            chosen = Some((a, c));
        }
    }
    Ok(match chosen {
        Some((answer, count)) => SelfConsistency {
            answer: Some(answer),
            vote_ratio: count as f64 / n as f64,
            answers,
        },
        None => SelfConsistency { answer: None, vote_ratio: 0.0, answers },
    })
}

/// Rejection-sampling parameters: the acceptance threshold, the candidate
/// budget, and the nested estimator/generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgrsConfig {
    /// Acceptance threshold against the normalized composite.
    pub tau: f64,
    /// Candidate budget.
    pub n_max: usize,
    pub bmc: BmcConfig,
    pub generation: GenerationConfig,
}

impl MgrsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 {
            return Err(CoreError::InvalidInput("n_max must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(CoreError::InvalidInput(format!(
                "tau = {} outside [0, 1] (compared against the normalized composite)",
                self.tau
            )));
        }
        self.generation.validate()?;
        self.bmc.validate()
    }
}

/// What one rejection-sampling run produced.
#[derive(Debug, Clone)]
pub struct MgrsOutcome {
    pub chosen: TokenSequence,
    /// Normalized composite of the chosen candidate.
    pub score: f64,
    pub samples_used: usize,
    pub early_exit: bool,
    pub all_scores: Vec<f64>,
}

/// Generate-verify loop: accept the first candidate whose normalized
/// composite strictly exceeds tau; at budget exhaustion fall back to the
/// best-scoring candidate (lowest index on ties).
///
/// Candidate `i` derives its generation seed from index `2i` and its
/// verification seed from `2i + 1`, so raising the budget extends the
/// stream without disturbing earlier candidates.
pub fn mgrs(
    query: &TokenSequence,
    denoiser: &dyn Denoiser,
    lexicon: &Lexicon,
    config: &MgrsConfig,
    seed: u64,
) -> Result<MgrsOutcome> {
    config.validate()?;
    // Normalized weights make tau comparable across weight profiles.
    let weights = config.bmc.weights.normalized()?;
    let mut all_scores = Vec::new();
    let mut best: Option<(usize, f64, TokenSequence)> = None;
    for i in 0..config.n_max {
        let gen = generate(query, denoiser, &config.generation, derive_seed(seed, 2 * i as u64))?;
        let cfg = BmcConfig {
            weights,
            seed: derive_seed(seed, 2 * i as u64 + 1),
            ..config.bmc.clone()
        };
        let score = bmc_score(query, &gen.solution, denoiser, lexicon, &cfg)?.mean_composite;
        all_scores.push(score);
        if score > config.tau {
            return Ok(MgrsOutcome {
                chosen: gen.solution,
                score,
                samples_used: i + 1,
                early_exit: true,
                all_scores,
            });
        }
        if best.as_ref().map(|(_, s, _)| score > *s).unwrap_or(true) {
            best = Some((i, score, gen.solution));
        }
    }
    let (_, score, chosen) = best.expect("n_max >= 1");
    Ok(MgrsOutcome {
        chosen,
        score,
        samples_used: config.n_max,
        early_exit: false,
        all_scores,
    })
}
