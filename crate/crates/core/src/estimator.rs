//! The consistency estimator: perturb a candidate, reconstruct the masked
//! region with the denoiser, score the agreement, ensemble over
//! repetitions. Also the exact KL-form estimator used to cross-check the
//! score against its information-theoretic definition.

use crate::denoiser::Denoiser;
use crate::diffusion::{apply_mask, forward_marginal, reconstruct, Transcript};
use crate::error::{CoreError, Result};
use crate::metrics::{
    self, AnswerExtractor, BagOfTokens, BmcScore, Components, TaskKind, WeightProfile,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::schedule::NoiseSchedule;
use crate::vocab::{Lexicon, TokenSequence};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Step resolution of the internal verification schedule. Fine enough that
/// the K-segment reconstruction grid keeps K distinct steps for any
/// non-trivial observed mask fraction, which is what makes denoiser-call
/// accounting exact (K calls per reconstruction).
pub const VERIFY_STEPS: usize = 1000;

/// Knobs for one estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmcConfig {
    /// Masking ratio applied to the candidate.
    pub gamma: f64,
    /// Reverse steps per reconstruction.
    pub steps_k: usize,
    /// Independent mask/reconstruct repetitions averaged together.
    pub n_ensemble: usize,
    pub weights: WeightProfile,
    pub task: TaskKind,
    /// Multiply number retention by its precision term.
    pub precision_penalty: bool,
    /// Keep per-repetition reveal transcripts (memory-heavy; needed only
    /// for the cross-entropy diagnostic).
    pub keep_transcripts: bool,
    pub seed: u64,
}

impl Default for BmcConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            steps_k: 16,
            n_ensemble: 4,
            weights: WeightProfile::uniform(),
            task: TaskKind::Numeric,
            precision_penalty: false,
            keep_transcripts: false,
            seed: 0,
        }
    }
}

impl BmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(CoreError::InvalidInput(format!(
                "gamma = {} outside [0, 1]",
                self.gamma
            )));
        }
        if self.steps_k == 0 {
            return Err(CoreError::InvalidInput("steps_k must be >= 1".into()));
        }
        if self.n_ensemble == 0 {
            return Err(CoreError::InvalidInput("n_ensemble must be >= 1".into()));
        }
        self.weights.validate()
    }
}

/// Ensemble outcome: per-repetition scores and their means.
#[derive(Debug, Clone)]
pub struct BmcResult {
    pub scores: Vec<BmcScore>,
    pub mean_components: Components,
    pub mean_composite: f64,
    /// One transcript per repetition when requested, else empty.
    pub transcripts: Vec<Transcript>,
}

impl BmcResult {
    fn from_scores(scores: Vec<BmcScore>, transcripts: Vec<Transcript>) -> Self {
        let n = scores.len() as f64;
        let mut acc = [0.0; 6];
        let mut composite = 0.0;
        for s in &scores {
            for (a, v) in acc.iter_mut().zip(s.components.as_array()) {
                *a += v;
            }
            composite += s.composite;
        }
        Self {
            scores,
            mean_components: Components::from_array(acc.map(|a| a / n)),
            mean_composite: composite / n,
            transcripts,
        }
    }
}

/// Score one candidate solution against its own reconstruction.
///
/// The query is pinned visible for the whole run; only the solution span
/// is perturbed, and all metrics compare solution spans (the query is
/// identical on both sides and would only inflate similarities). At
/// `gamma = 0` the perturbation is a no-op, so the result is the perfect
/// score without any denoiser traffic. A repetition whose mask draw hits
/// zero positions is retried once with a fresh sub-seed, then errors.
pub fn bmc_score(
    query: &TokenSequence,
    solution: &TokenSequence,
    denoiser: &dyn Denoiser,
    lexicon: &Lexicon,
    config: &BmcConfig,
) -> Result<BmcResult> {
    config.validate()?;
    let vocab = denoiser.vocab();
    if solution.is_empty() {
        return Err(CoreError::InvalidSequence("empty candidate solution".into()));
    }
    vocab.validate_content(query)?;
    vocab.validate_content(solution)?;
    if lexicon.len() as u32 != vocab.size() {
        return Err(CoreError::InvalidInput(format!(
            "lexicon has {} entries but the denoiser vocabulary has {}",
            lexicon.len(),
            vocab.size()
        )));
    }

    if config.gamma == 0.0 {
        let score = BmcScore::new(Components::perfect(), &config.weights)?;
        return Ok(BmcResult::from_scores(
            vec![score; config.n_ensemble],
            Vec::new(),
        ));
    }

    let schedule = NoiseSchedule::linear(VERIFY_STEPS)?;
    let embed = BagOfTokens::new(vocab.clone());
    let extractor = AnswerExtractor::new(config.task);
    let solution_text = lexicon.render(solution);

    let mut scores = Vec::with_capacity(config.n_ensemble);
    let mut transcripts = Vec::new();
    for rep in 0..config.n_ensemble {
        let rep_seed = derive_seed(config.seed, rep as u64);
        let mut drawn = apply_mask(solution, config.gamma, vocab.mask_id(), derive_seed(rep_seed, 0))?;
        if drawn.1.count_masked() == 0 {
            drawn = apply_mask(solution, config.gamma, vocab.mask_id(), derive_seed(rep_seed, 1))?;
        }
        let (x_tilde, pattern) = drawn;
        if pattern.count_masked() == 0 {
            return Err(CoreError::NoMaskedPositions(format!(
                "repetition {rep} drew zero masked positions twice at gamma = {}",
                config.gamma
            )));
        }

        let full = query.concat(&x_tilde);
        let rec = reconstruct(&full, denoiser, config.steps_k, &schedule, derive_seed(rep_seed, 2))?;
        let x_hat = rec.x_hat.slice(query.len(), full.len());
        let x_hat_text = lexicon.render(&x_hat);

        let components = Components {
            s_tok: metrics::token_accuracy(solution, &x_hat, &pattern)?,
            s_sem: metrics::semantic_similarity(solution, &x_hat, &embed)?,
            s_num: metrics::number_retention(&solution_text, &x_hat_text, config.precision_penalty),
            s_ans: metrics::final_answer_match(&solution_text, &x_hat_text, &extractor).score,
            s_char: metrics::char_similarity(&solution_text, &x_hat_text),
            s_conf: metrics::intrinsic_confidence(&rec.confidences)?,
        };
        scores.push(BmcScore::new(components, &config.weights)?);
        if config.keep_transcripts {
            let mut t = rec.transcript;
            // Reveal positions are recorded on the full sequence; shift
            // them back onto the solution span for downstream scoring.
            for step in &mut t.steps {
                for ev in step {
                    ev.position -= query.len();
                }
            }
            transcripts.push(t);
        }
    }
    Ok(BmcResult::from_scores(scores, transcripts))
}

/// How to evaluate the KL-form estimator.
#[derive(Debug, Clone, Copy)]
pub enum KlMode {
    /// Enumerate every mask pattern at every step; requires a small
    /// instance.
    Exact,
    /// Monte-Carlo over (step, pattern) draws.
    Sampled { n_samples: usize, seed: u64 },
}

/// Largest enumerable instance for [`KlMode::Exact`], measured as
/// |vocabulary|^length.
pub const MAX_KL_STATE_SPACE: u64 = 10_000;

/// Average, over steps and mask patterns, of the log-probability the
/// denoiser assigns to the true tokens at masked positions:
/// (1/T) Σ_t E[ Σ_{i masked} log p(x0_i | x̃_t) ].
pub fn bmc_kl(
    x0: &TokenSequence,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    mode: KlMode,
) -> Result<f64> {
    let vocab = denoiser.vocab();
    vocab.validate_content(x0)?;
    if x0.is_empty() {
        return Err(CoreError::InvalidSequence("empty sequence".into()));
    }
    let t_total = schedule.total_steps();
    match mode {
        KlMode::Exact => {
            let len = x0.len();
            let space = (vocab.size() as u64).checked_pow(len as u32);
            if !matches!(space, Some(s) if s <= MAX_KL_STATE_SPACE) {
                return Err(CoreError::StateSpaceTooLarge(format!(
                    "|vocab|^len = {}^{} exceeds {}",
                    vocab.size(),
                    len,
                    MAX_KL_STATE_SPACE
                )));
            }
            let mut total = 0.0;
            for t in 1..=t_total {
                let keep_p = schedule.alpha_bar(t)?;
                for pattern_bits in 0u32..(1 << len) {
                    if pattern_bits == 0 {
                        continue; // nothing masked, inner sum is empty
                    }
                    let mut weight = 1.0;
                    let mut x_tilde = x0.clone();
                    for i in 0..len {
                        if pattern_bits >> i & 1 == 1 {
                            weight *= 1.0 - keep_p;
                            x_tilde.set(i, vocab.mask_id());
                        } else {
                            weight *= keep_p;
                        }
                    }
                    if weight == 0.0 {
                        continue;
                    }
                    let output = denoiser.predict(&x_tilde)?;
                    let mut term = 0.0;
                    for i in 0..len {
                        if pattern_bits >> i & 1 == 1 {
                            let row = output.row(i).ok_or_else(|| {
                                CoreError::InvalidDistribution {
                                    position: i,
                                    reason: "no row for a masked position".into(),
                                }
                            })?;
                            term += row[x0.get(i) as usize].ln();
                        }
                    }
                    total += weight * term;
                }
            }
            Ok(total / t_total as f64)
        }
        KlMode::Sampled { n_samples, seed } => {
            if n_samples == 0 {
                return Err(CoreError::InvalidInput("n_samples must be >= 1".into()));
            }
            let mut total = 0.0;
            for s in 0..n_samples {
                let draw_seed = derive_seed(seed, s as u64);
                // One uniform step draw plus one forward corruption per
                // sample; both derive from the same sub-seed.
                let t = rng_from_seed(draw_seed).gen_range(1..=t_total);
                let (x_tilde, pattern) =
                    forward_marginal(x0, t, schedule, vocab.mask_id(), derive_seed(draw_seed, 1))?;
                if pattern.count_masked() == 0 {
                    continue;
                }
                let output = denoiser.predict(&x_tilde)?;
                for i in pattern.masked_indices() {
                    let row = output.row(i).ok_or_else(|| CoreError::InvalidDistribution {
                        position: i,
                        reason: "no row for a masked position".into(),
                    })?;
                    total += row[x0.get(i) as usize].ln();
                }
            }
            Ok(total / n_samples as f64)
        }
    }
}
