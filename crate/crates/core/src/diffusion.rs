//! Absorbing-state forward corruption and learned reverse dynamics.
//!
//! Forward process: at step `t` each content token independently survives
//! with probability `alpha_bar[t]`, otherwise it is replaced by the mask
//! sentinel. Masked tokens never recover on the forward path.
//!
//! Reverse step from `t` to `s < t`: conditioned on the current state, a
//! position that is already visible stays fixed; a masked position is
//! revealed with probability
//!
//! ```text
//! rho = (alpha_bar[s] - alpha_bar[t]) / (1 - alpha_bar[t])
//! ```
//!
//! and, when revealed, its token is drawn from the denoiser's categorical
//! for that position. This is the exact marginal of composing the forward
//! posterior with the denoiser's clean-sequence prediction; at `s = 0` the
//! reveal probability is 1, so a full reverse run always terminates with no
//! masks left.

use crate::denoiser::{Denoiser, DenoiserOutput};
use crate::error::{CoreError, Result};
use crate::rng::{derive_seed, rng_from_seed, sample_categorical};
use crate::schedule::NoiseSchedule;
use crate::vocab::{TokenId, TokenSequence};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Which positions a corruption kept visible, plus the rate that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPattern {
    kept: Vec<bool>,
    gamma: f64,
}

impl MaskPattern {
    pub fn new(kept: Vec<bool>, gamma: f64) -> Self {
        Self { kept, gamma }
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_kept(&self, i: usize) -> bool {
        self.kept[i]
    }

    pub fn masked_indices(&self) -> Vec<usize> {
        self.kept
            .iter()
            .enumerate()
            .filter(|(_, &k)| !k)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count_masked(&self) -> usize {
        self.kept.iter().filter(|&&k| !k).count()
    }
}

/// Per-step record of what a reconstruction revealed: the probability the
/// denoiser put on each placed token and the full row it was drawn from.
#[derive(Debug, Clone)]
pub struct RevealEvent {
    pub position: usize,
    pub token: TokenId,
    pub row: Vec<f64>,
}

/// Trace of one reconstruction, one entry per reverse step that saw at
/// least one masked position.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    pub steps: Vec<Vec<RevealEvent>>,
}

/// Corrupt `x0` with the forward marginal at step `t`: each position
/// survives independently with probability `alpha_bar[t]`.
pub fn forward_marginal(
    x0: &TokenSequence,
    t: usize,
    schedule: &NoiseSchedule,
    denoiser_mask_id: TokenId,
    seed: u64,
) -> Result<(TokenSequence, MaskPattern)> {
    if t == 0 || t > schedule.total_steps() {
        return Err(CoreError::StepOutOfRange { t, max: schedule.total_steps() });
    }
    if x0.tokens().iter().any(|&tok| tok == denoiser_mask_id) {
        return Err(CoreError::InvalidSequence(
            "forward corruption input must be a clean sequence".into(),
        ));
    }
    let keep_p = schedule.alpha_bar(t)?;
    let mut rng = rng_from_seed(seed);
    let mut out = x0.clone();
    let mut kept = vec![true; x0.len()];
    for i in 0..x0.len() {
        if rng.gen::<f64>() >= keep_p {
            out.set(i, denoiser_mask_id);
            kept[i] = false;
        }
    }
    Ok((out, MaskPattern::new(kept, 1.0 - keep_p)))
}

/// Corrupt `x0` by masking each position independently with probability
/// `gamma`. This is the perturbation used by the consistency estimator;
/// it is the same marginal family as `forward_marginal` but parameterized
/// directly by the mask fraction.
pub fn apply_mask(
    x0: &TokenSequence,
    gamma: f64,
    mask_id: TokenId,
    seed: u64,
) -> Result<(TokenSequence, MaskPattern)> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(CoreError::InvalidInput(format!("gamma = {gamma} outside [0, 1]")));
    }
    if x0.tokens().iter().any(|&tok| tok == mask_id) {
        return Err(CoreError::InvalidSequence(
            "mask perturbation input must be a clean sequence".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = x0.clone();
    let mut kept = vec![true; x0.len()];
    for i in 0..x0.len() {
        if rng.gen::<f64>() < gamma {
            out.set(i, mask_id);
            kept[i] = false;
        }
    }
    Ok((out, MaskPattern::new(kept, gamma)))
}

fn validate_rows(out: &DenoiserOutput, vocab_size: usize) -> Result<()> {
    for (pos, row) in out.rows() {
        if row.len() != vocab_size {
            return Err(CoreError::InvalidDistribution {
                position: *pos,
                reason: format!("row length {} != vocabulary size {vocab_size}", row.len()),
            });
        }
        let mut sum = 0.0;
        for &p in row {
            if !(p >= 0.0) {
                return Err(CoreError::InvalidDistribution {
                    position: *pos,
                    reason: format!("negative or NaN probability {p}"),
                });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CoreError::InvalidDistribution {
                position: *pos,
                reason: format!("row sums to {sum}, expected 1 within 1e-9"),
            });
        }
    }
    Ok(())
}

/// Probability that a masked position is revealed on the `from` -> `to`
/// transition. Errors on out-of-range or non-backward steps.
pub fn reveal_probability(
    schedule: &NoiseSchedule,
    from_step: usize,
    to_step: usize,
) -> Result<f64> {
    let max = schedule.total_steps();
    if from_step == 0 || from_step > max {
        return Err(CoreError::StepOutOfRange { t: from_step, max });
    }
    if to_step >= from_step {
        return Err(CoreError::InvalidInput(format!(
            "reverse step must go backward: {from_step} -> {to_step}"
        )));
    }
    let a_s = schedule.alpha_bar(to_step)?;
    let a_t = schedule.alpha_bar(from_step)?;
    debug_assert!(a_s >= a_t);
    let denom = 1.0 - a_t;
    // denom == 0 would mean alpha_bar[from_step] == 1, i.e. a step that
    // cannot have produced any mask; reveal everything in that case.
    Ok(if denom > 0.0 { (a_s - a_t) / denom } else { 1.0 })
}

/// Sample the reverse transition given an already-computed denoiser output
/// for the incoming state.
fn apply_reverse(
    x_t: &TokenSequence,
    output: &DenoiserOutput,
    reveal_p: f64,
    mask_id: TokenId,
    seed: u64,
) -> Result<(TokenSequence, Vec<RevealEvent>)> {
    let mut rng = rng_from_seed(seed);
    let mut out = x_t.clone();
    let mut events = Vec::new();
    for &i in &x_t.masked_positions(mask_id) {
        let row = output.row(i).ok_or_else(|| CoreError::InvalidDistribution {
            position: i,
            reason: "denoiser returned no row for a masked position".into(),
        })?;
        // Draw reveal-vs-stay first, then the token, so the per-position
        // stream is two uniforms regardless of outcome.
        let u = rng.gen::<f64>();
        if u < reveal_p {
            let tok = sample_categorical(&mut rng, row) as TokenId;
            out.set(i, tok);
            events.push(RevealEvent { position: i, token: tok, row: row.to_vec() });
        } else {
            let _ = rng.gen::<f64>();
        }
    }
    Ok((out, events))
}

/// One reverse transition from `from_step` to `to_step`.
///
/// Returns the next state and the reveal events drawn this step. Positions
/// already visible are never re-masked. The denoiser is queried exactly
/// once, on the incoming state.
pub fn reverse_step(
    x_t: &TokenSequence,
    denoiser: &dyn Denoiser,
    from_step: usize,
    to_step: usize,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<(TokenSequence, Vec<RevealEvent>)> {
    let reveal_p = reveal_probability(schedule, from_step, to_step)?;
    let vocab = denoiser.vocab();
    vocab.validate(x_t)?;
    // Querying on a fully visible state is legal and costs one denoiser
    // call; the output has no rows and the state passes through unchanged.
    let output = denoiser.predict(x_t)?;
    validate_rows(&output, vocab.size() as usize)?;
    apply_reverse(x_t, &output, reveal_p, vocab.mask_id(), seed)
}

/// Outcome of a K-step reconstruction.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub x_hat: TokenSequence,
    /// Mean of max-probability over the positions still masked at each
    /// executed step; empty when the input had no masks.
    pub confidences: Vec<f64>,
    pub transcript: Transcript,
    /// Number of reverse steps executed (denoiser calls).
    pub steps_executed: usize,
}

/// Strictly decreasing step grid from `start` to 0 with at most `k`
/// segments: the distinct values of `round(start * j / k)`.
pub fn step_grid(start: usize, k: usize) -> Vec<usize> {
    debug_assert!(k >= 1 && start >= 1);
    let mut grid: Vec<usize> = (0..=k)
        .map(|j| ((start as f64) * (j as f64) / (k as f64)).round() as usize)
        .collect();
    grid.dedup();
    grid.reverse();
    grid
}

/// Run `k` reverse steps from the corruption level implied by the observed
/// mask fraction of `x_tilde` down to step 0.
///
/// The start step is the largest `t` whose survival probability is at
/// least the observed keep fraction; the grid is linearly spaced in
/// integer steps. A fully visible input returns immediately.
pub fn reconstruct(
    x_tilde: &TokenSequence,
    denoiser: &dyn Denoiser,
    k: usize,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<Reconstruction> {
    if k == 0 {
        return Err(CoreError::InvalidInput("reconstruction needs k >= 1".into()));
    }
    let vocab = denoiser.vocab();
    vocab.validate(x_tilde)?;
    let n_masked = x_tilde.count_masked(vocab.mask_id());
    if n_masked == 0 {
        return Ok(Reconstruction {
            x_hat: x_tilde.clone(),
            confidences: Vec::new(),
            transcript: Transcript::default(),
            steps_executed: 0,
        });
    }
    let gamma_obs = n_masked as f64 / x_tilde.len() as f64;
    let start = schedule.start_step_for_mask_fraction(gamma_obs)?;
    let grid = step_grid(start, k);

    let mut x = x_tilde.clone();
    let mut confidences = Vec::new();
    let mut transcript = Transcript::default();
    let mut steps_executed = 0;
    for (step_idx, pair) in grid.windows(2).enumerate() {
        let (from, to) = (pair[0], pair[1]);
        // One denoiser call per step: the same output drives both the
        // confidence record and the transition, so executed steps equal
        // denoiser calls exactly (the unit of cost accounting).
        let output = denoiser.predict(&x)?;
        validate_rows(&output, vocab.size() as usize)?;
        let mut acc = 0.0;
        let mut cnt = 0usize;
        for (_, row) in output.rows() {
            acc += row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            cnt += 1;
        }
        // Confidence is measured on the state entering the step; a state
        // with nothing left to reveal records no entry.
        if cnt > 0 {
            confidences.push(acc / cnt as f64);
        }
        let reveal_p = reveal_probability(schedule, from, to)?;
        let step_seed = derive_seed(seed, step_idx as u64);
        let (next, events) = apply_reverse(&x, &output, reveal_p, vocab.mask_id(), step_seed)?;
        x = next;
        steps_executed += 1;
        if !events.is_empty() {
            transcript.steps.push(events);
        }
    }
    debug_assert_eq!(x.count_masked(vocab.mask_id()), 0, "grid must end at step 0");
    Ok(Reconstruction { x_hat: x, confidences, transcript, steps_executed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::OracleDenoiser;
    use crate::vocab::Vocabulary;

    fn point_mass_oracle(seq: Vec<TokenId>, vocab_size: u32) -> OracleDenoiser {
        let vocab = Vocabulary::new(vocab_size).unwrap();
        OracleDenoiser::new(vec![(TokenSequence::new(seq), 1.0)], vocab).unwrap()
    }

    #[test]
    fn forward_marginal_keeps_everything_at_full_survival() {
        let schedule = NoiseSchedule::from_betas(vec![0.0, 0.5]).unwrap();
        let x0 = TokenSequence::new(vec![0, 1, 2]);
        let (xt, pat) = forward_marginal(&x0, 1, &schedule, 3, 99).unwrap();
        assert_eq!(xt, x0);
        assert_eq!(pat.count_masked(), 0);
    }

    #[test]
    fn forward_marginal_masks_everything_at_zero_survival() {
        let schedule = NoiseSchedule::linear(4).unwrap();
        let x0 = TokenSequence::new(vec![0, 1, 2]);
        let (xt, pat) = forward_marginal(&x0, 4, &schedule, 3, 99).unwrap();
        assert!(xt.tokens().iter().all(|&t| t == 3));
        assert_eq!(pat.count_masked(), 3);
    }

    #[test]
    fn forward_marginal_rejects_bad_steps_and_masked_input() {
        let schedule = NoiseSchedule::linear(4).unwrap();
        let x0 = TokenSequence::new(vec![0, 1]);
        assert!(forward_marginal(&x0, 0, &schedule, 3, 1).is_err());
        assert!(forward_marginal(&x0, 5, &schedule, 3, 1).is_err());
        let dirty = TokenSequence::new(vec![0, 3]);
        assert!(forward_marginal(&dirty, 1, &schedule, 3, 1).is_err());
    }

    #[test]
    fn apply_mask_endpoints() {
        let x0 = TokenSequence::new(vec![0, 1, 2, 0]);
        let (x, p) = apply_mask(&x0, 0.0, 9, 5).unwrap();
        assert_eq!(x, x0);
        assert_eq!(p.count_masked(), 0);
        let (x, p) = apply_mask(&x0, 1.0, 9, 5).unwrap();
        assert!(x.tokens().iter().all(|&t| t == 9));
        assert_eq!(p.count_masked(), 4);
    }

    #[test]
    fn apply_mask_rate_is_calibrated() {
        let x0 = TokenSequence::filled(2000, 1);
        let (_, p) = apply_mask(&x0, 0.3, 5, 123).unwrap();
        let frac = p.count_masked() as f64 / 2000.0;
        assert!((frac - 0.3).abs() < 0.03, "observed {frac}");
    }

    #[test]
    fn reverse_to_zero_reveals_deterministic_token() {
        // One masked position, point-mass denoiser, target step 0: the
        // position must come back as the support token.
        let schedule = NoiseSchedule::linear(3).unwrap();
        let oracle = point_mass_oracle(vec![0, 1, 2], 4);
        let x_t = TokenSequence::new(vec![0, 4, 2]);
        for seed in 0..20 {
            let (x_s, events) = reverse_step(&x_t, &oracle, 3, 0, &schedule, seed).unwrap();
            assert_eq!(x_s, TokenSequence::new(vec![0, 1, 2]));
            assert_eq!(events.len(), 1);
            assert_eq!(events[0].position, 1);
        }
    }

    #[test]
    fn reverse_never_remasks() {
        let schedule = NoiseSchedule::linear(6).unwrap();
        let oracle = point_mass_oracle(vec![2, 2, 2, 2], 3);
        let x_t = TokenSequence::new(vec![2, 3, 3, 2]);
        for seed in 0..50 {
            let (x_s, _) = reverse_step(&x_t, &oracle, 5, 2, &schedule, seed).unwrap();
            assert_eq!(x_s.get(0), 2);
            assert_eq!(x_s.get(3), 2);
            for i in [1, 2] {
                assert!(x_s.get(i) == 2 || x_s.get(i) == 3);
            }
        }
    }

    #[test]
    fn reverse_step_rejects_forward_motion() {
        let schedule = NoiseSchedule::linear(4).unwrap();
        let oracle = point_mass_oracle(vec![0, 0], 2);
        let x = TokenSequence::new(vec![2, 0]);
        assert!(reverse_step(&x, &oracle, 2, 2, &schedule, 0).is_err());
        assert!(reverse_step(&x, &oracle, 2, 3, &schedule, 0).is_err());
        assert!(reverse_step(&x, &oracle, 0, 0, &schedule, 0).is_err());
    }

    #[test]
    fn step_grid_shapes() {
        assert_eq!(step_grid(28, 4), vec![28, 21, 14, 7, 0]);
        assert_eq!(step_grid(3, 3), vec![3, 2, 1, 0]);
        // more segments than steps collapses duplicates
        assert_eq!(step_grid(2, 8), vec![2, 1, 0]);
        assert_eq!(step_grid(1, 1), vec![1, 0]);
    }

    #[test]
    fn reconstruct_fills_all_masks() {
        let schedule = NoiseSchedule::linear(16).unwrap();
        let oracle = point_mass_oracle(vec![0, 1, 2, 3, 0, 1], 4);
        let x_tilde = TokenSequence::new(vec![4, 4, 2, 4, 4, 1]);
        let rec = reconstruct(&x_tilde, &oracle, 4, &schedule, 7).unwrap();
        assert_eq!(rec.x_hat, TokenSequence::new(vec![0, 1, 2, 3, 0, 1]));
        assert_eq!(rec.steps_executed, 4);
        assert!(!rec.confidences.is_empty());
        // point-mass rows have max-probability 1 at every step
        for c in &rec.confidences {
            assert!((c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruct_of_clean_input_is_identity() {
        let schedule = NoiseSchedule::linear(8).unwrap();
        let oracle = point_mass_oracle(vec![0, 1], 3);
        let x = TokenSequence::new(vec![1, 0]);
        let rec = reconstruct(&x, &oracle, 4, &schedule, 1).unwrap();
        assert_eq!(rec.x_hat, x);
        assert!(rec.confidences.is_empty());
        assert_eq!(rec.steps_executed, 0);
    }

    #[test]
    fn reconstruct_is_seed_deterministic() {
        let schedule = NoiseSchedule::linear(12).unwrap();
        let vocab = Vocabulary::new(3).unwrap();
        let oracle = OracleDenoiser::new(
            vec![
                (TokenSequence::new(vec![0, 1, 2]), 0.5),
                (TokenSequence::new(vec![2, 1, 0]), 0.3),
                (TokenSequence::new(vec![1, 1, 1]), 0.2),
            ],
            vocab,
        )
        .unwrap();
        let x_tilde = TokenSequence::new(vec![3, 1, 3]);
        let a = reconstruct(&x_tilde, &oracle, 6, &schedule, 404).unwrap();
        let b = reconstruct(&x_tilde, &oracle, 6, &schedule, 404).unwrap();
        assert_eq!(a.x_hat, b.x_hat);
        assert_eq!(a.confidences, b.confidences);
    }
}
