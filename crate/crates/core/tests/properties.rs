//! Randomized invariant checks across the library surface.

use bmc_core::bounds::{verify_bound, ContractionOperator, BOUND_TOLERANCE};
use bmc_core::denoiser::OracleDenoiser;
use bmc_core::diffusion::apply_mask;
use bmc_core::estimator::{bmc_kl, bmc_score, BmcConfig, KlMode};
use bmc_core::evaluation::{auroc_from_pairs, auroc_pairwise, spearman_rho};
use bmc_core::inference::{mgrs, GenerationConfig, MgrsConfig};
use bmc_core::metrics::{
    char_similarity, composite, intrinsic_confidence, number_retention, token_accuracy,
    AnswerExtractor, Components, WeightProfile,
};
use bmc_core::reward::{anneal, gated_reward, RewardConfig};
use bmc_core::schedule::NoiseSchedule;
use bmc_core::vocab::{Lexicon, TokenSequence, Vocabulary};
use proptest::prelude::*;

/// Oracle whose support is the full cartesian product of per-position
/// candidate sets: any mixture of revealed coordinates stays consistent.
fn product_oracle(per_position: &[Vec<(u32, f64)>], vocab_size: u32) -> OracleDenoiser {
    let mut support: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 1.0)];
    for options in per_position {
        let mut next = Vec::with_capacity(support.len() * options.len());
        for (prefix, w) in &support {
            for &(tok, p) in options {
                let mut seq = prefix.clone();
                seq.push(tok);
                next.push((seq, w * p));
            }
        }
        support = next;
    }
    let support = support
        .into_iter()
        .map(|(seq, w)| (TokenSequence::from(seq), w))
        .collect();
    OracleDenoiser::new(support, Vocabulary::new(vocab_size).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn char_similarity_is_symmetric_and_bounded(a in ".{0,24}", b in ".{0,24}") {
        let s = char_similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, char_similarity(&b, &a));
        prop_assert_eq!(char_similarity(&a, &a), 1.0);
    }

    #[test]
    fn number_retention_is_bounded(
        a in "[0-9a-z ,.:-]{0,40}",
        b in "[0-9a-z ,.:-]{0,40}",
        penalty in any::<bool>(),
    ) {
        let s = number_retention(&a, &b, penalty);
        prop_assert!((0.0..=1.0).contains(&s), "{}", s);
        // punishing imprecision can only lower the score
        prop_assert!(number_retention(&a, &b, true) <= number_retention(&a, &b, false) + 1e-15);
    }

    #[test]
    fn token_accuracy_is_bounded_or_rejects_empty_mask(
        tokens in proptest::collection::vec((0u32..5, 0u32..5, any::<bool>()), 1..20),
    ) {
        let x0 = TokenSequence::from(tokens.iter().map(|t| t.0).collect::<Vec<_>>());
        let x_hat = TokenSequence::from(tokens.iter().map(|t| t.1).collect::<Vec<_>>());
        let kept: Vec<bool> = tokens.iter().map(|t| t.2).collect();
        let any_masked = kept.iter().any(|k| !k);
        let pattern = bmc_core::diffusion::MaskPattern::new(kept, 0.5);
        match token_accuracy(&x0, &x_hat, &pattern) {
            Ok(s) => {
                prop_assert!(any_masked);
                prop_assert!((0.0..=1.0).contains(&s));
            }
            Err(_) => prop_assert!(!any_masked),
        }
    }

    #[test]
    fn intrinsic_confidence_stays_in_unit_interval(
        probs in proptest::collection::vec(0.0f64..=1.0, 1..40),
    ) {
        let c = intrinsic_confidence(&probs).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn composite_is_monotone_in_every_component(
        base in proptest::collection::vec(0.0f64..=1.0, 6),
        weights in proptest::collection::vec(0.0f64..=2.0, 6),
        idx in 0usize..6,
        bump in 0.0f64..=0.5,
    ) {
        prop_assume!(weights.iter().sum::<f64>() > 0.0);
        let w = WeightProfile::from_array(weights.try_into().unwrap());
        let c0 = Components::from_array(base.clone().try_into().unwrap());
        let mut bumped = base.clone();
        bumped[idx] = (bumped[idx] + bump).min(1.0);
        let c1 = Components::from_array(bumped.try_into().unwrap());
        prop_assert!(composite(&c1, &w).unwrap() + 1e-12 >= composite(&c0, &w).unwrap());
    }

    #[test]
    fn masked_set_grows_with_gamma(
        tokens in proptest::collection::vec(0u32..6, 1..30),
        g1 in 0.0f64..=1.0,
        g2 in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let x0 = TokenSequence::from(tokens);
        let mask_id = 6;
        // same seed couples the per-position draws, so the sparse mask
        // set is a subset of the dense one
        let (_, p_lo) = apply_mask(&x0, lo, mask_id, seed).unwrap();
        let (_, p_hi) = apply_mask(&x0, hi, mask_id, seed).unwrap();
        for i in p_lo.masked_indices() {
            prop_assert!(!p_hi.is_kept(i), "position {} masked at {} but kept at {}", i, lo, hi);
        }
    }

    #[test]
    fn schedule_survival_is_the_running_product(
        betas in proptest::collection::vec(0.0f64..=0.95, 1..40),
    ) {
        let schedule = NoiseSchedule::from_betas(betas.clone()).unwrap();
        let mut product = 1.0;
        for (i, beta) in betas.iter().enumerate() {
            product *= 1.0 - beta;
            let ab = schedule.alpha_bar(i + 1).unwrap();
            prop_assert!((ab - product).abs() <= 1e-12 * product.max(1e-300));
        }
        prop_assert_eq!(schedule.alpha_bar(0).unwrap(), 1.0);
    }

    #[test]
    fn anneal_is_monotone_between_exact_endpoints(
        t1 in 0usize..=1000,
        t2 in 0usize..=1000,
    ) {
        let config = RewardConfig::default();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a_lo = anneal(lo, &config).unwrap();
        let a_hi = anneal(hi, &config).unwrap();
        prop_assert!(a_lo <= a_hi + 1e-15);
        prop_assert!((config.alpha_min..=config.alpha_max).contains(&a_lo));
    }

    #[test]
    fn reward_gates_wrong_answers_and_stays_in_range(
        gold in 1i64..999,
        score in 0.0f64..=1.0,
        step in 0usize..=1000,
        correct in any::<bool>(),
    ) {
        let config = RewardConfig::default();
        let extractor = AnswerExtractor::numeric();
        let shown = if correct { gold } else { gold + 1 };
        let text = format!("the work\n#### {shown}");
        let r = gated_reward(&text, &gold.to_string(), &extractor, score, step, &config).unwrap();
        if correct {
            prop_assert!((1.5..=2.5).contains(&r), "reward {} outside default range", r);
        } else {
            prop_assert_eq!(r, 0.0);
        }
        // unextractable output earns nothing even when formally correct
        let r = gated_reward("no answer here", &gold.to_string(), &extractor, score, step, &config)
            .unwrap();
        prop_assert_eq!(r, 0.0);
    }

    #[test]
    fn reward_is_monotone_in_consistency(
        gold in 1i64..999,
        s1 in 0.0f64..=1.0,
        s2 in 0.0f64..=1.0,
        step in 0usize..=1000,
    ) {
        let config = RewardConfig::default();
        let extractor = AnswerExtractor::numeric();
        let text = format!("#### {gold}");
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        let r_lo = gated_reward(&text, &gold.to_string(), &extractor, lo, step, &config).unwrap();
        let r_hi = gated_reward(&text, &gold.to_string(), &extractor, hi, step, &config).unwrap();
        prop_assert!(r_lo <= r_hi + 1e-15);
    }

    #[test]
    fn auroc_matches_brute_force_and_ignores_monotone_maps(
        raw in proptest::collection::vec((0u8..12, any::<bool>()), 2..80),
        scale in 0.1f64..5.0,
        shift in -3.0f64..3.0,
    ) {
        let pairs: Vec<(f64, bool)> =
            raw.iter().map(|&(s, l)| (s as f64 / 12.0, l)).collect();
        let n_pos = pairs.iter().filter(|(_, l)| *l).count();
        prop_assume!(n_pos > 0 && n_pos < pairs.len());
        let fast = auroc_from_pairs(&pairs).unwrap();
        prop_assert!((0.0..=1.0).contains(&fast));
        prop_assert_eq!(fast, auroc_pairwise(&pairs).unwrap());
        let mapped: Vec<(f64, bool)> =
            pairs.iter().map(|&(s, l)| (scale * s + shift, l)).collect();
        prop_assert_eq!(auroc_from_pairs(&mapped).unwrap(), fast);
    }
}

#[test]
fn mgrs_outcomes_satisfy_their_invariants() {
    let mut lexicon = Lexicon::new();
    for t in ["q", "a", "b"] {
        lexicon.intern(t);
    }
    let denoiser = product_oracle(
        &[
            vec![(0, 1.0)],
            vec![(1, 0.6), (2, 0.4)],
            vec![(1, 0.7), (2, 0.3)],
            vec![(1, 0.5), (2, 0.5)],
        ],
        3,
    );
    let query = TokenSequence::from(vec![0u32]);
    for tau in [0.0, 0.25, 0.5, 0.75, 0.9, 1.0] {
        for n_max in [1usize, 2, 5] {
            for seed in 0..8 {
                let config = MgrsConfig {
                    tau,
                    n_max,
                    bmc: BmcConfig {
                        gamma: 0.9,
                        steps_k: 3,
                        n_ensemble: 2,
                        ..BmcConfig::default()
                    },
                    generation: GenerationConfig { length: 3, steps: 3, temperature: 1.0 },
                };
                let out = mgrs(&query, &denoiser, &lexicon, &config, seed).unwrap();
                assert!(out.samples_used >= 1 && out.samples_used <= n_max);
                assert_eq!(out.all_scores.len(), out.samples_used);
                assert!((0.0..=1.0).contains(&out.score));
                if out.early_exit {
                    assert!(out.score > tau, "early exit must clear the threshold");
                    assert_eq!(out.score, *out.all_scores.last().unwrap());
                } else {
                    assert_eq!(out.samples_used, n_max, "no early exit spends the budget");
                    let best = out.all_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    assert_eq!(out.score, best, "fallback keeps the best candidate");
                }
                if tau >= 1.0 {
                    assert!(!out.early_exit, "no normalized score can exceed 1");
                }
            }
        }
    }
}

#[test]
fn divergence_ranks_agree_with_token_consistency() {
    // a family of denoisers indexed by how much probability they put on
    // the true token; the closed-form divergence score and the sampled
    // token-consistency score must order them the same way
    let mut lexicon = Lexicon::new();
    for t in ["0", "1", "2"] {
        lexicon.intern(t);
    }
    let x0 = TokenSequence::from(vec![0u32, 1, 2]);
    let schedule = NoiseSchedule::linear(4).unwrap();
    let mut kl_values = Vec::new();
    let mut consistency = Vec::new();
    for i in 0..9 {
        let p = 0.15 + 0.1 * i as f64;
        let spread = (1.0 - p) / 2.0;
        let rows: Vec<Vec<(u32, f64)>> = x0
            .tokens()
            .iter()
            .map(|&truth| {
                (0..3u32)
                    .map(|tok| (tok, if tok == truth { p } else { spread }))
                    .collect()
            })
            .collect();
        let denoiser = product_oracle(&rows, 3);
        kl_values.push(bmc_kl(&x0, &denoiser, &schedule, KlMode::Exact).unwrap());
        let config = BmcConfig {
            gamma: 0.5,
            steps_k: 2,
            n_ensemble: 24,
            weights: WeightProfile::single(0),
            seed: 17,
            ..BmcConfig::default()
        };
        let result =
            bmc_score(&TokenSequence::from(vec![]), &x0, &denoiser, &lexicon, &config).unwrap();
        consistency.push(result.mean_composite);
    }
    let rho = spearman_rho(&kl_values, &consistency).unwrap();
    assert!(rho > 0.9, "rank agreement too weak: {rho}, kl {kl_values:?} vs {consistency:?}");
}

#[test]
fn contraction_bound_holds_across_operator_grid() {
    let mut checked = 0;
    for kappa in [0.0, 0.25, 0.5, 0.9] {
        for dim in [2usize, 5] {
            for seed in [1u64, 2, 3] {
                let fp: Vec<f64> = (0..dim).map(|i| (i as f64).sin()).collect();
                let op = ContractionOperator::rotated(fp, kappa, seed).unwrap();
                let report = verify_bound(&op, 500, seed + 100).unwrap();
                assert_eq!(report.violations, 0);
                assert!(report.max_relative_violation <= BOUND_TOLERANCE);
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 24);
}
