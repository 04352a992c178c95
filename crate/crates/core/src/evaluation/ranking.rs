//! Threshold-free discrimination metrics over scored records.
//!
//! The positive class is the *correct* records throughout: AUROC is the
//! probability that a random correct record outscores a random incorrect
//! one, and AUPR is area under the precision-recall staircase for
//! retrieving correct records. Both have brute-force reference
//! implementations that the fast paths must match exactly, not just
//! approximately, on any input.

use super::VerificationRecord;
use crate::error::{CoreError, Result};
use crate::metrics::WeightProfile;

/// (score, is_correct) pairs for one named score, rejecting non-finite values.
fn extract_pairs(records: &[VerificationRecord], score_name: &str) -> Result<Vec<(f64, bool)>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let s = r.score(score_name)?;
            if !s.is_finite() {
                return Err(CoreError::Data(format!(
                    "score '{score_name}' is not finite in record {i}"
                )));
            }
            Ok((s, r.label))
        })
        .collect()
}

fn class_counts(pairs: &[(f64, bool)]) -> (u64, u64) {
    let pos = pairs.iter().filter(|(_, l)| *l).count() as u64;
    (pos, pairs.len() as u64 - pos)
}

/// AUROC of the named score: P(correct outscores incorrect), ties 0.5.
pub fn auroc(records: &[VerificationRecord], score_name: &str) -> Result<f64> {
    auroc_from_pairs(&extract_pairs(records, score_name)?)
}

/// Rank-statistic AUROC over (score, is_correct) pairs.
///
/// Works in doubled ranks so tied groups average without leaving the
/// integers: a tie group spanning sorted positions [i, j) has doubled
/// average rank i + j + 1. The final division is then the only floating
/// operation, which is what makes equality with [`auroc_pairwise`] exact
/// rather than approximate.
pub fn auroc_from_pairs(pairs: &[(f64, bool)]) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(pairs);
    if n_pos == 0 || n_neg == 0 {
        return Err(CoreError::DegenerateStatistics(format!(
            "auroc needs both classes; got {n_pos} correct and {n_neg} incorrect"
        )));
    }
    let mut sorted: Vec<(f64, bool)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut doubled_pos_ranks: u64 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let doubled = (i + j + 1) as u64;
        doubled_pos_ranks += doubled * sorted[i..j].iter().filter(|(_, l)| *l).count() as u64;
        i = j;
    }
    // 2U = sum of doubled positive ranks minus its minimum n_pos(n_pos+1).
    let two_u = doubled_pos_ranks - n_pos * (n_pos + 1);
    Ok(two_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Reference AUROC by exhaustive pair comparison (wins count 2, ties 1,
/// in doubled units). Quadratic; exists to cross-check the rank path.
pub fn auroc_pairwise(pairs: &[(f64, bool)]) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(pairs);
    if n_pos == 0 || n_neg == 0 {
        return Err(CoreError::DegenerateStatistics(format!(
            "auroc needs both classes; got {n_pos} correct and {n_neg} incorrect"
        )));
    }
    let mut doubled_wins: u64 = 0;
    for &(sp, lp) in pairs.iter().filter(|(_, l)| *l) {
        let _ = lp;
        for &(sn, _) in pairs.iter().filter(|(_, l)| !*l) {
            if sp > sn {
                doubled_wins += 2;
            } else if sp == sn {
                doubled_wins += 1;
            }
        }
    }
    Ok(doubled_wins as f64 / (2 * n_pos * n_neg) as f64)
}

/// AUPR of the named score for retrieving correct records.
pub fn aupr(records: &[VerificationRecord], score_name: &str) -> Result<f64> {
    aupr_from_pairs(&extract_pairs(records, score_name)?)
}

/// Step-interpolated area under precision-recall, sweeping descending
/// distinct score thresholds. Records tied at a threshold enter together.
pub fn aupr_from_pairs(pairs: &[(f64, bool)]) -> Result<f64> {
    let (n_pos, _) = class_counts(pairs);
    if n_pos == 0 {
        return Err(CoreError::DegenerateStatistics(
            "aupr needs at least one correct record".into(),
        ));
    }
    let mut sorted: Vec<(f64, bool)> = pairs.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        for &(_, l) in &sorted[i..j] {
            if l {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / n_pos as f64;
        ap += (recall - prev_recall) * (tp as f64 / (tp + fp) as f64);
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

/// Reference AUPR: re-scans the whole input at every distinct threshold.
/// Accumulates the identical staircase terms in the identical order as
/// [`aupr_from_pairs`], so agreement is exact.
pub fn aupr_sweep(pairs: &[(f64, bool)]) -> Result<f64> {
    let (n_pos, _) = class_counts(pairs);
    if n_pos == 0 {
        return Err(CoreError::DegenerateStatistics(
            "aupr needs at least one correct record".into(),
        ));
    }
    let mut thresholds: Vec<f64> = pairs.iter().map(|(s, _)| *s).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    for theta in thresholds {
        let tp = pairs.iter().filter(|(s, l)| *l && *s >= theta).count() as u64;
        let fp = pairs.iter().filter(|(s, l)| !*l && *s >= theta).count() as u64;
        let recall = tp as f64 / n_pos as f64;
        ap += (recall - prev_recall) * (tp as f64 / (tp + fp) as f64);
        prev_recall = recall;
    }
    Ok(ap)
}

/// Accuracy gain over the single-sample baseline per extra sample drawn:
/// (acc - acc_std) / (n_avg - 1).
pub fn sample_efficiency(acc: f64, acc_std: f64, n_avg: f64) -> Result<f64> {
    if !n_avg.is_finite() || n_avg <= 1.0 {
        return Err(CoreError::InvalidInput(format!(
            "sample efficiency needs mean sample count > 1, got {n_avg}"
        )));
    }
    Ok((acc - acc_std) / (n_avg - 1.0))
}

/// Six component scores of one record, in canonical order.
pub fn component_features(record: &VerificationRecord) -> Result<[f64; 6]> {
    let mut f = [0.0; 6];
    for (slot, key) in f.iter_mut().zip(crate::metrics::Components::NAMES) {
        *slot = record.score(key)?;
    }
    Ok(f)
}

/// Grid-search the weight simplex (steps of 1/resolution per component)
/// for the profile whose re-weighted composite maximizes AUROC. Ties keep
/// the first profile in enumeration order, which starts from all weight
/// on the token component. Returns the winner and its AUROC.
pub fn fit_weights(
    records: &[VerificationRecord],
    resolution: usize,
) -> Result<(WeightProfile, f64)> {
    if resolution == 0 {
        return Err(CoreError::InvalidInput("weight grid resolution must be >= 1".into()));
    }
    let features: Vec<[f64; 6]> = records.iter().map(component_features).collect::<Result<_>>()?;
    let labels: Vec<bool> = records.iter().map(|r| r.label).collect();
    let mut best: Option<(WeightProfile, f64)> = None;
    let mut parts = [0usize; 6];
    enumerate_compositions(resolution, 0, &mut parts, &mut |parts| {
        let w = parts.map(|p| p as f64 / resolution as f64);
        let pairs: Vec<(f64, bool)> = features
            .iter()
            .zip(&labels)
            .map(|(f, &l)| (f.iter().zip(w).map(|(x, wi)| x * wi).sum(), l))
            .collect();
        let value = auroc_from_pairs(&pairs)?;
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((WeightProfile::from_array(w), value));
        }
        Ok(())
    })?;
    Ok(best.expect("simplex grid is never empty"))
}

/// All length-6 compositions of `total`, first coordinate descending.
fn enumerate_compositions(
    total: usize,
    dim: usize,
    parts: &mut [usize; 6],
    visit: &mut impl FnMut(&[usize; 6]) -> Result<()>,
) -> Result<()> {
    if dim == 5 {
        parts[5] = total;
        return visit(parts);
    }
    for v in (0..=total).rev() {
        parts[dim] = v;
        enumerate_compositions(total - v, dim + 1, parts, visit)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::collections::BTreeMap;

    fn recs(pairs: &[(f64, bool)]) -> Vec<VerificationRecord> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(s, l))| VerificationRecord {
                query_id: i as u64,
                candidate: String::new(),
                label: l,
                scores: BTreeMap::from([("bmc".to_string(), s)]),
            })
            .collect()
    }

    #[test]
    fn auroc_perfect_separation() {
        let r = recs(&[(0.9, true), (0.8, true), (0.2, false), (0.1, false)]);
        assert_eq!(auroc(&r, "bmc").unwrap(), 1.0);
    }

    #[test]
    fn auroc_all_ties_is_half() {
        let r = recs(&[(0.5, true), (0.5, false), (0.5, true), (0.5, false), (0.5, false)]);
        assert_eq!(auroc(&r, "bmc").unwrap(), 0.5);
    }

    #[test]
    fn auroc_hand_fixture() {
        // pairs: (0.8 vs 0.6) win, (0.8 vs 0.2) win, (0.4 vs 0.6) loss,
        // (0.4 vs 0.2) win -> 3/4.
        let r = recs(&[(0.8, true), (0.4, true), (0.6, false), (0.2, false)]);
        assert_eq!(auroc(&r, "bmc").unwrap(), 0.75);
    }

    #[test]
    fn auroc_single_class_rejected() {
        let r = recs(&[(0.8, true), (0.4, true)]);
        assert!(matches!(auroc(&r, "bmc"), Err(CoreError::DegenerateStatistics(_))));
    }

    #[test]
    fn auroc_missing_or_nonfinite_score_rejected() {
        let mut r = recs(&[(0.8, true), (0.4, false)]);
        assert!(matches!(auroc(&r, "nope"), Err(CoreError::Data(_))));
        r[0].scores.insert("bmc".into(), f64::NAN);
        assert!(matches!(auroc(&r, "bmc"), Err(CoreError::Data(_))));
    }

    #[test]
    fn auroc_matches_pairwise_on_random_fixtures() {
        let mut rng = rng_from_seed(11);
        for _ in 0..300 {
            let n = rng.gen_range(2..=60);
            let pairs: Vec<(f64, bool)> = (0..n)
                // coarse score grid forces plenty of ties
                .map(|_| ((rng.gen_range(0..8) as f64) / 8.0, rng.gen::<bool>()))
                .collect();
            let (np, nn) = class_counts(&pairs);
            if np == 0 || nn == 0 {
                continue;
            }
            let fast = auroc_from_pairs(&pairs).unwrap();
            let brute = auroc_pairwise(&pairs).unwrap();
            assert_eq!(fast, brute, "exact equality required, pairs {pairs:?}");
        }
    }

    #[test]
    fn auroc_invariant_under_monotone_transform() {
        let pairs = vec![(0.9, true), (0.3, false), (0.5, true), (0.5, false), (0.1, false)];
        let base = auroc_from_pairs(&pairs).unwrap();
        let squashed: Vec<(f64, bool)> =
            pairs.iter().map(|&(s, l)| ((3.0 * s + 1.0).ln(), l)).collect();
        assert_eq!(auroc_from_pairs(&squashed).unwrap(), base);
    }

    #[test]
    fn aupr_perfect_separation() {
        // four positives (power-of-two recall steps keep the sum exact)
        let r = recs(&[
            (0.9, true),
            (0.8, true),
            (0.7, true),
            (0.6, true),
            (0.2, false),
            (0.1, false),
        ]);
        assert_eq!(aupr(&r, "bmc").unwrap(), 1.0);
    }

    #[test]
    fn aupr_four_record_staircase() {
        // thresholds desc: 0.9 -> (r 1/2, p 1); 0.8 -> no recall gain;
        // 0.7 -> (r 1, p 2/3); 0.1 -> no gain. AP = 1/2 + 1/2 * 2/3 = 5/6.
        let r = recs(&[(0.9, true), (0.8, false), (0.7, true), (0.1, false)]);
        assert_abs_diff_eq!(aupr(&r, "bmc").unwrap(), 5.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn aupr_no_positives_rejected() {
        let r = recs(&[(0.8, false), (0.4, false)]);
        assert!(matches!(aupr(&r, "bmc"), Err(CoreError::DegenerateStatistics(_))));
    }

    #[test]
    fn aupr_matches_sweep_on_random_fixtures() {
        let mut rng = rng_from_seed(12);
        for _ in 0..300 {
            let n = rng.gen_range(1..=60);
            let pairs: Vec<(f64, bool)> = (0..n)
                .map(|_| ((rng.gen_range(0..6) as f64) / 6.0, rng.gen::<bool>()))
                .collect();
            if class_counts(&pairs).0 == 0 {
                continue;
            }
            assert_eq!(aupr_from_pairs(&pairs).unwrap(), aupr_sweep(&pairs).unwrap());
        }
    }

    #[test]
    fn aupr_of_uninformative_scores_approaches_positive_rate() {
        let mut rng = rng_from_seed(13);
        let pairs: Vec<(f64, bool)> =
            (0..2000).map(|_| (rng.gen::<f64>(), rng.gen::<f64>() < 0.3)).collect();
        let p = class_counts(&pairs).0 as f64 / pairs.len() as f64;
        let ap = aupr_from_pairs(&pairs).unwrap();
        assert!((ap - p).abs() < 0.05, "ap {ap} vs positive rate {p}");
    }

    #[test]
    fn sample_efficiency_fixtures() {
        assert_eq!(sample_efficiency(0.7, 0.7, 3.0).unwrap(), 0.0);
        let eff = sample_efficiency(74.3, 70.5, 3.0).unwrap();
        assert_abs_diff_eq!(eff, 1.9, epsilon = 1e-12);
        // reported-from-unrounded counterpart is 1.86; rounded inputs land close
        assert!((eff - 1.86).abs() <= 0.05);
        let eff = sample_efficiency(79.5, 70.5, 3.26).unwrap();
        assert_abs_diff_eq!(eff, 9.0 / 2.26, epsilon = 1e-12);
        assert_abs_diff_eq!(eff, 3.98, epsilon = 0.005);
        assert!(sample_efficiency(0.8, 0.7, 1.0).is_err());
        assert!(sample_efficiency(0.8, 0.7, 0.5).is_err());
    }

    #[test]
    fn fit_weights_finds_the_separating_component() {
        let mut rng = rng_from_seed(14);
        let records: Vec<VerificationRecord> = (0..80)
            .map(|i| {
                let label = i % 2 == 0;
                let mut scores = BTreeMap::new();
                // s_tok separates perfectly; the rest are label-free noise
                scores.insert("s_tok".to_string(), if label { 0.9 } else { 0.1 });
                for key in ["s_sem", "s_num", "s_ans", "s_char", "s_conf"] {
                    scores.insert(key.to_string(), rng.gen::<f64>());
                }
                VerificationRecord {
                    query_id: i,
                    candidate: String::new(),
                    label,
                    scores,
                }
            })
            .collect();
        let (profile, value) = fit_weights(&records, 4).unwrap();
        assert_eq!(value, 1.0);
        // ties resolve to the first enumerated profile: all weight on s_tok
        assert_eq!(profile.as_array(), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn composition_count_matches_stars_and_bars() {
        let mut count = 0;
        let mut parts = [0usize; 6];
        enumerate_compositions(4, 0, &mut parts, &mut |p| {
            assert_eq!(p.iter().sum::<usize>(), 4);
            count += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(count, 126); // C(9, 5)
    }
}
