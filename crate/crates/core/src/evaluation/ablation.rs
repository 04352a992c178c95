//! Grid sweeps over estimator knobs, plus the cross-entropy diagnostic
//! that only exists inside these sweeps.

use super::ranking::{aupr_from_pairs, auroc_from_pairs};
use crate::denoiser::{CorpusRecord, CountingDenoiser, Denoiser};
use crate::diffusion::Transcript;
use crate::error::{CoreError, Result};
use crate::estimator::{bmc_score, BmcConfig, BmcResult};
use crate::metrics::WeightProfile;
use crate::rng::derive_seed;
use crate::vocab::{Lexicon, TokenSequence};
use serde::{Deserialize, Serialize};

/// Probability-calibration score of a reconstruction trace: the mean
/// log-probability the denoiser assigned to the *true* token at the step
/// each position was revealed, mapped through exp onto (0, 1] so it is
/// comparable with the similarity components. A denoiser that is certain
/// of every true token scores 1; assigning probability zero anywhere
/// collapses the score to 0.
pub fn cross_entropy_score(x0: &TokenSequence, transcript: &Transcript) -> Result<f64> {
    let mut total_log = 0.0;
    let mut events = 0usize;
    for step in &transcript.steps {
        for ev in step {
            if ev.position >= x0.len() {
                return Err(CoreError::InvalidInput(format!(
                    "transcript reveals position {} outside the {}-token sequence",
                    ev.position,
                    x0.len()
                )));
            }
            total_log += ev.row[x0.get(ev.position) as usize].ln();
            events += 1;
        }
    }
    if events == 0 {
        return Err(CoreError::Data(
            "transcript holds no reveal events; reconstruct with transcripts enabled".into(),
        ));
    }
    Ok((total_log / events as f64).exp())
}

/// Mean cross-entropy score over the repetitions of one estimate.
/// Requires the estimate to have kept its transcripts.
pub fn result_cross_entropy(solution: &TokenSequence, result: &BmcResult) -> Result<f64> {
    if result.transcripts.is_empty() {
        return Err(CoreError::Data(
            "estimate kept no transcripts; enable keep_transcripts".into(),
        ));
    }
    let mut total = 0.0;
    for t in &result.transcripts {
        total += cross_entropy_score(solution, t)?;
    }
    Ok(total / result.transcripts.len() as f64)
}

/// One knob to sweep while everything else stays at the base config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    /// Reverse steps per reconstruction.
    StepsK(Vec<usize>),
    /// Masking ratio.
    Gamma(Vec<f64>),
    /// Mask/reconstruct repetitions.
    Ensemble(Vec<usize>),
    /// Score definitions: the six component names, "composite", or
    /// "composite_ce" (the composite extended with the cross-entropy
    /// diagnostic as a seventh equal-weight member).
    Components(Vec<String>),
}

impl AblationAxis {
    pub fn name(&self) -> &'static str {
        match self {
            AblationAxis::StepsK(_) => "steps_k",
            AblationAxis::Gamma(_) => "gamma",
            AblationAxis::Ensemble(_) => "n_ensemble",
            AblationAxis::Components(_) => "components",
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            AblationAxis::StepsK(g) => g.is_empty(),
            AblationAxis::Gamma(g) => g.is_empty(),
            AblationAxis::Ensemble(g) => g.is_empty(),
            AblationAxis::Components(g) => g.is_empty(),
        }
    }
}

const COMPONENT_SETTINGS: [&str; 8] =
    ["s_tok", "s_sem", "s_num", "s_ans", "s_char", "s_conf", "composite", "composite_ce"];

/// One grid point of one seed: discrimination quality plus the measured
/// verification cost (mean denoiser calls per record).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub axis: String,
    pub setting: String,
    pub seed: u64,
    pub auroc: f64,
    pub aupr: f64,
    pub step_cost: f64,
}

/// Score every corpus candidate under one config; returns per-record
/// estimates and the measured mean denoiser calls per record.
fn run_grid_point(
    records: &[CorpusRecord],
    denoiser: &dyn Denoiser,
    lexicon: &Lexicon,
    config: &BmcConfig,
) -> Result<(Vec<BmcResult>, f64)> {
    let counting = CountingDenoiser::new(denoiser);
    let mut results = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let cfg = BmcConfig { seed: derive_seed(config.seed, i as u64), ..config.clone() };
        results.push(bmc_score(&r.problem.query, &r.candidate, &counting, lexicon, &cfg)?);
    }
    Ok((results, counting.calls() as f64 / records.len() as f64))
}

fn discrimination(pairs: &[(f64, bool)]) -> Result<(f64, f64)> {
    Ok((auroc_from_pairs(pairs)?, aupr_from_pairs(pairs)?))
}

/// Sweep one axis over the corpus, once per seed. Every row reports
/// AUROC/AUPR of the swept score against the corpus labels, and the
/// verification cost actually incurred (which the repetition-count and
/// step-count axes change, while score-definition sweeps reuse a single
/// run and so share one cost).
pub fn ablation_suite(
    records: &[CorpusRecord],
    denoiser: &dyn Denoiser,
    lexicon: &Lexicon,
    axis: &AblationAxis,
    base: &BmcConfig,
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    if axis.is_empty() || seeds.is_empty() {
        return Err(CoreError::InvalidInput("ablation grid and seeds must be non-empty".into()));
    }
    if records.is_empty() {
        return Err(CoreError::InvalidInput("ablation needs a non-empty corpus".into()));
    }
    if let AblationAxis::Components(names) = axis {
        for n in names {
            if !COMPONENT_SETTINGS.contains(&n.as_str()) {
                return Err(CoreError::InvalidInput(format!(
                    "unknown score setting '{n}'; expected one of {COMPONENT_SETTINGS:?}"
                )));
            }
        }
    }
    let labels: Vec<bool> = records.iter().map(|r| r.label).collect();
    let mut rows = Vec::new();
    match axis {
        AblationAxis::StepsK(grid) => {
            for &k in grid {
                for &seed in seeds {
                    let cfg = BmcConfig { steps_k: k, seed, ..base.clone() };
                    let (results, cost) = run_grid_point(records, denoiser, lexicon, &cfg)?;
                    push_composite_row(&mut rows, axis, k.to_string(), seed, &results, &labels, cost)?;
                }
            }
        }
        AblationAxis::Gamma(grid) => {
            for &g in grid {
                for &seed in seeds {
                    let cfg = BmcConfig { gamma: g, seed, ..base.clone() };
                    let (results, cost) = run_grid_point(records, denoiser, lexicon, &cfg)?;
                    push_composite_row(&mut rows, axis, g.to_string(), seed, &results, &labels, cost)?;
                }
            }
        }
        AblationAxis::Ensemble(grid) => {
            for &n in grid {
                for &seed in seeds {
                    let cfg = BmcConfig { n_ensemble: n, seed, ..base.clone() };
                    let (results, cost) = run_grid_point(records, denoiser, lexicon, &cfg)?;
                    push_composite_row(&mut rows, axis, n.to_string(), seed, &results, &labels, cost)?;
                }
            }
        }
        AblationAxis::Components(names) => {
            // one run per seed serves every score definition
            for &seed in seeds {
                let cfg = BmcConfig { keep_transcripts: true, seed, ..base.clone() };
                let (results, cost) = run_grid_point(records, denoiser, lexicon, &cfg)?;
                let uniform = WeightProfile::uniform();
                for name in names {
                    let mut pairs = Vec::with_capacity(results.len());
                    for ((res, record), &label) in results.iter().zip(records).zip(&labels) {
                        let c = res.mean_components.as_array();
                        let score = match name.as_str() {
                            "composite" => crate::metrics::composite(&res.mean_components, &uniform)?,
                            "composite_ce" => {
                                let ce = result_cross_entropy(&record.candidate, res)?;
                                (c.iter().sum::<f64>() + ce) / 7.0
                            }
                            component => {
                                let idx = COMPONENT_SETTINGS
                                    .iter()
                                    .position(|s| s == &component)
                                    .expect("validated above");
                                c[idx]
                            }
                        };
                        pairs.push((score, label));
                    }
                    let (auroc, aupr) = discrimination(&pairs)?;
                    rows.push(AblationRow {
                        axis: axis.name().into(),
                        setting: name.clone(),
                        seed,
                        auroc,
                        aupr,
                        step_cost: cost,
                    });
                }
            }
        }
    }
    Ok(rows)
}

fn push_composite_row(
    rows: &mut Vec<AblationRow>,
    axis: &AblationAxis,
    setting: String,
    seed: u64,
    results: &[BmcResult],
    labels: &[bool],
    step_cost: f64,
) -> Result<()> {
    let pairs: Vec<(f64, bool)> =
        results.iter().zip(labels).map(|(r, &l)| (r.mean_composite, l)).collect();
    let (auroc, aupr) = discrimination(&pairs)?;
    rows.push(AblationRow { axis: axis.name().into(), setting, seed, auroc, aupr, step_cost });
    Ok(())
}
