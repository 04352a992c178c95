//! Diagnosis harness: score labeled candidates, measure how well each
//! score separates correct from incorrect solutions, sweep estimator
//! knobs, and analyze the density/quality geometry of the score space.

mod ablation;
mod geometry;
mod ranking;

pub use ablation::{
    ablation_suite, cross_entropy_score, result_cross_entropy, AblationAxis, AblationRow,
};
pub use geometry::{
    chi_squared_independence, geometric_validation, geometry_from_records, kde_densities,
    pearson, quantile, spearman_rho, DensityThresholds, GeometryConfig, GeometryPoint,
    GeometryReport, FEATURE_DIM, MIN_GEOMETRY_RECORDS,
};
pub use ranking::{
    aupr, aupr_from_pairs, aupr_sweep, auroc, auroc_from_pairs, auroc_pairwise,
    component_features, fit_weights, sample_efficiency,
};

use crate::denoiser::{CorpusRecord, Denoiser};
use crate::error::{CoreError, Result};
use crate::estimator::{bmc_score, BmcConfig};
use crate::inference::model_confidence;
use crate::metrics::Components;
use crate::rng::derive_seed;
use crate::vocab::Lexicon;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One scored candidate, the row format every analysis here consumes.
/// `label` is true for correct solutions; `scores` maps score names
/// ("bmc", "confidence", the six components, ...) to values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationRecord {
    pub query_id: u64,
    pub candidate: String,
    pub label: bool,
    pub scores: BTreeMap<String, f64>,
}

impl VerificationRecord {
    pub fn score(&self, name: &str) -> Result<f64> {
        self.scores.get(name).copied().ok_or_else(|| {
            CoreError::Data(format!("record {} has no score named '{name}'", self.query_id))
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.scores.is_empty() {
            return Err(CoreError::Data(format!("record {} carries no scores", self.query_id)));
        }
        Ok(())
    }
}

/// Serialize records as JSON Lines. BTreeMap keys keep the byte output
/// deterministic.
pub fn records_to_jsonl(records: &[VerificationRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| CoreError::Data(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

/// Parse JSON Lines into validated records; blank lines are skipped.
pub fn records_from_jsonl(text: &str) -> Result<Vec<VerificationRecord>> {
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: VerificationRecord = serde_json::from_str(line)
            .map_err(|e| CoreError::Data(format!("line {}: {e}", lineno + 1)))?;
        r.validate()?;
        records.push(r);
    }
    Ok(records)
}

/// Score one corpus candidate with both the consistency estimate and the
/// model-confidence baseline. The record seed is derived from the run
/// seed and the record index, so scoring is independent of batch order.
fn score_record(
    index: usize,
    record: &CorpusRecord,
    denoiser: &dyn Denoiser,
    lexicon: &Lexicon,
    config: &BmcConfig,
) -> Result<VerificationRecord> {
    let cfg = BmcConfig { seed: derive_seed(config.seed, index as u64), ..config.clone() };
    let result = bmc_score(&record.problem.query, &record.candidate, denoiser, lexicon, &cfg)?;
    let mut scores = BTreeMap::new();
    scores.insert("bmc".to_string(), result.mean_composite);
    for (name, value) in Components::NAMES.iter().zip(result.mean_components.as_array()) {
        scores.insert(name.to_string(), value);
    }
    scores.insert(
        "confidence".to_string(),
        model_confidence(&record.problem.query, &record.candidate, denoiser, record.candidate.len())?,
    );
    if cfg.keep_transcripts {
        scores.insert(
            "s_ce".to_string(),
            result_cross_entropy(&record.candidate, &result)?,
        );
    }
    Ok(VerificationRecord {
        query_id: index as u64,
        candidate: lexicon.render(&record.candidate),
        label: record.label,
        scores,
    })
}

/// Score every corpus candidate sequentially.
pub fn diagnose(
    records: &[CorpusRecord],
    denoiser: &dyn Denoiser,
    lexicon: &Lexicon,
    config: &BmcConfig,
) -> Result<Vec<VerificationRecord>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| score_record(i, r, denoiser, lexicon, config))
        .collect()
}

/// Score candidates across worker threads. Output is identical to
/// [`diagnose`] because record seeds depend only on the record index;
/// denoisers that refuse concurrent calls force a single worker.
pub fn diagnose_parallel<D: Denoiser + Sync>(
    records: &[CorpusRecord],
    denoiser: &D,
    lexicon: &Lexicon,
    config: &BmcConfig,
    workers: usize,
) -> Result<Vec<VerificationRecord>> {
    let workers = if denoiser.concurrent_callable() { workers.max(1) } else { 1 };
    if workers == 1 || records.len() <= 1 {
        return diagnose(records, denoiser, lexicon, config);
    }
    let mut slots: Vec<Option<VerificationRecord>> = vec![None; records.len()];
    let chunk = records.len().div_ceil(workers);
    let parts = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || -> Result<Vec<(usize, VerificationRecord)>> {
                    let lo = (w * chunk).min(records.len());
                    let hi = ((w + 1) * chunk).min(records.len());
                    records[lo..hi]
                        .iter()
                        .enumerate()
                        .map(|(off, r)| {
                            Ok((lo + off, score_record(lo + off, r, denoiser, lexicon, config)?))
                        })
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scoring worker panicked"))
            .collect::<Vec<_>>()
    });
    for part in parts {
        for (i, rec) in part? {
            slots[i] = Some(rec);
        }
    }
    Ok(slots.into_iter().map(|s| s.expect("every index scored")).collect())
}
