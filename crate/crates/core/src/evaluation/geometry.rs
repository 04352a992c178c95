//! Density/quality structure of the six-component score space.
//!
//! Correct solutions should sit in dense regions of the component-score
//! cloud and score high on average; the report quantifies that link with
//! a Spearman correlation, a linear-fit R², quadrant occupancy fractions,
//! and a chi-squared independence test of correctness across density bins.

use super::{component_features, VerificationRecord};
use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Feature dimension: the six component scores.
pub const FEATURE_DIM: usize = 6;

/// One scored record placed in feature space. `quality` is always the
/// arithmetic mean of `features`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryPoint {
    pub features: [f64; FEATURE_DIM],
    pub density: f64,
    pub quality: f64,
    pub label: bool,
}

/// How the dense/sparse cutoffs for the quadrant fractions are chosen.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityThresholds {
    /// Cutoffs at these density quantiles (transferable across denoisers).
    Percentile { high: f64, low: f64 },
    /// Fixed density values.
    Absolute { high: f64, low: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub density_thresholds: DensityThresholds,
    /// Quality below this counts as low-quality.
    pub quality_low: f64,
    /// Quality above this counts as high-quality.
    pub quality_high: f64,
    /// Equal-count density bins for the independence test.
    pub density_bins: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            density_thresholds: DensityThresholds::Percentile { high: 0.75, low: 0.25 },
            quality_low: 0.5,
            quality_high: 0.8,
            density_bins: 5,
        }
    }
}

impl GeometryConfig {
    fn validate(&self) -> Result<()> {
        if let DensityThresholds::Percentile { high, low } = self.density_thresholds {
            if !(0.0..=1.0).contains(&low) || !(0.0..=1.0).contains(&high) || low > high {
                return Err(CoreError::InvalidInput(format!(
                    "density percentiles must satisfy 0 <= low <= high <= 1, got {low}/{high}"
                )));
            }
        }
        if self.density_bins < 2 {
            return Err(CoreError::InvalidInput("need at least 2 density bins".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryReport {
    pub n: usize,
    /// Rank correlation between density and quality.
    pub spearman_rho: f64,
    /// Squared Pearson correlation of the density-quality linear fit.
    pub r_squared: f64,
    /// Fraction of records that are dense yet low-quality.
    pub high_density_low_quality: f64,
    /// Fraction of records that are sparse yet high-quality.
    pub low_density_high_quality: f64,
    pub chi_squared: f64,
    pub chi_squared_df: usize,
    pub chi_squared_p: f64,
    pub points: Vec<GeometryPoint>,
}

/// Fewest records for a meaningful density estimate.
pub const MIN_GEOMETRY_RECORDS: usize = 50;

/// Kernel density at every point: product Gaussian with per-dimension
/// Scott bandwidth h_d = sigma_d * n^(-1/(d+4)).
///
/// The exponent uses the nominal feature dimension, so dropping a flat
/// dimension does not rescale the surviving ones. Dimensions with zero
/// sample variance carry no information and are skipped; if all are flat
/// the density is undefined.
pub fn kde_densities(features: &[[f64; FEATURE_DIM]]) -> Result<Vec<f64>> {
    let n = features.len();
    if n < 2 {
        return Err(CoreError::DegenerateStatistics(
            "kernel density needs at least 2 points".into(),
        ));
    }
    let nf = n as f64;
    let scott = nf.powf(-1.0 / (FEATURE_DIM as f64 + 4.0));
    let mut bandwidths = Vec::new();
    for d in 0..FEATURE_DIM {
        let mean = features.iter().map(|f| f[d]).sum::<f64>() / nf;
        let var = features.iter().map(|f| (f[d] - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        if var > 0.0 {
            bandwidths.push((d, var.sqrt() * scott));
        }
    }
    if bandwidths.is_empty() {
        return Err(CoreError::DegenerateStatistics(
            "every feature dimension is constant; density is undefined".into(),
        ));
    }
    let norm: f64 = bandwidths
        .iter()
        .map(|(_, h)| 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt()))
        .product();
    let densities = features
        .iter()
        .map(|fi| {
            let total: f64 = features
                .iter()
                .map(|fj| {
                    let d2: f64 =
                        bandwidths.iter().map(|&(d, h)| ((fi[d] - fj[d]) / h).powi(2)).sum();
                    (-0.5 * d2).exp()
                })
                .sum();
            norm * total / nf
        })
        .collect();
    Ok(densities)
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(CoreError::InvalidInput(format!(
            "correlation inputs differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(CoreError::DegenerateStatistics("correlation needs >= 2 points".into()));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CoreError::DegenerateStatistics(
            "correlation is undefined for a constant input".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Average ranks (1-based); tied values share the mean of their span.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation: Pearson on average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(CoreError::InvalidInput(format!(
            "correlation inputs differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Quantile by linear interpolation over the sorted sample, p in [0, 1].
pub fn quantile(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(CoreError::DegenerateStatistics("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(CoreError::InvalidInput(format!("quantile level {p} outside [0, 1]")));
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Chi-squared independence test of class counts across bins. Input is
/// (correct, incorrect) per bin; df = bins - 1 (two classes). Returns
/// (statistic, df, p-value).
pub fn chi_squared_independence(bins: &[(u64, u64)]) -> Result<(f64, usize, f64)> {
    if bins.len() < 2 {
        return Err(CoreError::InvalidInput("independence test needs >= 2 bins".into()));
    }
    let col_pos: u64 = bins.iter().map(|b| b.0).sum();
    let col_neg: u64 = bins.iter().map(|b| b.1).sum();
    if col_pos == 0 || col_neg == 0 {
        return Err(CoreError::DegenerateStatistics(
            "independence test needs both classes".into(),
        ));
    }
    let n = (col_pos + col_neg) as f64;
    let mut stat = 0.0;
    for &(pos, neg) in bins {
        let row = pos + neg;
        if row == 0 {
            return Err(CoreError::InvalidInput("empty density bin".into()));
        }
        for (observed, col) in [(pos, col_pos), (neg, col_neg)] {
            let expected = row as f64 * col as f64 / n;
            stat += (observed as f64 - expected).powi(2) / expected;
        }
    }
    let df = bins.len() - 1;
    let p = 1.0 - ChiSquared::new(df as f64).expect("df >= 1").cdf(stat);
    Ok((stat, df, p))
}

/// Split records into equal-count bins by ascending density (ties broken
/// by index, leftovers spread over the leading bins) and count classes.
fn density_class_bins(points: &[GeometryPoint], bins: usize) -> Vec<(u64, u64)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].density.total_cmp(&points[b].density).then(a.cmp(&b)));
    let base = points.len() / bins;
    let extra = points.len() % bins;
    let mut counts = vec![(0u64, 0u64); bins];
    let mut cursor = 0;
    for (b, slot) in counts.iter_mut().enumerate() {
        let size = base + usize::from(b < extra);
        for &idx in &order[cursor..cursor + size] {
            if points[idx].label {
                slot.0 += 1;
            } else {
                slot.1 += 1;
            }
        }
        cursor += size;
    }
    counts
}

/// Full density/quality analysis over (features, label) rows.
pub fn geometric_validation(
    rows: &[([f64; FEATURE_DIM], bool)],
    config: &GeometryConfig,
) -> Result<GeometryReport> {
    config.validate()?;
    if rows.len() < MIN_GEOMETRY_RECORDS {
        return Err(CoreError::InvalidInput(format!(
            "geometry analysis needs >= {MIN_GEOMETRY_RECORDS} records, got {}",
            rows.len()
        )));
    }
    let features: Vec<[f64; FEATURE_DIM]> = rows.iter().map(|(f, _)| *f).collect();
    let densities = kde_densities(&features)?;
    let points: Vec<GeometryPoint> = rows
        .iter()
        .zip(&densities)
        .map(|(&(features, label), &density)| GeometryPoint {
            features,
            density,
            quality: features.iter().sum::<f64>() / FEATURE_DIM as f64,
            label,
        })
        .collect();
    let density: Vec<f64> = points.iter().map(|p| p.density).collect();
    let quality: Vec<f64> = points.iter().map(|p| p.quality).collect();
    let rho = spearman_rho(&density, &quality)?;
    let r = pearson(&density, &quality)?;

    let (thr_high, thr_low) = match config.density_thresholds {
        DensityThresholds::Absolute { high, low } => (high, low),
        DensityThresholds::Percentile { high, low } => {
            let mut sorted = density.clone();
            sorted.sort_by(f64::total_cmp);
            (quantile(&sorted, high)?, quantile(&sorted, low)?)
        }
    };
    let n = points.len() as f64;
    let dense_bad = points
        .iter()
        .filter(|p| p.density >= thr_high && p.quality < config.quality_low)
        .count() as f64;
    let sparse_good = points
        .iter()
        .filter(|p| p.density <= thr_low && p.quality > config.quality_high)
        .count() as f64;

    let (chi, df, p) = chi_squared_independence(&density_class_bins(&points, config.density_bins))?;
    Ok(GeometryReport {
        n: points.len(),
        spearman_rho: rho,
        r_squared: r * r,
        high_density_low_quality: dense_bad / n,
        low_density_high_quality: sparse_good / n,
        chi_squared: chi,
        chi_squared_df: df,
        chi_squared_p: p,
        points,
    })
}

/// Convenience wrapper: pull the six component scores out of records.
pub fn geometry_from_records(
    records: &[VerificationRecord],
    config: &GeometryConfig,
) -> Result<GeometryReport> {
    let rows: Vec<([f64; FEATURE_DIM], bool)> = records
        .iter()
        .map(|r| Ok((component_features(r)?, r.label)))
        .collect::<Result<_>>()?;
    geometric_validation(&rows, config)
}
