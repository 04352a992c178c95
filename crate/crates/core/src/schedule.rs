//! Forward-corruption noise schedule for the absorbing-state chain.
//!
//! A schedule is the vector of per-step mask rates `beta[t]` for
//! `t = 1..=T` together with the survival products
//! `alpha_bar[t] = prod_{s<=t} (1 - beta[s])`. `alpha_bar[t]` is the
//! probability that a token is still visible at step `t`; `alpha_bar[0] = 1`
//! and the values are non-increasing. The products are stored as computed,
//! so `alpha_bar[t] == alpha_bar[t-1] * (1 - beta[t])` holds bit-exactly.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    /// `betas[t-1]` is the mask rate of step `t`.
    betas: Vec<f64>,
    /// `alpha_bars[t]` is the survival probability after step `t`;
    /// index 0 is the clean state.
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Build from per-step mask rates. Each rate must lie in `[0, 1]` and
    /// the terminal survival probability must be strictly below 1 so the
    /// chain actually corrupts.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(CoreError::InvalidInput("schedule needs at least one step".into()));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        for (i, &b) in betas.iter().enumerate() {
            if !(0.0..=1.0).contains(&b) {
                return Err(CoreError::InvalidInput(format!(
                    "beta[{}] = {b} outside [0, 1]",
                    i + 1
                )));
            }
            let prev = *alpha_bars.last().unwrap();
            alpha_bars.push(prev * (1.0 - b));
        }
        let terminal = *alpha_bars.last().unwrap();
        if terminal >= 1.0 {
            return Err(CoreError::InvalidInput(
                "terminal survival probability must be < 1".into(),
            ));
        }
        Ok(Self { betas, alpha_bars })
    }

    /// Schedule whose survival probability decays linearly to zero:
    /// `alpha_bar[t] = (T - t) / T`, realized through
    /// `beta[t] = 1 / (T - t + 1)`.
    pub fn linear(total_steps: usize) -> Result<Self> {
        if total_steps == 0 {
            return Err(CoreError::InvalidInput("schedule needs at least one step".into()));
        }
        let betas = (1..=total_steps)
            .map(|t| 1.0 / (total_steps - t + 1) as f64)
            .collect();
        Self::from_betas(betas)
    }

    pub fn total_steps(&self) -> usize {
        self.betas.len()
    }

    /// Mask rate of step `t`, `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.betas.len() {
            return Err(CoreError::StepOutOfRange { t, max: self.betas.len() });
        }
        Ok(self.betas[t - 1])
    }

    /// Survival probability after step `t`, `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bars
            .get(t)
            .copied()
            .ok_or(CoreError::StepOutOfRange { t, max: self.betas.len() })
    }

    /// Largest `t` whose survival probability is still at least
    /// `1 - gamma`; clamped to at least 1 so a corrupted sequence always
    /// has a step to reverse from.
    pub fn start_step_for_mask_fraction(&self, gamma: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(CoreError::InvalidInput(format!("gamma = {gamma} outside [0, 1]")));
        }
        let target = 1.0 - gamma;
        let mut best = 0;
        for t in 0..=self.total_steps() {
            if self.alpha_bars[t] >= target {
                best = t;
            }
        }
        Ok(best.max(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_are_exact() {
        let s = NoiseSchedule::from_betas(vec![0.1, 0.25, 0.5, 0.9]).unwrap();
        for t in 1..=4 {
            let lhs = s.alpha_bar(t).unwrap();
            let rhs = s.alpha_bar(t - 1).unwrap() * (1.0 - s.beta(t).unwrap());
            assert_eq!(lhs, rhs, "product identity must hold bit-exactly at t={t}");
        }
        assert_eq!(s.alpha_bar(0).unwrap(), 1.0);
    }

    #[test]
    fn alpha_bar_is_monotone_non_increasing() {
        let s = NoiseSchedule::linear(17).unwrap();
        for t in 1..=17 {
            assert!(s.alpha_bar(t).unwrap() <= s.alpha_bar(t - 1).unwrap());
        }
    }

    #[test]
    fn linear_schedule_reaches_zero() {
        let s = NoiseSchedule::linear(8).unwrap();
        assert!(s.alpha_bar(8).unwrap().abs() < 1e-12);
        // interior values track (T - t) / T closely
        for t in 0..=8 {
            let expect = (8 - t) as f64 / 8.0;
            assert!((s.alpha_bar(t).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(NoiseSchedule::from_betas(vec![]).is_err());
        assert!(NoiseSchedule::from_betas(vec![1.2]).is_err());
        assert!(NoiseSchedule::from_betas(vec![-0.1]).is_err());
        // never corrupts
        assert!(NoiseSchedule::from_betas(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn start_step_matches_mask_fraction() {
        let s = NoiseSchedule::linear(32).unwrap();
        // alpha_bar[t] = (32 - t)/32 >= 0.1  =>  t <= 28.8
        assert_eq!(s.start_step_for_mask_fraction(0.9).unwrap(), 28);
        assert_eq!(s.start_step_for_mask_fraction(1.0).unwrap(), 32);
        // gamma = 0 clamps to step 1
        assert_eq!(s.start_step_for_mask_fraction(0.0).unwrap(), 1);
        assert!(s.start_step_for_mask_fraction(1.5).is_err());
    }
}
