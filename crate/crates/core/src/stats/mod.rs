//! Statistical analysis of slide signatures against clinical outcome.

pub mod association;
pub mod auc;
pub mod cohort;
pub mod cox;
pub mod logistic;
pub mod report;
pub mod survival;

mod linalg;

pub use association::{mann_whitney, spearman, MannWhitney};
pub use auc::{bootstrap_auc, roc_auc, BootstrapAuc, RiskModel};
pub use cox::{cox_fit, CoxFit};
pub use logistic::{logistic_fit, LogisticFit};
pub use survival::{
    altman_adjust, kaplan_meier, logrank, optimal_cutoff_stratify, AltmanAdjusted, CutoffResult,
    KmCurve, LogRank,
};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Two-sided normal quantile for 95% intervals.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Multiplicative effect of a covariate change, with a 95% Wald interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectFactor {
    pub factor: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Covariate change the factor refers to.
    pub delta: f64,
}

impl EffectFactor {
    pub fn from_coefficient(beta: f64, se: f64, delta: f64) -> Self {
        let a = ((beta - Z_95 * se) * delta).exp();
        let b = ((beta + Z_95 * se) * delta).exp();
        EffectFactor {
            factor: (beta * delta).exp(),
            ci_lower: a.min(b),
            ci_upper: a.max(b),
            delta,
        }
    }
}

/// Mid-ranks (1-based) with ties sharing the average rank, plus the tie-group sizes.
pub fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

/// Linear-interpolation quantile at positions `(n − 1)·q + 1` of the sorted sample.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Validation("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Validation(format!(
            "quantile level {q} outside [0, 1]"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// Interquartile change `Q3 − Q1`.
pub fn interquartile_delta(values: &[f64]) -> Result<f64> {
    Ok(quantile(values, 0.75)? - quantile(values, 0.25)?)
}

pub fn median(values: &[f64]) -> Result<f64> {
    quantile(values, 0.5)
}

pub(crate) fn normal_two_sided_p(z: f64) -> f64 {
    if !z.is_finite() {
        return if z.is_nan() { f64::NAN } else { 0.0 };
    }
    let n = Normal::standard();
    (2.0 * n.sf(z.abs())).min(1.0)
}

pub(crate) fn chi2_sf(stat: f64, df: f64) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df)
        .expect("positive degrees of freedom")
        .sf(stat)
        .clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn midranks_handle_ties() {
        let (r, t) = midranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(t, vec![1, 1, 2]);
    }

    #[test]
    fn quantile_linear_interpolation() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(quantile(&v, 0.25).unwrap(), 1.75);
        assert_abs_diff_eq!(quantile(&v, 0.75).unwrap(), 3.25);
        assert_abs_diff_eq!(interquartile_delta(&v).unwrap(), 1.5);
        assert_eq!(median(&[5.0]).unwrap(), 5.0);
        assert!(quantile(&[], 0.5).is_err());
    }

    #[test]
    fn effect_factor_brackets_estimate() {
        let e = EffectFactor::from_coefficient(0.7, 0.2, -1.5);
        assert!(e.ci_lower <= e.factor && e.factor <= e.ci_upper);
        assert_abs_diff_eq!(e.factor, (-1.05f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn tail_probabilities() {
        assert_abs_diff_eq!(normal_two_sided_p(1.959963984540054), 0.05, epsilon = 1e-9);
        assert_abs_diff_eq!(chi2_sf(3.841458820694124, 1.0), 0.05, epsilon = 1e-9);
        assert_eq!(chi2_sf(0.0, 1.0), 1.0);
    }
}
