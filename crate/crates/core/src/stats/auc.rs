//! ROC AUC and bootstrap optimism correction.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cox, logistic, midranks};
use crate::error::{Error, Result};

/// P(score⁺ > score⁻) + ½·P(score⁺ = score⁻).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Validation("scores must not be NaN".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Validation("AUC needs both outcome classes".into()));
    }
    let (ranks, _) = midranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// A model that can be refitted on a resample of rows and scored on any row.
pub trait RiskModel: Sync {
    type Coefficients: Send;

    fn len(&self) -> usize;
    fn fit(&self, rows: &[usize]) -> Result<Self::Coefficients>;
    fn score(&self, coef: &Self::Coefficients, row: usize) -> f64;
    fn label(&self, row: usize) -> bool;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapAuc {
    pub apparent: f64,
    pub optimism: f64,
    pub corrected: f64,
    pub replicates: usize,
    pub failures: usize,
}

fn auc_on<M: RiskModel>(model: &M, coef: &M::Coefficients, rows: &[usize]) -> Result<f64> {
    let scores: Vec<f64> = rows.iter().map(|&r| model.score(coef, r)).collect();
    let labels: Vec<bool> = rows.iter().map(|&r| model.label(r)).collect();
    roc_auc(&scores, &labels)
}

/// Optimism-corrected AUC: apparent AUC minus the mean gap between each
/// replicate model's AUC on its own resample and on the original data.
/// Replicate `b` draws from a generator seeded with `seed + b`.
pub fn bootstrap_auc<M: RiskModel>(
    model: &M,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapAuc> {
    let n = model.len();
    let all: Vec<usize> = (0..n).collect();
    let full = model.fit(&all)?;
    let apparent = auc_on(model, &full, &all)?;

    let gaps: Vec<Option<f64>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(b as u64));
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let coef = model.fit(&rows).ok()?;
            let boot = auc_on(model, &coef, &rows).ok()?;
            let orig = auc_on(model, &coef, &all).ok()?;
            Some(boot - orig)
        })
        .collect();
    let used: Vec<f64> = gaps.iter().flatten().copied().collect();
    let failures = replicates - used.len();
    if failures * 2 > replicates {
        return Err(Error::Estimation(format!(
            "{failures} of {replicates} bootstrap refits failed"
        )));
    }
    if failures > 0 {
        log::warn!("{failures} of {replicates} bootstrap refits failed and were skipped");
    }
    let optimism = if used.is_empty() {
        0.0
    } else {
        used.iter().sum::<f64>() / used.len() as f64
    };
    Ok(BootstrapAuc {
        apparent,
        optimism,
        corrected: apparent - optimism,
        replicates,
        failures,
    })
}

fn take_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

fn linear(x: &DMatrix<f64>, coef: &[f64], row: usize) -> f64 {
    (0..x.ncols()).map(|j| x[(row, j)] * coef[j]).sum()
}

/// Logistic model of a binary outcome.
#[derive(Debug, Clone)]
pub struct LogisticData {
    pub x: DMatrix<f64>,
    pub y: Vec<bool>,
}

impl RiskModel for LogisticData {
    type Coefficients = Vec<f64>;

    fn len(&self) -> usize {
        self.y.len()
    }

    fn fit(&self, rows: &[usize]) -> Result<Vec<f64>> {
        let y: Vec<bool> = rows.iter().map(|&r| self.y[r]).collect();
        logistic::fit_coefficients(&take_rows(&self.x, rows), &y)
    }

    fn score(&self, coef: &Vec<f64>, row: usize) -> f64 {
        coef[0] + linear(&self.x, &coef[1..], row)
    }

    fn label(&self, row: usize) -> bool {
        self.y[row]
    }
}

/// Cox model scored by its linear predictor against the event indicator.
#[derive(Debug, Clone)]
pub struct CoxData {
    pub x: DMatrix<f64>,
    pub times: Vec<f64>,
    pub events: Vec<bool>,
}

impl RiskModel for CoxData {
    type Coefficients = Vec<f64>;

    fn len(&self) -> usize {
        self.times.len()
    }

    fn fit(&self, rows: &[usize]) -> Result<Vec<f64>> {
        let t: Vec<f64> = rows.iter().map(|&r| self.times[r]).collect();
        let e: Vec<bool> = rows.iter().map(|&r| self.events[r]).collect();
        cox::fit_coefficients(&take_rows(&self.x, rows), &t, &e)
    }

    fn score(&self, coef: &Vec<f64>, row: usize) -> f64 {
        linear(&self.x, coef, row)
    }

    fn label(&self, row: usize) -> bool {
        self.events[row]
    }
}
