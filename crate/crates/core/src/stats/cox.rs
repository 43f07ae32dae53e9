//! Cox proportional hazards regression with Breslow handling of tied times.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::{solve_spd, spd_inverse, Scaling};
use super::{chi2_sf, normal_two_sided_p, roc_auc, EffectFactor};
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
/// Standardized log-hazard magnitude beyond which the likelihood is taken as monotone.
pub const DIVERGENCE_LIMIT: f64 = 15.0;
const STEP_TOLERANCE: f64 = 1e-6;
/// Singular information past this magnitude is reported as divergence rather than collinearity.
const SUSPECT_MAGNITUDE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub coefficients: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    pub hr_factor: Vec<EffectFactor>,
    /// Rao score test of β = 0 for all covariates jointly. For one binary covariate
    /// it is the log-rank test when event times are distinct; with tied times the
    /// Breslow variance omits the hypergeometric correction and the two differ slightly.
    pub score_p: f64,
    pub score_statistic: f64,
    pub wald_p: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// In-sample AUC of the linear predictor against the event indicator.
    pub auc: f64,
    pub n: usize,
    pub events: usize,
}

impl CoxFit {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum()
    }
}

/// Log partial likelihood, its gradient and (optionally) the observed information.
struct Evaluation {
    ll: f64,
    grad: Vec<f64>,
    info: Option<DMatrix<f64>>,
}

fn descending_order(times: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]).then(a.cmp(&b)));
    order
}

fn evaluate(
    x: &DMatrix<f64>,
    times: &[f64],
    events: &[bool],
    order: &[usize],
    beta: &[f64],
    with_info: bool,
) -> Evaluation {
    let p = x.ncols();
    let eta: Vec<f64> = (0..x.nrows())
        .map(|i| (0..p).map(|j| x[(i, j)] * beta[j]).sum())
        .collect();
    // Shifting η leaves every ratio unchanged and keeps exp() finite.
    let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 =
        DMatrix::<f64>::zeros(if with_info { p } else { 0 }, if with_info { p } else { 0 });
    let mut ll = 0.0;
    let mut grad = vec![0.0; p];
    let mut info = with_info.then(|| DMatrix::<f64>::zeros(p, p));

    let mut start = 0;
    while start < order.len() {
        let t = times[order[start]];
        let mut end = start;
        while end < order.len() && times[order[end]] == t {
            end += 1;
        }
        for &i in &order[start..end] {
            let w = (eta[i] - shift).exp();
            s0 += w;
            for a in 0..p {
                s1[a] += w * x[(i, a)];
                if with_info {
                    for b in 0..=a {
                        s2[(a, b)] += w * x[(i, a)] * x[(i, b)];
                    }
                }
            }
        }
        let d = order[start..end].iter().filter(|&&i| events[i]).count();
        if d > 0 {
            let df = d as f64;
            for &i in order[start..end].iter().filter(|&&i| events[i]) {
                ll += eta[i];
                for a in 0..p {
                    grad[a] += x[(i, a)];
                }
            }
            ll -= df * (s0.ln() + shift);
            for a in 0..p {
                grad[a] -= df * s1[a] / s0;
            }
            if let Some(info) = info.as_mut() {
                for a in 0..p {
                    for b in 0..=a {
                        let v = df * (s2[(a, b)] / s0 - s1[a] * s1[b] / (s0 * s0));
                        info[(a, b)] += v;
                        if a != b {
                            info[(b, a)] += v;
                        }
                    }
                }
            }
        }
        start = end;
    }
    Evaluation { ll, grad, info }
}

fn validate(x: &DMatrix<f64>, times: &[f64], events: &[bool]) -> Result<()> {
    if x.nrows() != times.len() || times.len() != events.len() {
        return Err(Error::Validation(format!(
            "mismatched lengths: {} rows, {} times, {} event flags",
            x.nrows(),
            times.len(),
            events.len()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::Validation(
            "Cox model needs at least one covariate".into(),
        ));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::Validation(
            "survival times must be finite and non-negative".into(),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("covariates must be finite".into()));
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::NoEvents);
    }
    Ok(())
}

/// Breslow log partial likelihood at `beta` for raw covariates.
pub fn log_partial_likelihood(
    x: &DMatrix<f64>,
    times: &[f64],
    events: &[bool],
    beta: &[f64],
) -> f64 {
    evaluate(x, times, events, &descending_order(times), beta, false).ll
}

/// Gradient of the Breslow log partial likelihood at `beta`.
pub fn gradient(x: &DMatrix<f64>, times: &[f64], events: &[bool], beta: &[f64]) -> Vec<f64> {
    evaluate(x, times, events, &descending_order(times), beta, false).grad
}

struct Optimum {
    beta: Vec<f64>,
    info: DMatrix<f64>,
    ll: f64,
    iterations: usize,
}

fn newton(z: &DMatrix<f64>, times: &[f64], events: &[bool], order: &[usize]) -> Result<Optimum> {
    let mut beta = vec![0.0; z.ncols()];
    let mut current = evaluate(z, times, events, order, &beta, true);
    for iteration in 0..MAX_ITERATIONS {
        let gmax = current.grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let info = current.info.take().expect("information requested");
        let magnitude = beta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let step = match solve_spd(&info, &DVector::from_column_slice(&current.grad)) {
            Ok(step) => step,
            Err(_) if magnitude > SUSPECT_MAGNITUDE => {
                return Err(Error::Divergence {
                    iteration,
                    magnitude,
                })
            }
            Err(e) => return Err(e),
        };
        // A vanishing gradient alone is not enough: along a monotone ridge it
        // decays exponentially while Newton steps stay large.
        if gmax < GRADIENT_TOLERANCE && step.amax() < STEP_TOLERANCE {
            return Ok(Optimum {
                beta,
                info,
                ll: current.ll,
                iterations: iteration,
            });
        }
        let mut scale = 1.0;
        let (candidate, next) = loop {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + scale * s)
                .collect();
            let next = evaluate(z, times, events, order, &candidate, true);
            if next.ll >= current.ll - 1e-12 * current.ll.abs().max(1.0) || scale < 1e-10 {
                break (candidate, next);
            }
            scale *= 0.5;
        };
        let magnitude = candidate.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if magnitude > DIVERGENCE_LIMIT || !magnitude.is_finite() {
            return Err(Error::Divergence {
                iteration: iteration + 1,
                magnitude,
            });
        }
        beta = candidate;
        current = next;
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        gradient: current.grad.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    })
}

/// Maximum partial-likelihood coefficients on the raw covariate scale.
pub fn fit_coefficients(x: &DMatrix<f64>, times: &[f64], events: &[bool]) -> Result<Vec<f64>> {
    validate(x, times, events)?;
    let scaling = Scaling::of(x)?;
    let order = descending_order(times);
    let opt = newton(&scaling.apply(x), times, events, &order)?;
    Ok(opt
        .beta
        .iter()
        .zip(&scaling.scale)
        .map(|(b, s)| b / s)
        .collect())
}

/// Fits the proportional hazards model and reports hazard-ratio factors for the changes in `deltas`.
pub fn cox_fit(x: &DMatrix<f64>, times: &[f64], events: &[bool], deltas: &[f64]) -> Result<CoxFit> {
    validate(x, times, events)?;
    if deltas.len() != x.ncols() {
        return Err(Error::Validation(format!(
            "{} covariates but {} effect changes",
            x.ncols(),
            deltas.len()
        )));
    }
    let p = x.ncols();
    let scaling = Scaling::of(x)?;
    let z = scaling.apply(x);
    let order = descending_order(times);

    // Score test at β = 0 on the standardized scale; the statistic is scale invariant.
    let null = evaluate(&z, times, events, &order, &vec![0.0; p], true);
    let null_info = null.info.expect("information requested");
    let u = DVector::from_column_slice(&null.grad);
    let score_statistic = (u.transpose() * spd_inverse(&null_info)? * &u)[(0, 0)].max(0.0);
    let score_p = chi2_sf(score_statistic, p as f64);

    let opt = newton(&z, times, events, &order)?;
    let cov_z = spd_inverse(&opt.info)?;
    let coefficients: Vec<f64> = opt
        .beta
        .iter()
        .zip(&scaling.scale)
        .map(|(b, s)| b / s)
        .collect();
    let covariance: Vec<Vec<f64>> = (0..p)
        .map(|a| {
            (0..p)
                .map(|b| cov_z[(a, b)] / (scaling.scale[a] * scaling.scale[b]))
                .collect()
        })
        .collect();
    let std_errors: Vec<f64> = (0..p).map(|j| covariance[j][j].max(0.0).sqrt()).collect();
    let wald_p = (0..p)
        .map(|j| normal_two_sided_p(coefficients[j] / std_errors[j]))
        .collect();
    let hr_factor = (0..p)
        .map(|j| EffectFactor::from_coefficient(coefficients[j], std_errors[j], deltas[j]))
        .collect();
    let scores: Vec<f64> = (0..x.nrows())
        .map(|i| (0..p).map(|j| x[(i, j)] * coefficients[j]).sum())
        .collect();
    let n_events = events.iter().filter(|&&e| e).count();
    let auc = if n_events < events.len() {
        roc_auc(&scores, events)?
    } else {
        f64::NAN
    };

    Ok(CoxFit {
        coefficients,
        covariance,
        std_errors,
        hr_factor,
        score_p,
        score_statistic,
        wald_p,
        log_likelihood: opt.ll,
        iterations: opt.iterations,
        auc,
        n: x.nrows(),
        events: n_events,
    })
}
