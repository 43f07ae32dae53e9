//! Binary logistic regression by Newton–Raphson.
//!
//! Covariates are standardized internally; coefficients, covariance and
//! gradients are reported on the original scale with the intercept first.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::{solve_spd, spd_inverse, Scaling};
use super::{chi2_sf, normal_two_sided_p, roc_auc, EffectFactor};
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
/// Any standardized coefficient beyond this magnitude is taken as separation.
pub const SEPARATION_LIMIT: f64 = 15.0;
const STEP_TOLERANCE: f64 = 1e-6;
/// Singular information past this magnitude is reported as separation rather than collinearity.
const SUSPECT_MAGNITUDE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// Intercept followed by one coefficient per covariate.
    pub coefficients: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Likelihood-ratio p-value of each covariate against the model without it.
    pub lr_p: Vec<f64>,
    pub wald_p: Vec<f64>,
    /// Odds-ratio factor of each covariate for its supplied change.
    pub or_factor: Vec<EffectFactor>,
    /// In-sample AUC of the fitted linear predictor.
    pub auc: f64,
    pub n: usize,
}

impl LogisticFit {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.coefficients[0]
            + row
                .iter()
                .zip(&self.coefficients[1..])
                .map(|(x, b)| x * b)
                .sum::<f64>()
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(row))
    }
}

#[inline]
fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^η) without overflow.
#[inline]
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn linear(x: &DMatrix<f64>, beta: &[f64], i: usize) -> f64 {
    beta[0] + (0..x.ncols()).map(|j| x[(i, j)] * beta[j + 1]).sum::<f64>()
}

/// Log-likelihood at `beta` (intercept first) for raw covariates `x`.
pub fn log_likelihood(x: &DMatrix<f64>, y: &[bool], beta: &[f64]) -> f64 {
    (0..x.nrows())
        .map(|i| {
            let eta = linear(x, beta, i);
            if y[i] {
                eta - softplus(eta)
            } else {
                -softplus(eta)
            }
        })
        .sum()
}

/// Score vector `Xᵀ(y − p)` at `beta` (intercept first).
pub fn gradient(x: &DMatrix<f64>, y: &[bool], beta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.ncols() + 1];
    for i in 0..x.nrows() {
        let r = f64::from(u8::from(y[i])) - sigmoid(linear(x, beta, i));
        g[0] += r;
        for j in 0..x.ncols() {
            g[j + 1] += x[(i, j)] * r;
        }
    }
    g
}

fn information(x: &DMatrix<f64>, beta: &[f64]) -> DMatrix<f64> {
    let p = x.ncols() + 1;
    let mut info = DMatrix::zeros(p, p);
    let mut row = vec![1.0; p];
    for i in 0..x.nrows() {
        let mu = sigmoid(linear(x, beta, i));
        let w = mu * (1.0 - mu);
        for j in 0..x.ncols() {
            row[j + 1] = x[(i, j)];
        }
        for a in 0..p {
            for b in 0..=a {
                info[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[(b, a)] = info[(a, b)];
        }
    }
    info
}

struct Optimum {
    beta: Vec<f64>,
    info: DMatrix<f64>,
    ll: f64,
    iterations: usize,
}

fn newton(z: &DMatrix<f64>, y: &[bool]) -> Result<Optimum> {
    let n = y.len();
    let events = y.iter().filter(|&&v| v).count();
    if events == 0 || events == n {
        return Err(Error::Separation {
            iteration: 0,
            magnitude: f64::INFINITY,
        });
    }
    let prevalence = events as f64 / n as f64;
    let mut beta = vec![0.0; z.ncols() + 1];
    beta[0] = (prevalence / (1.0 - prevalence)).ln();
    let mut ll = log_likelihood(z, y, &beta);

    for iteration in 0..MAX_ITERATIONS {
        let g = gradient(z, y, &beta);
        let info = information(z, &beta);
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let magnitude = beta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let step = match solve_spd(&info, &DVector::from_vec(g)) {
            Ok(step) => step,
            Err(_) if magnitude > SUSPECT_MAGNITUDE => {
                return Err(Error::Separation {
                    iteration,
                    magnitude,
                })
            }
            Err(e) => return Err(e),
        };
        // Under separation the gradient vanishes exponentially while Newton
        // steps stay large, so both must be small.
        if gmax < GRADIENT_TOLERANCE && step.amax() < STEP_TOLERANCE {
            return Ok(Optimum {
                beta,
                info,
                ll,
                iterations: iteration,
            });
        }
        let mut scale = 1.0;
        let mut candidate;
        let mut candidate_ll;
        loop {
            candidate = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + scale * s)
                .collect::<Vec<_>>();
            candidate_ll = log_likelihood(z, y, &candidate);
            if candidate_ll >= ll - 1e-12 * ll.abs().max(1.0) || scale < 1e-10 {
                break;
            }
            scale *= 0.5;
        }
        let magnitude = candidate.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if magnitude > SEPARATION_LIMIT || !magnitude.is_finite() {
            return Err(Error::Separation {
                iteration: iteration + 1,
                magnitude,
            });
        }
        beta = candidate;
        ll = candidate_ll;
    }
    let g = gradient(z, y, &beta);
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        gradient: g.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    })
}

fn intercept_only_ll(y: &[bool]) -> f64 {
    let n = y.len() as f64;
    let k = y.iter().filter(|&&v| v).count() as f64;
    let p = k / n;
    let mut ll = 0.0;
    if k > 0.0 {
        ll += k * p.ln();
    }
    if k < n {
        ll += (n - k) * (1.0 - p).ln();
    }
    ll
}

fn drop_column(x: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    x.clone().remove_column(j)
}

fn validate(x: &DMatrix<f64>, y: &[bool]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Validation(format!(
            "{} covariate rows but {} outcomes",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() <= x.ncols() + 1 {
        return Err(Error::InsufficientData {
            needed: x.ncols() + 2,
            got: x.nrows(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("covariates must be finite".into()));
    }
    Ok(())
}

/// Maximum-likelihood fit without the likelihood-ratio tests; returns
/// original-scale coefficients (intercept first).
pub fn fit_coefficients(x: &DMatrix<f64>, y: &[bool]) -> Result<Vec<f64>> {
    validate(x, y)?;
    let scaling = Scaling::of(x)?;
    let opt = newton(&scaling.apply(x), y)?;
    Ok(unscale(&scaling, &opt.beta).0)
}

/// Maps standardized coefficients back to the raw scale; also returns the Jacobian.
fn unscale(scaling: &Scaling, beta_z: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let p = beta_z.len();
    let mut jac = DMatrix::<f64>::identity(p, p);
    for j in 1..p {
        jac[(j, j)] = 1.0 / scaling.scale[j - 1];
        jac[(0, j)] = -scaling.mean[j - 1] / scaling.scale[j - 1];
    }
    let beta = &jac * DVector::from_column_slice(beta_z);
    (beta.iter().copied().collect(), jac)
}

/// Fits `logit P(y) = β₀ + Xβ` and reports per-covariate effects for the changes in `deltas`.
pub fn logistic_fit(x: &DMatrix<f64>, y: &[bool], deltas: &[f64]) -> Result<LogisticFit> {
    validate(x, y)?;
    if deltas.len() != x.ncols() {
        return Err(Error::Validation(format!(
            "{} covariates but {} effect changes",
            x.ncols(),
            deltas.len()
        )));
    }
    let scaling = Scaling::of(x)?;
    let z = scaling.apply(x);
    let opt = newton(&z, y)?;
    let cov_z = spd_inverse(&opt.info)?;
    let (beta, jac) = unscale(&scaling, &opt.beta);
    let cov = &jac * cov_z * jac.transpose();
    let p = beta.len();
    let std_errors: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();

    let mut lr_p = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let reduced_ll = if x.ncols() == 1 {
            intercept_only_ll(y)
        } else {
            newton(&drop_column(&z, j), y)?.ll
        };
        lr_p.push(chi2_sf((2.0 * (opt.ll - reduced_ll)).max(0.0), 1.0));
    }
    let wald_p = (1..p)
        .map(|j| normal_two_sided_p(beta[j] / std_errors[j]))
        .collect();
    let or_factor = (1..p)
        .map(|j| EffectFactor::from_coefficient(beta[j], std_errors[j], deltas[j - 1]))
        .collect();
    let scores: Vec<f64> = (0..x.nrows()).map(|i| linear(x, &beta, i)).collect();
    let auc = roc_auc(&scores, y)?;

    Ok(LogisticFit {
        covariance: (0..p)
            .map(|a| (0..p).map(|b| cov[(a, b)]).collect())
            .collect(),
        coefficients: beta,
        std_errors,
        log_likelihood: opt.ll,
        iterations: opt.iterations,
        lr_p,
        wald_p,
        or_factor,
        auc,
        n: x.nrows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn simulate(n: usize, beta: &[f64], seed: u64) -> (DMatrix<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = beta.len() - 1;
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = (0..n)
            .map(|i| {
                let eta = linear(&x, beta, i);
                rng.random::<f64>() < sigmoid(eta)
            })
            .collect();
        (x, y)
    }

    #[test]
    fn recovers_planted_coefficients() {
        let (x, y) = simulate(2000, &[-1.0, 0.8], 11);
        let fit = logistic_fit(&x, &y, &[1.0]).unwrap();
        assert!(
            (fit.coefficients[0] + 1.0).abs() < 0.15,
            "{:?}",
            fit.coefficients
        );
        assert!(
            (fit.coefficients[1] - 0.8).abs() < 0.15,
            "{:?}",
            fit.coefficients
        );
        let g = gradient(&x, &y, &fit.coefficients);
        assert!(g.iter().all(|v| v.abs() < 1e-6), "{g:?}");
        assert!(fit.lr_p[0] < 1e-10);
        let e = fit.or_factor[0];
        assert!(e.ci_lower <= e.factor && e.factor <= e.ci_upper);
    }

    #[test]
    fn null_effect_is_near_one() {
        let (x, y) = simulate(4000, &[0.0, 0.0], 5);
        let fit = logistic_fit(&x, &y, &[1.0]).unwrap();
        assert!(fit.coefficients[1].abs() < 0.1);
        assert!((fit.or_factor[0].factor - 1.0).abs() < 0.1);
    }

    #[test]
    fn null_lr_p_is_roughly_uniform() {
        let mut below = 0;
        let reps = 200;
        for seed in 0..reps {
            let (x, y) = simulate(150, &[0.3, 0.0], 1000 + seed);
            let fit = logistic_fit(&x, &y, &[1.0]).unwrap();
            if fit.lr_p[0] < 0.05 {
                below += 1;
            }
        }
        // Binomial(200, 0.05): mean 10, sd ≈ 3.1.
        assert!(below <= 22, "rejections: {below}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = simulate(300, &[0.2, -0.5, 1.0], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let beta: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let g = gradient(&x, &y, &beta);
            for j in 0..3 {
                let h = 1e-5;
                let mut up = beta.clone();
                up[j] += h;
                let mut dn = beta.clone();
                dn[j] -= h;
                let fd = (log_likelihood(&x, &y, &up) - log_likelihood(&x, &y, &dn)) / (2.0 * h);
                let rel = (fd - g[j]).abs() / g[j].abs().max(1e-3);
                assert!(rel < 1e-4, "j={j} fd={fd} analytic={}", g[j]);
            }
        }
    }

    #[test]
    fn separation_detected() {
        let x = DMatrix::from_column_slice(8, 1, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let y = [false, false, false, false, true, true, true, true];
        assert!(matches!(
            logistic_fit(&x, &y, &[1.0]),
            Err(Error::Separation { .. })
        ));
    }

    #[test]
    fn collinear_covariates_rejected() {
        let (x1, y) = simulate(100, &[0.0, 1.0], 2);
        let x = DMatrix::from_fn(
            100,
            2,
            |i, j| if j == 0 { x1[(i, 0)] } else { 2.0 * x1[(i, 0)] },
        );
        assert!(matches!(
            logistic_fit(&x, &y, &[1.0, 1.0]),
            Err(Error::Collinearity)
        ));
    }

    #[test]
    fn constant_covariate_rejected() {
        let x = DMatrix::from_element(10, 1, 3.0);
        let y: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        assert!(matches!(
            logistic_fit(&x, &y, &[1.0]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn interquartile_factor() {
        let (x, y) = simulate(500, &[0.0, 0.6], 21);
        let fit = logistic_fit(&x, &y, &[1.349]).unwrap();
        assert_abs_diff_eq!(
            fit.or_factor[0].factor,
            (fit.coefficients[1] * 1.349).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn multivariate_lr_uses_nested_models() {
        let (x, y) = simulate(800, &[0.0, 1.0, 0.0], 4);
        let fit = logistic_fit(&x, &y, &[1.0, 1.0]).unwrap();
        assert!(fit.lr_p[0] < 1e-6);
        assert!(fit.lr_p[1] > 0.01);
        assert_eq!(fit.coefficients.len(), 3);
        assert!(fit.auc > 0.6 && fit.auc <= 1.0);
    }
}
