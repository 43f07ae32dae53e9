//! Cohort-level analysis report: association tests, logistic and Cox models
//! (univariate and adjusted for clinical covariates), bootstrap-validated AUC,
//! minimum-p survival stratification and feature correlations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::auc::{bootstrap_auc, BootstrapAuc, CoxData};
use super::cohort::{ClinicalRecord, CohortTable, Differentiation, HistologicalType, TStage};
use super::{
    cox_fit, interquartile_delta, logistic_fit, mann_whitney, optimal_cutoff_stratify, quantile,
    spearman, CutoffResult, EffectFactor,
};
use crate::error::{Error, Result};

pub const DEFAULT_BOOTSTRAP_REPLICATES: usize = 100;

/// Outcome of one analysis entry; failures are reported instead of aborting the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallible<T> {
    Ok(T),
    Error(String),
}

impl<T> Fallible<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            Fallible::Ok(v) => Some(v),
            Fallible::Error(_) => None,
        }
    }
}

impl<T> From<Result<T>> for Fallible<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(v) => Fallible::Ok(v),
            Err(e) => Fallible::Error(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Association {
    pub n_positive: usize,
    pub n_negative: usize,
    pub u: f64,
    pub p: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticEntry {
    pub n: usize,
    pub dropped: usize,
    pub factor: EffectFactor,
    /// Likelihood-ratio p-value of the feature.
    pub p: f64,
    /// In-sample AUC of the whole fitted model.
    pub auc: f64,
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxEntry {
    pub n: usize,
    pub events: usize,
    pub dropped: usize,
    pub factor: EffectFactor,
    /// Score-test p-value for univariate models, Wald p-value when adjusted.
    pub p: f64,
    pub test: String,
    pub auc: BootstrapAuc,
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAnalysis {
    pub name: String,
    pub kind: FeatureKind,
    /// Baseline and changed value the effect factors refer to.
    pub change: (String, String),
    pub association: Fallible<Association>,
    pub logistic_univariate: Fallible<LogisticEntry>,
    pub logistic_multivariate: Fallible<LogisticEntry>,
    pub cox_univariate: Fallible<CoxEntry>,
    pub cox_multivariate: Fallible<CoxEntry>,
    /// Only for continuous features.
    pub cutoff: Option<Fallible<CutoffResult>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub a: String,
    pub b: String,
    pub n: usize,
    pub rho: Fallible<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n_patients: usize,
    pub seed: u64,
    pub bootstrap_replicates: usize,
    pub deviations: Vec<String>,
    pub features: Vec<FeatureAnalysis>,
    pub correlations: Vec<Correlation>,
}

impl AnalysisReport {
    pub fn feature(&self, name: &str) -> Option<&FeatureAnalysis> {
        self.features.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub bootstrap_replicates: usize,
    pub seed: u64,
    /// Restrict the analysis to these feature columns; all columns when `None`.
    pub features: Option<Vec<String>>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            bootstrap_replicates: DEFAULT_BOOTSTRAP_REPLICATES,
            seed: 0,
            features: None,
        }
    }
}

type Getter<'a> = Box<dyn Fn(&ClinicalRecord, &[Option<f64>]) -> Option<f64> + 'a>;

struct Covariate<'a> {
    name: String,
    get: Getter<'a>,
}

fn indicator(flag: bool) -> f64 {
    if flag {
        1.0
    } else {
        0.0
    }
}

fn clinical_covariates<'a>() -> Vec<Covariate<'a>> {
    vec![
        Covariate {
            name: "differentiation".into(),
            get: Box::new(|c, _| {
                c.differentiation
                    .map(|d| indicator(d == Differentiation::Poor))
            }),
        },
        Covariate {
            name: "histological_type".into(),
            get: Box::new(|c, _| {
                c.histological_type
                    .map(|h| indicator(h == HistologicalType::Mucinous))
            }),
        },
        Covariate {
            name: "t_stage".into(),
            get: Box::new(|c, _| c.t_stage.map(|t| indicator(t == TStage::T4))),
        },
    ]
}

fn clinical_change(name: &str) -> (String, String) {
    let (a, b) = match name {
        "differentiation" => ("MD", "PD"),
        "histological_type" => ("adenocarcinoma", "mucinous"),
        _ => ("pT3", "pT4"),
    };
    (a.into(), b.into())
}

enum Outcome {
    Binary,
    Survival,
}

/// Complete cases for `covariates` and the outcome; constant adjustment
/// columns (beyond the first) are removed.
struct Design {
    names: Vec<String>,
    x: DMatrix<f64>,
    y: Vec<bool>,
    times: Vec<f64>,
    events: Vec<bool>,
    dropped: usize,
}

fn design(cohort: &CohortTable, covariates: &[&Covariate], outcome: Outcome) -> Result<Design> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    let mut times = Vec::new();
    let mut events = Vec::new();
    for r in &cohort.rows {
        let vals: Option<Vec<f64>> = covariates
            .iter()
            .map(|c| (c.get)(&r.clinical, &r.features))
            .collect();
        let Some(vals) = vals else { continue };
        match outcome {
            Outcome::Binary => {
                let Some(m) = r.clinical.metastasis_5yr else {
                    continue;
                };
                y.push(m);
            }
            Outcome::Survival => {
                let (Some(t), Some(e)) = (r.clinical.dmfs_years, r.clinical.event) else {
                    continue;
                };
                times.push(t);
                events.push(e);
            }
        }
        rows.push(vals);
    }
    let n = rows.len();
    let mut keep: Vec<usize> = Vec::new();
    for j in 0..covariates.len() {
        let constant = rows.windows(2).all(|w| w[0][j] == w[1][j]);
        if j == 0 || !constant {
            keep.push(j);
        } else {
            log::warn!(
                "dropping constant adjustment covariate {}",
                covariates[j].name
            );
        }
    }
    Ok(Design {
        names: keep.iter().map(|&j| covariates[j].name.clone()).collect(),
        x: DMatrix::from_fn(n, keep.len(), |i, j| rows[i][keep[j]]),
        y,
        times,
        events,
        dropped: cohort.len() - n,
    })
}

fn logistic_entry(d: Design, delta: f64) -> Result<LogisticEntry> {
    let mut deltas = vec![1.0; d.x.ncols()];
    deltas[0] = delta;
    let fit = logistic_fit(&d.x, &d.y, &deltas)?;
    Ok(LogisticEntry {
        n: d.y.len(),
        dropped: d.dropped,
        factor: fit.or_factor[0],
        p: fit.lr_p[0],
        auc: fit.auc,
        covariates: d.names,
    })
}

fn cox_entry(
    d: Design,
    delta: f64,
    adjusted: bool,
    replicates: usize,
    seed: u64,
) -> Result<CoxEntry> {
    let mut deltas = vec![1.0; d.x.ncols()];
    deltas[0] = delta;
    let fit = cox_fit(&d.x, &d.times, &d.events, &deltas)?;
    let auc = bootstrap_auc(
        &CoxData {
            x: d.x.clone(),
            times: d.times.clone(),
            events: d.events.clone(),
        },
        replicates,
        seed,
    )?;
    Ok(CoxEntry {
        n: d.times.len(),
        events: fit.events,
        dropped: d.dropped,
        factor: fit.hr_factor[0],
        p: if adjusted { fit.wald_p[0] } else { fit.score_p },
        test: if adjusted { "wald" } else { "score" }.into(),
        auc,
        covariates: d.names,
    })
}

fn association(cohort: &CohortTable, cov: &Covariate) -> Result<Association> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for r in &cohort.rows {
        if let (Some(v), Some(m)) = (
            (cov.get)(&r.clinical, &r.features),
            r.clinical.metastasis_5yr,
        ) {
            if m {
                pos.push(v);
            } else {
                neg.push(v);
            }
        }
    }
    let mw = mann_whitney(&pos, &neg)?;
    Ok(Association {
        n_positive: pos.len(),
        n_negative: neg.len(),
        u: mw.u,
        p: mw.p,
        r2: mw.r2,
    })
}

fn cutoff(cohort: &CohortTable, cov: &Covariate) -> Result<CutoffResult> {
    let d = design(cohort, &[cov], Outcome::Survival)?;
    let values: Vec<f64> = d.x.column(0).iter().copied().collect();
    optimal_cutoff_stratify(&values, &d.times, &d.events)
}

fn format_value(v: f64) -> String {
    format!("{v:.4}")
}

/// Runs every analysis on the cohort. Individual failures (separation, too
/// few events, missing data) are recorded in the entry rather than aborting.
pub fn analyze(cohort: &CohortTable, options: &AnalysisOptions) -> Result<AnalysisReport> {
    if cohort.is_empty() {
        return Err(Error::Validation("cohort is empty".into()));
    }
    let names: Vec<String> = match &options.features {
        Some(list) => {
            for n in list {
                if cohort.feature_index(n).is_none() {
                    return Err(Error::Config(format!("unknown feature '{n}'")));
                }
            }
            list.clone()
        }
        None => cohort.feature_names.clone(),
    };
    let features: Vec<Covariate> = names
        .iter()
        .map(|n| {
            let j = cohort.feature_index(n).expect("checked above");
            Covariate {
                name: n.clone(),
                get: Box::new(move |_, f: &[Option<f64>]| f[j]),
            }
        })
        .collect();
    let clinical = clinical_covariates();
    let b = options.bootstrap_replicates;
    // Each bootstrap gets its own block of replicate seeds.
    let seed_for = |entry: usize| options.seed.wrapping_add((entry as u64) << 24);
    let mut entry = 0usize;
    let mut next_seed = || {
        entry += 1;
        seed_for(entry)
    };

    let mut out = Vec::new();
    for cov in &features {
        let observed: Vec<f64> = cohort
            .rows
            .iter()
            .filter_map(|r| (cov.get)(&r.clinical, &r.features))
            .collect();
        let (delta, change) = match (
            interquartile_delta(&observed),
            quantile(&observed, 0.25),
            quantile(&observed, 0.75),
        ) {
            (Ok(d), Ok(q1), Ok(q3)) => (d, (format_value(q1), format_value(q3))),
            _ => (1.0, (String::new(), String::new())),
        };
        let adjusted: Vec<&Covariate> = std::iter::once(cov).chain(clinical.iter()).collect();

        let logistic_univariate = design(cohort, &[cov], Outcome::Binary)
            .and_then(|d| logistic_entry(d, delta))
            .into();
        let logistic_multivariate = design(cohort, &adjusted, Outcome::Binary)
            .and_then(|d| logistic_entry(d, delta))
            .into();
        let s1 = next_seed();
        let cox_univariate = design(cohort, &[cov], Outcome::Survival)
            .and_then(|d| cox_entry(d, delta, false, b, s1))
            .into();
        let s2 = next_seed();
        let cox_multivariate = design(cohort, &adjusted, Outcome::Survival)
            .and_then(|d| cox_entry(d, delta, true, b, s2))
            .into();
        out.push(FeatureAnalysis {
            name: cov.name.clone(),
            kind: FeatureKind::Continuous,
            change,
            association: association(cohort, cov).into(),
            logistic_univariate,
            logistic_multivariate,
            cox_univariate,
            cox_multivariate,
            cutoff: Some(cutoff(cohort, cov).into()),
        });
    }

    // Clinical covariates: univariate models and the joint clinical model.
    let all_clinical: Vec<&Covariate> = clinical.iter().collect();
    for (idx, cov) in clinical.iter().enumerate() {
        let mut joint: Vec<&Covariate> = vec![cov];
        joint.extend(
            all_clinical
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != idx)
                .map(|(_, c)| *c),
        );
        let logistic_univariate = design(cohort, &[cov], Outcome::Binary)
            .and_then(|d| logistic_entry(d, 1.0))
            .into();
        let logistic_multivariate = design(cohort, &joint, Outcome::Binary)
            .and_then(|d| logistic_entry(d, 1.0))
            .into();
        let s1 = next_seed();
        let cox_univariate = design(cohort, &[cov], Outcome::Survival)
            .and_then(|d| cox_entry(d, 1.0, false, b, s1))
            .into();
        let s2 = next_seed();
        let cox_multivariate = design(cohort, &joint, Outcome::Survival)
            .and_then(|d| cox_entry(d, 1.0, true, b, s2))
            .into();
        out.push(FeatureAnalysis {
            name: cov.name.clone(),
            kind: FeatureKind::Categorical,
            change: clinical_change(&cov.name),
            association: association(cohort, cov).into(),
            logistic_univariate,
            logistic_multivariate,
            cox_univariate,
            cox_multivariate,
            cutoff: None,
        });
    }

    let mut correlations = Vec::new();
    for i in 0..features.len() {
        for j in i + 1..features.len() {
            let (xs, ys): (Vec<f64>, Vec<f64>) = cohort
                .rows
                .iter()
                .filter_map(|r| {
                    Some((
                        (features[i].get)(&r.clinical, &r.features)?,
                        (features[j].get)(&r.clinical, &r.features)?,
                    ))
                })
                .unzip();
            correlations.push(Correlation {
                a: features[i].name.clone(),
                b: features[j].name.clone(),
                n: xs.len(),
                rho: spearman(&xs, &ys).into(),
            });
        }
    }

    let max_dropped = out
        .iter()
        .flat_map(|f| {
            [
                f.logistic_univariate.ok().map(|e| e.dropped),
                f.logistic_multivariate.ok().map(|e| e.dropped),
                f.cox_univariate.ok().map(|e| e.dropped),
                f.cox_multivariate.ok().map(|e| e.dropped),
            ]
        })
        .flatten()
        .max()
        .unwrap_or(0);
    let mut deviations = Vec::new();
    if max_dropped > 0 {
        deviations.push(format!(
            "complete-case analysis instead of multiple imputation: models drop up to {max_dropped} of {} patients with missing values (see per-entry 'dropped')",
            cohort.len()
        ));
    }

    Ok(AnalysisReport {
        n_patients: cohort.len(),
        seed: options.seed,
        bootstrap_replicates: b,
        deviations,
        features: out,
        correlations,
    })
}
