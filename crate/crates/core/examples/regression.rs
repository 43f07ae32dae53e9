//! Logistic and Cox regression on a synthetic cohort with planted effects,
//! reported as interquartile odds-ratio and hazard-ratio factors.

use nalgebra::DMatrix;

use histophenotype::stats::{cox_fit, interquartile_delta, logistic_fit};
use histophenotype::synth::{generate_cohort, CohortSpec};

fn main() -> histophenotype::Result<()> {
    let mut spec = CohortSpec::default_with(800, 5);
    spec.logistic_coefficients = vec![1.2, 0.0];
    spec.cox_coefficients = vec![0.8, 0.0];
    spec.missing_rate = 0.0;
    let cohort = generate_cohort(&spec)?;

    let n = cohort.len();
    let x = DMatrix::from_fn(n, 2, |i, j| {
        cohort.rows[i].features[j].expect("no missing values")
    });
    let deltas: Vec<f64> = (0..2)
        .map(|j| interquartile_delta(&x.column(j).iter().copied().collect::<Vec<_>>()))
        .collect::<histophenotype::Result<_>>()?;

    let y: Vec<bool> = cohort
        .rows
        .iter()
        .map(|r| r.clinical.metastasis_5yr.unwrap())
        .collect();
    let lf = logistic_fit(&x, &y, &deltas)?;
    println!("logistic ({} patients, AUC {:.3})", lf.n, lf.auc);
    for (j, name) in cohort.feature_names.iter().enumerate() {
        let f = &lf.or_factor[j];
        println!(
            "  {name}: beta {:+.3}  OR factor {:.3} ({:.3}-{:.3})  LR p {:.2e}",
            lf.coefficients[j + 1],
            f.factor,
            f.ci_lower,
            f.ci_upper,
            lf.lr_p[j]
        );
    }

    let times: Vec<f64> = cohort
        .rows
        .iter()
        .map(|r| r.clinical.dmfs_years.unwrap())
        .collect();
    let events: Vec<bool> = cohort
        .rows
        .iter()
        .map(|r| r.clinical.event.unwrap())
        .collect();
    let cf = cox_fit(&x, &times, &events, &deltas)?;
    println!(
        "cox ({} events, score test p {:.2e})",
        cf.events, cf.score_p
    );
    for (j, name) in cohort.feature_names.iter().enumerate() {
        let f = &cf.hr_factor[j];
        println!(
            "  {name}: beta {:+.3}  HR factor {:.3} ({:.3}-{:.3})  Wald p {:.2e}",
            cf.coefficients[j], f.factor, f.ci_lower, f.ci_upper, cf.wald_p[j]
        );
    }
    Ok(())
}
