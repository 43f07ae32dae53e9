//! Full statistical report for a synthetic cohort, printed as JSON.

use histophenotype::stats::report::{analyze, AnalysisOptions};
use histophenotype::synth::{generate_cohort, CohortSpec};

fn main() -> histophenotype::Result<()> {
    let mut spec = CohortSpec::default_with(150, 8);
    spec.logistic_coefficients = vec![1.5, 0.0];
    spec.cox_coefficients = vec![1.0, 0.0];
    let cohort = generate_cohort(&spec)?;
    let report = analyze(
        &cohort,
        &AnalysisOptions {
            bootstrap_replicates: 50,
            seed: 1,
            features: None,
        },
    )?;
    for f in &report.features {
        let cox = f
            .cox_univariate
            .ok()
            .map(|c| format!("HR factor {:.2}, p {:.1e}", c.factor.factor, c.p));
        println!(
            "{:<20} {}",
            f.name,
            cox.unwrap_or_else(|| "cox fit failed".into())
        );
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
