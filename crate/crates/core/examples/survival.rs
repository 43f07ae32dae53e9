//! Kaplan-Meier curves, a log-rank test and the corrected optimal cutoff on a
//! simulated feature. Writes the two curves as an SVG next to the binary's cwd.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use histophenotype::stats::survival::km_svg;
use histophenotype::stats::{kaplan_meier, logrank, optimal_cutoff_stratify};

fn main() -> histophenotype::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 150;
    let mut values = Vec::with_capacity(n);
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for _ in 0..n {
        let v: f64 = rng.random();
        // Risk doubles above 0.6.
        let hazard = if v > 0.6 { 0.4 } else { 0.2 };
        let t = -(1.0 - rng.random::<f64>()).ln() / hazard;
        let c = rng.random_range(2.0..10.0);
        values.push(v);
        times.push(t.min(c));
        events.push(t <= c);
    }

    let all = kaplan_meier(&times, &events)?;
    println!(
        "overall: S(2) = {:.3}, S(5) = {:.3}",
        all.survival_at(2.0),
        all.survival_at(5.0)
    );

    let groups: Vec<usize> = values.iter().map(|&v| usize::from(v > 0.5)).collect();
    let lr = logrank(&groups, &times, &events)?;
    println!("median split: chi2 {:.3}, p {:.4}", lr.chi2, lr.p);

    let cut = optimal_cutoff_stratify(&values, &times, &events)?;
    println!(
        "optimal cutoff {:.3} over {} candidates: p_min {:.2e}, corrected {:.2e} ({} low / {} high)",
        cut.cutoff, cut.candidates, cut.adjusted.p_min, cut.adjusted.p_adj, cut.n_low, cut.n_high
    );

    let svg = km_svg(
        "simulated feature",
        &[("low", &cut.low), ("high", &cut.high)],
    );
    std::fs::write("km_example.svg", svg)
        .map_err(|e| histophenotype::Error::io("km_example.svg", e))?;
    println!("wrote km_example.svg");
    Ok(())
}
