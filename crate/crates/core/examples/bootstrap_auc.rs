//! Optimism-corrected AUC of a Cox model scored against the event indicator.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use histophenotype::stats::auc::CoxData;
use histophenotype::stats::bootstrap_auc;

fn main() -> histophenotype::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 120;
    // One informative covariate and four noise covariates invite overfitting.
    let x = DMatrix::from_fn(n, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let t = -(1.0 - rng.random::<f64>()).ln() / (0.6 * x[(i, 0)]).exp();
        let c = rng.random_range(0.0..3.0);
        times.push(t.min(c));
        events.push(t <= c);
    }
    let data = CoxData { x, times, events };
    for replicates in [0, 50, 200] {
        let r = bootstrap_auc(&data, replicates, 99)?;
        println!(
            "{replicates:>3} replicates: apparent {:.3}, optimism {:.3}, corrected {:.3}",
            r.apparent, r.optimism, r.corrected
        );
    }
    Ok(())
}
