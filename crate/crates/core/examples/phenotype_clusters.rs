//! Clusters planted CF vectors and scans k with the medoid-separation and
//! feature-correlation rules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use histophenotype::phenotype::{adjusted_rand_index, kmedoids, select_k, SlideGrouping};
use histophenotype::synth::planted_cf_clusters;

fn main() -> histophenotype::Result<()> {
    let (data, truth) = planted_cf_clusters(5, 40, 0.15, 3);

    let model = kmedoids(&data, 5, 50, 1)?;
    println!(
        "k = 5: cost {:.3}, cluster sizes {:?}, ARI vs planted {:.3}",
        model.total_cost,
        model.cluster_sizes(),
        adjusted_rand_index(&model.assignments, &truth)
    );

    // Scatter the vectors over 16 pretend slides.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let slides = SlideGrouping::uniform((0..data.len()).map(|_| rng.random_range(0..16)).collect());
    let (report, _) = select_k(&data, &slides, 2..=8, 50, 1)?;
    println!("\n k  min medoid dist  max |rho|  passes");
    for r in &report.rows {
        println!(
            "{:>2}  {:>15.3}  {:>9.3}  {}",
            r.k, r.min_medoid_distance, r.max_abs_spearman, r.passes
        );
    }
    println!(
        "chosen k = {}{}",
        report.chosen_k,
        if report.fallback { " (fallback)" } else { "" }
    );
    Ok(())
}
