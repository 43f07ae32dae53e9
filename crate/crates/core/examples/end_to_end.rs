//! Writes a synthetic study to a temporary directory and runs the whole
//! pipeline on it: tiling, networks, phenotyping, features and statistics.

use histophenotype::pipeline::{run_pipeline, summarize, RunConfig};
use histophenotype::synth::study_fixture;

fn main() -> histophenotype::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| histophenotype::Error::io("tempdir", e))?;
    let input = dir.path().join("slides");
    study_fixture(20, 1)?.write_to(&input)?;

    let config = RunConfig {
        clinical: Some(input.join("clinical.csv")),
        input,
        stats: true,
        k_range: (2, 8),
        restarts: 30,
        bootstrap_replicates: 30,
        out: dir.path().join("out"),
        ..RunConfig::default()
    };
    let manifest = run_pipeline(&config)?;
    println!("{}", summarize(&manifest));
    for (path, hash) in manifest
        .outputs
        .iter()
        .filter(|(p, _)| !p.starts_with("cf/") && !p.starts_with("km/"))
    {
        println!("  {path:<18} {}", &hash[..12]);
    }
    Ok(())
}
