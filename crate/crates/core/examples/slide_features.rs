//! Slide-level features from a synthetic study: phenotype ratios from a fixed
//! clustering, appearance ratios, Morisita-Horn overlap and area ratios.

use std::collections::BTreeMap;

use histophenotype::cellgraph::tile_profile;
use histophenotype::cellmap::tile_cells;
use histophenotype::features::{FeatureTable, SlideFeatures};
use histophenotype::phenotype::{assign, kmedoids};
use histophenotype::synth::study_fixture;

fn main() -> histophenotype::Result<()> {
    let study = study_fixture(6, 11)?;

    let mut profiles = Vec::new();
    for (map, _) in &study.slides {
        let tiles = tile_cells(map, 200.0)?;
        let rows: Vec<_> = tiles
            .tiles
            .iter()
            .filter_map(|t| tile_profile(t).map(|(_, cf)| (t.address, cf)))
            .collect();
        profiles.push(rows);
    }
    let pooled: Vec<_> = profiles.iter().flatten().map(|(_, cf)| *cf).collect();
    let model = kmedoids(&pooled, 6, 30, 0)?;

    let mut slides = Vec::new();
    for ((map, labels), rows) in study.slides.iter().zip(&profiles) {
        let mut assigned = BTreeMap::new();
        for (addr, cf) in rows {
            assigned.insert(*addr, assign(&model, cf)?);
        }
        slides.push(SlideFeatures::compute(
            map, labels, &assigned, model.k, 200.0,
        )?);
    }
    print!("{}", FeatureTable::from_slides(&slides, model.k).to_csv());
    Ok(())
}
