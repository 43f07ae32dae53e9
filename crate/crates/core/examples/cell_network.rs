//! Tiles a synthetic cell map and prints the Delaunay network of its busiest tile.

use histophenotype::cellgraph::{pair_label, tile_profile};
use histophenotype::cellmap::{tile_cells, TissueLabel};
use histophenotype::synth::{generate_slide, Rect, Region, SlideSpec};

fn main() -> histophenotype::Result<()> {
    let spec = SlideSpec {
        slide_id: "demo".into(),
        extent: (600.0, 400.0),
        tile_size: 200.0,
        regions: vec![
            Region {
                rect: Rect::new(0.0, 0.0, 400.0, 400.0),
                label: TissueLabel::Tumor,
                intensity: [1200.0, 150.0, 0.0, 0.0],
            },
            Region {
                rect: Rect::new(400.0, 0.0, 600.0, 400.0),
                label: TissueLabel::Stroma,
                intensity: [0.0, 200.0, 900.0, 0.0],
            },
        ],
        seed: 7,
    };
    let (map, _labels) = generate_slide(&spec)?;
    let tiles = tile_cells(&map, 200.0)?;
    let (rows, cols) = tiles.grid_dims();
    println!(
        "{} cells in {} tiles ({rows}x{cols} grid)",
        map.cells.len(),
        tiles.tiles.len()
    );

    let busiest = tiles
        .tiles
        .iter()
        .max_by_key(|t| t.cells.len())
        .expect("non-empty slide");
    let (edges, cf) = tile_profile(busiest).expect("dense tile");
    println!(
        "tile ({}, {}): {} cells, {} edges",
        busiest.address.row,
        busiest.address.col,
        busiest.cells.len(),
        edges.len()
    );
    for (k, h) in cf.h.iter().enumerate().filter(|(_, h)| **h > 0.0) {
        println!("  {:>2}  {h:.3}", pair_label(k));
    }
    Ok(())
}
