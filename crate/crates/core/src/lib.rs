//! Tissue phenotyping from whole-slide cell maps.
//!
//! The pipeline cuts every slide into 200 µm tiles, builds a Delaunay cell
//! network inside each tile, summarizes it as a 10-bin cell-cell connection
//! frequency (CF) vector, and clusters the pooled vectors into phenotypes with
//! k-medoids under the chi-squared distance. Per-slide phenotype ratios,
//! appearance-based tissue ratios and a Morisita–Horn co-localization index
//! form the slide signature, which the [`stats`] module relates to metastasis
//! outcome (logistic regression) and metastasis-free survival (Cox model,
//! Kaplan–Meier, log-rank).
//!
//! ```no_run
//! use histophenotype::{cellgraph, cellmap};
//!
//! # fn main() -> histophenotype::Result<()> {
//! let map = cellmap::load_cell_map("slide01.cells.csv".as_ref())?;
//! let tiles = cellmap::tile_cells(&map, 200.0)?;
//! for tile in &tiles.tiles {
//!     if let Some((_, cf)) = cellgraph::tile_profile(tile) {
//!         println!("{:?} {:?}", tile.address, cf.h);
//!     }
//! }
//! # Ok(())
//! # }
//! ```
//!
//! Runnable walkthroughs of each stage live in the crate's `examples/` directory.

pub mod cellgraph;
pub mod cellmap;
pub mod error;
pub mod features;
pub mod phenotype;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};

/// Library version recorded in persisted models and run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
