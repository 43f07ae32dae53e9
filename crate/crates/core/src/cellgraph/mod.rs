//! Per-tile cell networks and their cell-cell connection-frequency vectors.

pub mod delaunay;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cellmap::{CellClass, Tile, TileAddress};
use crate::error::{Error, Result};

pub use delaunay::{delaunay, triangulate, EdgeSet, Triangulation};

/// Number of unordered class pairs over {M, I, S, N}.
pub const PAIR_COUNT: usize = 10;

/// Unordered class pairs in vector order.
pub const PAIRS: [(CellClass, CellClass); PAIR_COUNT] = {
    use CellClass::*;
    [
        (M, M),
        (M, I),
        (M, S),
        (M, N),
        (I, I),
        (I, S),
        (I, N),
        (S, S),
        (S, N),
        (N, N),
    ]
};

/// Position of the unordered pair `{a, b}` in [`PAIRS`].
pub fn pair_index(a: CellClass, b: CellClass) -> usize {
    let (i, j) = if a.index() <= b.index() {
        (a.index(), b.index())
    } else {
        (b.index(), a.index())
    };
    // Row i of the upper triangle starts after 4 + 3 + ... entries.
    i * 4 - i * (i.saturating_sub(1)) / 2 + (j - i)
}

pub fn pair_label(k: usize) -> String {
    let (a, b) = PAIRS[k];
    format!("{a}{b}")
}

/// Connection-frequency histogram of one tile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfVector {
    pub h: [f64; PAIR_COUNT],
    pub edge_count: usize,
}

impl CfVector {
    pub fn zero() -> Self {
        CfVector {
            h: [0.0; PAIR_COUNT],
            edge_count: 0,
        }
    }

    /// Wraps raw frequencies, checking they are non-negative and finite.
    pub fn from_frequencies(h: [f64; PAIR_COUNT], edge_count: usize) -> Result<Self> {
        if let Some(v) = h.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Validation(format!(
                "frequency entries must be finite and non-negative, found {v}"
            )));
        }
        Ok(CfVector { h, edge_count })
    }

    /// Builds a frequency vector from raw pair counts.
    pub fn from_counts(counts: [usize; PAIR_COUNT]) -> Self {
        let total: usize = counts.iter().sum();
        let mut h = [0.0; PAIR_COUNT];
        if total > 0 {
            for (slot, &c) in h.iter_mut().zip(&counts) {
                *slot = c as f64 / total as f64;
            }
        }
        CfVector {
            h,
            edge_count: total,
        }
    }

    pub fn get(&self, a: CellClass, b: CellClass) -> f64 {
        self.h[pair_index(a, b)]
    }

    pub fn has_edges(&self) -> bool {
        self.edge_count > 0
    }
}

/// Chi-squared distance on raw frequency arrays; `0/0` terms count as zero.
#[inline]
pub fn chi2(h: &[f64; PAIR_COUNT], m: &[f64; PAIR_COUNT]) -> f64 {
    let mut d = 0.0;
    for k in 0..PAIR_COUNT {
        let s = h[k] + m[k];
        if s > 0.0 {
            let diff = h[k] - m[k];
            d += diff * diff / s;
        }
    }
    d
}

/// Chi-squared distance between two frequency vectors.
pub fn chi_squared_distance(h: &CfVector, m: &CfVector) -> Result<f64> {
    for v in h.h.iter().chain(m.h.iter()) {
        if !(v.is_finite() && *v >= 0.0) {
            return Err(Error::Validation(format!(
                "chi-squared distance needs non-negative entries, found {v}"
            )));
        }
    }
    Ok(chi2(&h.h, &m.h))
}

/// Counts edges by unordered class pair and normalizes by the edge total.
pub fn connection_frequency(tile: &Tile, edges: &EdgeSet) -> CfVector {
    let mut counts = [0usize; PAIR_COUNT];
    for &(a, b) in edges.iter() {
        counts[pair_index(tile.cells[a].class, tile.cells[b].class)] += 1;
    }
    CfVector::from_counts(counts)
}

/// Delaunay network of the cells inside one tile; no edges leave the tile.
pub fn tile_network(tile: &Tile) -> Result<EdgeSet> {
    let points: Vec<[f64; 2]> = tile.cells.iter().map(|c| [c.x, c.y]).collect();
    delaunay(&points)
}

/// Network and frequency vector of a tile, or `None` when the tile is too sparse
/// or degenerate to triangulate.
pub fn tile_profile(tile: &Tile) -> Option<(EdgeSet, CfVector)> {
    if tile.cells.len() < 3 {
        return None;
    }
    let edges = tile_network(tile).ok()?;
    let cf = connection_frequency(tile, &edges);
    Some((edges, cf))
}

pub fn write_edges_csv<W: Write>(rows: &[(TileAddress, &EdgeSet)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Validation(format!("writing edge list: {e}"));
    w.write_record(["tile_row", "tile_col", "cell_a", "cell_b"])
        .map_err(csv_err)?;
    for (addr, edges) in rows {
        for &(a, b) in edges.iter() {
            w.write_record(&[
                addr.row.to_string(),
                addr.col.to_string(),
                a.to_string(),
                b.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<edges csv>", e))?;
    Ok(())
}

pub fn cf_csv_header() -> Vec<String> {
    let mut header = vec!["tile_row".to_string(), "tile_col".to_string()];
    header.extend((0..PAIR_COUNT).map(|k| format!("h_{}", pair_label(k))));
    header.push("edge_count".to_string());
    header
}

/// Writes CF vectors with full-precision (round-trip) float formatting.
pub fn write_cf_csv<W: Write>(rows: &[(TileAddress, CfVector)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Validation(format!("writing CF vectors: {e}"));
    w.write_record(cf_csv_header()).map_err(csv_err)?;
    for (addr, cf) in rows {
        let mut rec = vec![addr.row.to_string(), addr.col.to_string()];
        rec.extend(cf.h.iter().map(|v| format!("{v:?}")));
        rec.push(cf.edge_count.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<cf csv>", e))?;
    Ok(())
}

pub fn parse_cf_csv(text: &str, source_name: &str) -> Result<Vec<(TileAddress, CfVector)>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = r
        .headers()
        .map_err(|e| Error::Parse {
            source_name: source_name.into(),
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if headers != cf_csv_header() {
        return Err(Error::Parse {
            source_name: source_name.into(),
            line: 1,
            message: format!("unexpected CF header {headers:?}"),
        });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Parse {
            source_name: source_name.into(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |what: &str| Error::Parse {
            source_name: source_name.into(),
            line,
            message: format!("bad {what}"),
        };
        let row = rec[0].parse().map_err(|_| bad("tile_row"))?;
        let col = rec[1].parse().map_err(|_| bad("tile_col"))?;
        let mut h = [0.0; PAIR_COUNT];
        for (k, slot) in h.iter_mut().enumerate() {
            *slot = rec[2 + k].parse().map_err(|_| bad("frequency"))?;
        }
        let edge_count = rec[2 + PAIR_COUNT].parse().map_err(|_| bad("edge_count"))?;
        let cf = CfVector::from_frequencies(h, edge_count)
            .map_err(|e| e.context(format!("{source_name}:{line}")))?;
        out.push((TileAddress::new(row, col), cf));
    }
    Ok(out)
}
