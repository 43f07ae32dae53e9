//! Cell maps, tissue-label grids and the fixed tile decomposition of a slide.
//!
//! Coordinates are micrometres. A slide is cut into square tiles of side `T`
//! using half-open intervals, so a cell lying exactly on a grid line belongs
//! to the tile with the higher index.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TILE_SIZE_UM: f64 = 200.0;

/// The four detected cell classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CellClass {
    /// Malignant epithelial.
    M,
    /// Inflammatory.
    I,
    /// Spindle-shaped.
    S,
    /// Necrotic debris.
    N,
}

impl CellClass {
    pub const ALL: [CellClass; 4] = [CellClass::M, CellClass::I, CellClass::S, CellClass::N];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn token(self) -> &'static str {
        match self {
            CellClass::M => "M",
            CellClass::I => "I",
            CellClass::S => "S",
            CellClass::N => "N",
        }
    }
}

impl FromStr for CellClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "M" => Ok(CellClass::M),
            "I" => Ok(CellClass::I),
            "S" => Ok(CellClass::S),
            "N" => Ok(CellClass::N),
            other => Err(format!(
                "unknown cell class {other:?} (expected M, I, S or N)"
            )),
        }
    }
}

impl fmt::Display for CellClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Appearance-based tissue category of a tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TissueLabel {
    Normal,
    Background,
    LooseConnective,
    Fat,
    Stroma,
    Inflammation,
    Necrosis,
    SmoothMuscle,
    Tumor,
}

impl TissueLabel {
    pub const ALL: [TissueLabel; 9] = [
        TissueLabel::Normal,
        TissueLabel::Background,
        TissueLabel::LooseConnective,
        TissueLabel::Fat,
        TissueLabel::Stroma,
        TissueLabel::Inflammation,
        TissueLabel::Necrosis,
        TissueLabel::SmoothMuscle,
        TissueLabel::Tumor,
    ];

    /// Categories that make up the tissue area (everything except normal, fat and background).
    pub const COUNTED: [TissueLabel; 6] = [
        TissueLabel::LooseConnective,
        TissueLabel::Stroma,
        TissueLabel::Inflammation,
        TissueLabel::Necrosis,
        TissueLabel::SmoothMuscle,
        TissueLabel::Tumor,
    ];

    pub fn token(self) -> &'static str {
        match self {
            TissueLabel::Normal => "normal",
            TissueLabel::Background => "background",
            TissueLabel::LooseConnective => "loose_connective",
            TissueLabel::Fat => "fat",
            TissueLabel::Stroma => "stroma",
            TissueLabel::Inflammation => "inflammation",
            TissueLabel::Necrosis => "necrosis",
            TissueLabel::SmoothMuscle => "smooth_muscle",
            TissueLabel::Tumor => "tumor",
        }
    }

    pub fn is_tissue(self) -> bool {
        !matches!(
            self,
            TissueLabel::Normal | TissueLabel::Fat | TissueLabel::Background
        )
    }
}

impl FromStr for TissueLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        TissueLabel::ALL
            .iter()
            .copied()
            .find(|l| l.token() == s)
            .ok_or_else(|| format!("unknown tissue category {s:?}"))
    }
}

impl fmt::Display for TissueLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub x: f64,
    pub y: f64,
    pub class: CellClass,
}

impl CellRecord {
    pub fn new(x: f64, y: f64, class: CellClass) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Validation(format!(
                "non-finite cell coordinate ({x}, {y})"
            )));
        }
        if x < 0.0 || y < 0.0 {
            return Err(Error::Validation(format!(
                "negative cell coordinate ({x}, {y})"
            )));
        }
        Ok(CellRecord { x, y, class })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellMap {
    pub slide_id: String,
    pub cells: Vec<CellRecord>,
    /// (width, height) in µm.
    pub extent: (f64, f64),
}

impl CellMap {
    /// Builds a map, taking the bounding box of the cells as extent when none is declared.
    pub fn new(
        slide_id: impl Into<String>,
        cells: Vec<CellRecord>,
        extent: Option<(f64, f64)>,
    ) -> Result<Self> {
        let slide_id = slide_id.into();
        if slide_id.is_empty() {
            return Err(Error::Validation("slide_id must not be empty".into()));
        }
        let extent = match extent {
            Some((w, h)) => {
                if !(w.is_finite() && h.is_finite() && w >= 0.0 && h >= 0.0) {
                    return Err(Error::Validation(format!("invalid extent {w}x{h}")));
                }
                if let Some(c) = cells.iter().find(|c| c.x > w || c.y > h) {
                    return Err(Error::Validation(format!(
                        "cell at ({}, {}) lies outside declared extent {w}x{h}",
                        c.x, c.y
                    )));
                }
                (w, h)
            }
            None => cells
                .iter()
                .fold((0.0f64, 0.0f64), |(w, h), c| (w.max(c.x), h.max(c.y))),
        };
        Ok(CellMap {
            slide_id,
            cells,
            extent,
        })
    }

    pub fn count(&self, class: CellClass) -> usize {
        self.cells.iter().filter(|c| c.class == class).count()
    }
}

/// Row/column address of a tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileAddress {
    pub row: u32,
    pub col: u32,
}

impl TileAddress {
    pub fn new(row: u32, col: u32) -> Self {
        TileAddress { row, col }
    }

    /// Tile containing the point under the half-open convention.
    pub fn containing(x: f64, y: f64, tile_size: f64) -> Self {
        TileAddress {
            row: (y / tile_size).floor() as u32,
            col: (x / tile_size).floor() as u32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TissueLabelGrid {
    pub slide_id: String,
    pub tile_size: f64,
    pub labels: BTreeMap<TileAddress, TissueLabel>,
}

impl TissueLabelGrid {
    pub fn new(slide_id: impl Into<String>, tile_size: f64) -> Self {
        TissueLabelGrid {
            slide_id: slide_id.into(),
            tile_size,
            labels: BTreeMap::new(),
        }
    }

    pub fn get(&self, addr: TileAddress) -> Option<TissueLabel> {
        self.labels.get(&addr).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count(&self, label: TissueLabel) -> usize {
        self.labels.values().filter(|&&l| l == label).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub address: TileAddress,
    pub cells: Vec<CellRecord>,
}

impl Tile {
    /// Half-open bounds `[x0, x1) × [y0, y1)` in µm.
    pub fn bounds(&self, tile_size: f64) -> ((f64, f64), (f64, f64)) {
        let x0 = self.address.col as f64 * tile_size;
        let y0 = self.address.row as f64 * tile_size;
        ((x0, x0 + tile_size), (y0, y0 + tile_size))
    }
}

/// Non-empty tiles of one slide, ordered by (row, col).
#[derive(Debug, Clone, PartialEq)]
pub struct TileSet {
    pub slide_id: String,
    pub tile_size: f64,
    pub extent: (f64, f64),
    pub tiles: Vec<Tile>,
}

impl TileSet {
    /// Number of (rows, cols) the extent spans, including cells sitting on the far border.
    pub fn grid_dims(&self) -> (u32, u32) {
        let rows = (self.extent.1 / self.tile_size).ceil() as u32;
        let cols = (self.extent.0 / self.tile_size).ceil() as u32;
        self.tiles.iter().fold((rows, cols), |(r, c), t| {
            (r.max(t.address.row + 1), c.max(t.address.col + 1))
        })
    }

    pub fn get(&self, addr: TileAddress) -> Option<&Tile> {
        self.tiles
            .binary_search_by_key(&addr, |t| t.address)
            .ok()
            .map(|i| &self.tiles[i])
    }

    pub fn cell_count(&self) -> usize {
        self.tiles.iter().map(|t| t.cells.len()).sum()
    }
}

/// Partitions the cells of a map into tiles of side `tile_size`.
pub fn tile_cells(map: &CellMap, tile_size: f64) -> Result<TileSet> {
    if !(tile_size.is_finite() && tile_size > 0.0) {
        return Err(Error::Validation(format!(
            "tile size must be positive, got {tile_size}"
        )));
    }
    let mut buckets: BTreeMap<TileAddress, Vec<CellRecord>> = BTreeMap::new();
    for cell in &map.cells {
        buckets
            .entry(TileAddress::containing(cell.x, cell.y, tile_size))
            .or_default()
            .push(*cell);
    }
    Ok(TileSet {
        slide_id: map.slide_id.clone(),
        tile_size,
        extent: map.extent,
        tiles: buckets
            .into_iter()
            .map(|(address, cells)| Tile { address, cells })
            .collect(),
    })
}

fn header_directive(text: &str, key: &str) -> Option<String> {
    text.lines()
        .map(str::trim)
        .take_while(|l| l.starts_with('#') || l.is_empty())
        .filter_map(|l| l.trim_start_matches('#').trim().strip_prefix(key))
        .filter_map(|rest| rest.trim_start().strip_prefix('='))
        .map(|v| v.trim().to_string())
        .next()
}

fn parse_extent(value: &str, source_name: &str) -> Result<(f64, f64)> {
    let bad = || Error::Parse {
        source_name: source_name.to_string(),
        line: 1,
        message: format!("malformed extent {value:?}, expected <W>x<H>"),
    };
    let (w, h) = value.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: f64 = w.trim().parse().map_err(|_| bad())?;
    let h: f64 = h.trim().parse().map_err(|_| bad())?;
    Ok((w, h))
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(text.as_bytes())
}

fn check_headers(
    reader: &mut csv::Reader<&[u8]>,
    expected: &[&str],
    source_name: &str,
) -> Result<()> {
    let headers = reader.headers().map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        line: 1,
        message: e.to_string(),
    })?;
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(Error::Parse {
            source_name: source_name.to_string(),
            line: headers.position().map_or(1, |p| p.line() as usize),
            message: format!("expected columns {expected:?}, found {found:?}"),
        });
    }
    Ok(())
}

/// Slide identifier derived from a file name: the stem up to the first `.`.
pub fn slide_id_from_path(path: &Path) -> String {
    path.file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.split('.').next().unwrap_or(n).to_string())
        .unwrap_or_default()
}

/// Parses the cell CSV format (`x_um,y_um,class`, optional `# extent_um=WxH`).
pub fn parse_cell_map(text: &str, slide_id: &str, source_name: &str) -> Result<CellMap> {
    let extent = header_directive(text, "extent_um")
        .map(|v| parse_extent(&v, source_name))
        .transpose()?;
    let mut reader = csv_reader(text);
    check_headers(&mut reader, &["x_um", "y_um", "class"], source_name)?;
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let x: f64 = record[0]
            .parse()
            .map_err(|_| parse_err(format!("bad x coordinate {:?}", &record[0])))?;
        let y: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(format!("bad y coordinate {:?}", &record[1])))?;
        let class: CellClass = record[2].parse().map_err(parse_err)?;
        let cell =
            CellRecord::new(x, y, class).map_err(|e| e.context(format!("{source_name}:{line}")))?;
        cells.push(cell);
    }
    CellMap::new(slide_id, cells, extent)
}

pub fn load_cell_map(path: &Path) -> Result<CellMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cell_map(
        &text,
        &slide_id_from_path(path),
        &path.display().to_string(),
    )
}

pub fn write_cell_map<W: Write>(map: &CellMap, out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "# extent_um={}x{}", map.extent.0, map.extent.1)
        .and_then(|_| writeln!(out, "x_um,y_um,class"))
        .map_err(|e| Error::io("<cell map>", e))?;
    for c in &map.cells {
        writeln!(out, "{},{},{}", c.x, c.y, c.class).map_err(|e| Error::io("<cell map>", e))?;
    }
    Ok(())
}

/// Parses the tissue-label CSV format (`row,col,label`, optional `# tile_um=T`).
pub fn parse_tissue_labels(
    text: &str,
    slide_id: &str,
    source_name: &str,
) -> Result<TissueLabelGrid> {
    let tile_size = match header_directive(text, "tile_um") {
        Some(v) => v.parse::<f64>().map_err(|_| Error::Parse {
            source_name: source_name.to_string(),
            line: 1,
            message: format!("malformed tile size {v:?}"),
        })?,
        None => DEFAULT_TILE_SIZE_UM,
    };
    let mut grid = TissueLabelGrid::new(slide_id, tile_size);
    let mut reader = csv_reader(text);
    check_headers(&mut reader, &["row", "col", "label"], source_name)?;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let row: u32 = record[0]
            .parse()
            .map_err(|_| parse_err(format!("bad row index {:?}", &record[0])))?;
        let col: u32 = record[1]
            .parse()
            .map_err(|_| parse_err(format!("bad column index {:?}", &record[1])))?;
        let label: TissueLabel = record[2].parse().map_err(parse_err)?;
        let addr = TileAddress::new(row, col);
        if grid.labels.insert(addr, label).is_some() {
            return Err(parse_err(format!("duplicate tile address ({row}, {col})")));
        }
    }
    Ok(grid)
}

pub fn load_tissue_labels(path: &Path) -> Result<TissueLabelGrid> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tissue_labels(
        &text,
        &slide_id_from_path(path),
        &path.display().to_string(),
    )
}

pub fn write_tissue_labels<W: Write>(grid: &TissueLabelGrid, out: W) -> Result<()> {
    let mut out = out;
    let io = |e| Error::io("<tissue labels>", e);
    writeln!(out, "# tile_um={}", grid.tile_size).map_err(io)?;
    writeln!(out, "row,col,label").map_err(io)?;
    for (addr, label) in &grid.labels {
        writeln!(out, "{},{},{}", addr.row, addr.col, label).map_err(io)?;
    }
    Ok(())
}
