//! Slide-level signatures: phenotype area ratios, appearance ratios,
//! inflammatory/malignant co-localization and paired area ratios.
//!
//! Areas are measured in whole tiles. A ratio whose denominator is empty is
//! reported as missing, never as zero.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cellmap::{CellClass, CellMap, TileAddress, TissueLabel, TissueLabelGrid};
use crate::error::{Error, Result};

/// Tiles whose appearance label counts as tissue.
pub fn tissue_tiles(grid: &TissueLabelGrid) -> BTreeSet<TileAddress> {
    grid.labels
        .iter()
        .filter(|(_, l)| l.is_tissue())
        .map(|(&a, _)| a)
        .collect()
}

/// Share of tissue tiles assigned to each of the `k` phenotypes. Tissue tiles
/// without a phenotype enlarge the denominator only.
pub fn cf_phenotype_ratios(
    assignments: &BTreeMap<TileAddress, usize>,
    tissue: &BTreeSet<TileAddress>,
    k: usize,
) -> Result<Vec<f64>> {
    if tissue.is_empty() {
        return Err(Error::UndefinedRatio("slide has no tissue tiles".into()));
    }
    let mut counts = vec![0usize; k];
    for (addr, &p) in assignments {
        if p >= k {
            return Err(Error::Validation(format!(
                "tile ({}, {}) assigned to phenotype {p} but k = {k}",
                addr.row, addr.col
            )));
        }
        if tissue.contains(addr) {
            counts[p] += 1;
        }
    }
    let den = tissue.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / den).collect())
}

/// Share of tissue tiles carrying each counted appearance category.
pub fn ap_phenotype_ratios(grid: &TissueLabelGrid) -> Result<BTreeMap<TissueLabel, f64>> {
    let total: usize = TissueLabel::COUNTED.iter().map(|&l| grid.count(l)).sum();
    if total == 0 {
        return Err(Error::UndefinedRatio(format!(
            "slide {} has no tissue tiles",
            grid.slide_id
        )));
    }
    Ok(TissueLabel::COUNTED
        .iter()
        .map(|&l| (l, grid.count(l) as f64 / total as f64))
        .collect())
}

/// Morisita–Horn overlap of inflammatory and malignant cell counts over
/// square quadrats of side `quadrat_size` laid on the slide.
pub fn morisita_index(map: &CellMap, quadrat_size: f64) -> Result<f64> {
    if !(quadrat_size.is_finite() && quadrat_size > 0.0) {
        return Err(Error::Validation(format!(
            "quadrat size must be positive, got {quadrat_size}"
        )));
    }
    let mut counts: BTreeMap<TileAddress, (f64, f64)> = BTreeMap::new();
    for c in &map.cells {
        let q = counts
            .entry(TileAddress::containing(c.x, c.y, quadrat_size))
            .or_default();
        match c.class {
            CellClass::I => q.0 += 1.0,
            CellClass::M => q.1 += 1.0,
            _ => {}
        }
    }
    morisita_horn(counts.values().copied())
}

/// Morisita–Horn index of paired quadrat counts.
pub fn morisita_horn(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<f64> {
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    if sx == 0.0 || sy == 0.0 {
        return Err(Error::UndefinedIndex(
            "both populations need at least one cell".into(),
        ));
    }
    let dx = sxx / (sx * sx);
    let dy = syy / (sy * sy);
    Ok((2.0 * sxy / ((dx + dy) * sx * sy)).clamp(0.0, 1.0))
}

/// `a / (a + b)` for tile counts.
pub fn area_pair_ratio(a: usize, b: usize) -> Result<f64> {
    if a + b == 0 {
        return Err(Error::UndefinedRatio("both areas are empty".into()));
    }
    Ok(a as f64 / (a + b) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideFeatures {
    pub slide_id: String,
    pub cf_ratio: Option<Vec<f64>>,
    pub ap_ratio: Option<BTreeMap<TissueLabel, f64>>,
    pub morisita: Option<f64>,
    pub stroma_tumor: Option<f64>,
    pub necrosis_tumor: Option<f64>,
}

fn defined<T>(what: &str, slide: &str, r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e @ (Error::UndefinedRatio(_) | Error::UndefinedIndex(_))) => {
            log::info!("{slide}: {what} undefined ({e})");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

impl SlideFeatures {
    pub fn compute(
        map: &CellMap,
        grid: &TissueLabelGrid,
        assignments: &BTreeMap<TileAddress, usize>,
        k: usize,
        quadrat_size: f64,
    ) -> Result<Self> {
        if map.slide_id != grid.slide_id {
            return Err(Error::Validation(format!(
                "cell map {} paired with labels of {}",
                map.slide_id, grid.slide_id
            )));
        }
        let id = map.slide_id.as_str();
        let tissue = tissue_tiles(grid);
        let stroma = grid.count(TissueLabel::Stroma);
        let necrosis = grid.count(TissueLabel::Necrosis);
        let tumor = grid.count(TissueLabel::Tumor);
        Ok(SlideFeatures {
            slide_id: map.slide_id.clone(),
            cf_ratio: defined(
                "CF ratios",
                id,
                cf_phenotype_ratios(assignments, &tissue, k),
            )?,
            ap_ratio: defined("AP ratios", id, ap_phenotype_ratios(grid))?,
            morisita: defined("Morisita index", id, morisita_index(map, quadrat_size))?,
            stroma_tumor: defined("stroma-tumor ratio", id, area_pair_ratio(stroma, tumor))?,
            necrosis_tumor: defined("necrosis-tumor ratio", id, area_pair_ratio(necrosis, tumor))?,
        })
    }

    /// Values in the order of [`feature_columns`].
    pub fn values(&self, k: usize) -> Vec<Option<f64>> {
        let mut v = Vec::with_capacity(k + TissueLabel::COUNTED.len() + 3);
        for p in 0..k {
            v.push(self.cf_ratio.as_ref().map(|r| r[p]));
        }
        for l in TissueLabel::COUNTED {
            v.push(self.ap_ratio.as_ref().map(|r| r[&l]));
        }
        v.extend([self.morisita, self.stroma_tumor, self.necrosis_tumor]);
        v
    }
}

pub fn feature_columns(k: usize) -> Vec<String> {
    (0..k)
        .map(|p| format!("cf_ratio_{p}"))
        .chain(
            TissueLabel::COUNTED
                .iter()
                .map(|l| format!("ap_{}", l.token())),
        )
        .chain(["morisita", "stroma_tumor", "necrosis_tumor"].map(String::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub slide_id: String,
    pub values: Vec<Option<f64>>,
}

/// One row of named feature values per slide, sorted by slide id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn from_slides(slides: &[SlideFeatures], k: usize) -> Self {
        let mut rows: Vec<FeatureRow> = slides
            .iter()
            .map(|s| FeatureRow {
                slide_id: s.slide_id.clone(),
                values: s.values(k),
            })
            .collect();
        rows.sort_by(|a, b| a.slide_id.cmp(&b.slide_id));
        FeatureTable {
            columns: feature_columns(k),
            rows,
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.values[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("slide_id");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.slide_id);
            for v in &r.values {
                out.push(',');
                if let Some(v) = v {
                    let _ = write!(out, "{v:?}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str, source_name: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let parse_err = |line: u64, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line: line as usize,
            message,
        };
        let header = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        if header.get(0) != Some("slide_id") {
            return Err(parse_err(1, "first column must be slide_id".into()));
        }
        let columns: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec =
                rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let values = rec
                .iter()
                .skip(1)
                .map(|f| {
                    if f.is_empty() {
                        Ok(None)
                    } else {
                        f.parse::<f64>()
                            .map(Some)
                            .map_err(|_| parse_err(line, format!("bad number '{f}'")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(FeatureRow {
                slide_id: rec[0].to_string(),
                values,
            });
        }
        rows.sort_by(|a, b| a.slide_id.cmp(&b.slide_id));
        Ok(FeatureTable { columns, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }
}
