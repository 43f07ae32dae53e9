//! Clinical table parsing and joining with slide features.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;

pub const CLINICAL_HEADER: [&str; 7] = [
    "slide_id",
    "differentiation",
    "histological_type",
    "t_stage",
    "metastasis_5yr",
    "dmfs_years",
    "event",
];

/// Tumor grade; well-differentiated tumors are folded into `Moderate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Differentiation {
    Moderate,
    Poor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HistologicalType {
    Adenocarcinoma,
    Mucinous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TStage {
    T3,
    T4,
}

impl FromStr for Differentiation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "WD" | "MD" => Ok(Differentiation::Moderate),
            "PD" => Ok(Differentiation::Poor),
            other => Err(format!("unknown differentiation '{other}'")),
        }
    }
}

impl fmt::Display for Differentiation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Differentiation::Moderate => "MD",
            Differentiation::Poor => "PD",
        })
    }
}

impl FromStr for HistologicalType {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adenocarcinoma" => Ok(HistologicalType::Adenocarcinoma),
            "mucinous" => Ok(HistologicalType::Mucinous),
            other => Err(format!("unknown histological type '{other}'")),
        }
    }
}

impl fmt::Display for HistologicalType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HistologicalType::Adenocarcinoma => "adenocarcinoma",
            HistologicalType::Mucinous => "mucinous",
        })
    }
}

impl FromStr for TStage {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().trim_start_matches('p') {
            "t3" => Ok(TStage::T3),
            "t4" => Ok(TStage::T4),
            _ => Err(format!("unknown T stage '{}'", s.trim())),
        }
    }
}

impl fmt::Display for TStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TStage::T3 => "pT3",
            TStage::T4 => "pT4",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalRecord {
    pub slide_id: String,
    pub differentiation: Option<Differentiation>,
    pub histological_type: Option<HistologicalType>,
    pub t_stage: Option<TStage>,
    pub metastasis_5yr: Option<bool>,
    pub dmfs_years: Option<f64>,
    pub event: Option<bool>,
}

fn optional<T: FromStr<Err = String>>(field: &str) -> std::result::Result<Option<T>, String> {
    let f = field.trim();
    if f.is_empty() || f.eq_ignore_ascii_case("na") {
        Ok(None)
    } else {
        f.parse().map(Some)
    }
}

fn optional_flag(field: &str, name: &str) -> std::result::Result<Option<bool>, String> {
    match field.trim() {
        "" | "NA" | "na" => Ok(None),
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        other => Err(format!("{name} must be 0 or 1, got '{other}'")),
    }
}

pub fn parse_clinical(text: &str, source_name: &str) -> Result<Vec<ClinicalRecord>> {
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
    if header.iter().collect::<Vec<_>>() != CLINICAL_HEADER {
        return Err(parse_err(
            1,
            format!("expected header '{}'", CLINICAL_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    let mut seen = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |m: String| parse_err(line, m);
        let slide_id = row[0].to_string();
        if slide_id.is_empty() {
            return Err(err("empty slide_id".into()));
        }
        if let Some(prev) = seen.insert(slide_id.clone(), line) {
            return Err(err(format!(
                "slide '{slide_id}' already listed on line {prev}"
            )));
        }
        let dmfs_years = match row[5].trim() {
            "" | "NA" | "na" => None,
            v => {
                let t: f64 = v
                    .parse()
                    .map_err(|_| err(format!("bad dmfs_years '{v}'")))?;
                if !t.is_finite() || t < 0.0 {
                    return Err(err(format!("dmfs_years must be non-negative, got {v}")));
                }
                Some(t)
            }
        };
        let event = optional_flag(&row[6], "event").map_err(err)?;
        if dmfs_years.is_some() != event.is_some() {
            return Err(err(
                "dmfs_years and event must be both present or both missing".into(),
            ));
        }
        out.push(ClinicalRecord {
            slide_id,
            differentiation: optional(&row[1]).map_err(err)?,
            histological_type: optional(&row[2]).map_err(err)?,
            t_stage: optional(&row[3]).map_err(err)?,
            metastasis_5yr: optional_flag(&row[4], "metastasis_5yr").map_err(err)?,
            dmfs_years,
            event,
        });
    }
    Ok(out)
}

pub fn load_clinical(path: &Path) -> Result<Vec<ClinicalRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_clinical(&text, &path.display().to_string())
}

fn opt_string<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, ToString::to_string)
}

fn opt_flag(v: Option<bool>) -> &'static str {
    match v {
        None => "",
        Some(false) => "0",
        Some(true) => "1",
    }
}

pub fn write_clinical(records: &[ClinicalRecord]) -> String {
    let mut out = CLINICAL_HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.slide_id,
            opt_string(&r.differentiation),
            opt_string(&r.histological_type),
            opt_string(&r.t_stage),
            opt_flag(r.metastasis_5yr),
            r.dmfs_years.map_or_else(String::new, |t| format!("{t:?}")),
            opt_flag(r.event),
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub clinical: ClinicalRecord,
    /// Values aligned with `CohortTable::feature_names`; `None` when undefined.
    pub features: Vec<Option<f64>>,
}

/// Patients with both slide features and clinical data, sorted by slide id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<CohortRow>,
}

impl CohortTable {
    /// Inner join on slide id; unmatched slides on either side are logged and skipped.
    pub fn join(features: &FeatureTable, clinical: &[ClinicalRecord]) -> Result<Self> {
        let by_id: BTreeMap<&str, &ClinicalRecord> =
            clinical.iter().map(|c| (c.slide_id.as_str(), c)).collect();
        let mut rows = Vec::new();
        let mut matched = 0;
        for row in &features.rows {
            match by_id.get(row.slide_id.as_str()) {
                Some(c) => {
                    matched += 1;
                    rows.push(CohortRow {
                        clinical: (*c).clone(),
                        features: row.values.clone(),
                    });
                }
                None => log::warn!("slide {} has no clinical record", row.slide_id),
            }
        }
        if matched < clinical.len() {
            log::warn!(
                "{} clinical records have no slide features",
                clinical.len() - matched
            );
        }
        if rows.is_empty() {
            return Err(Error::Validation(
                "no slide matches a clinical record".into(),
            ));
        }
        rows.sort_by(|a, b| a.clinical.slide_id.cmp(&b.clinical.slide_id));
        Ok(CohortTable {
            feature_names: features.columns.clone(),
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn feature_table(&self) -> FeatureTable {
        FeatureTable {
            columns: self.feature_names.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| crate::features::FeatureRow {
                    slide_id: r.clinical.slide_id.clone(),
                    values: r.features.clone(),
                })
                .collect(),
        }
    }

    pub fn clinical(&self) -> Vec<ClinicalRecord> {
        self.rows.iter().map(|r| r.clinical.clone()).collect()
    }
}
