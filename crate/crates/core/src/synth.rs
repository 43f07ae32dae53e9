//! Seeded generators for slides, cohorts and clustered CF vectors with planted
//! structure, used as ground truth by tests and examples.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::cellgraph::{CfVector, PAIR_COUNT};
use crate::cellmap::{
    write_cell_map, write_tissue_labels, CellClass, CellMap, CellRecord, TileAddress, TissueLabel,
    TissueLabelGrid, DEFAULT_TILE_SIZE_UM,
};
use crate::error::{Error, Result};
use crate::stats::cohort::{
    write_clinical, ClinicalRecord, CohortRow, CohortTable, Differentiation, HistologicalType,
    TStage,
};

/// Axis-aligned rectangle `[x0, x1) × [y0, y1)` in µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    fn overlap(&self, other: &Rect) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub rect: Rect,
    pub label: TissueLabel,
    /// Cells per mm² for classes M, I, S, N.
    pub intensity: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideSpec {
    pub slide_id: String,
    pub extent: (f64, f64),
    pub tile_size: f64,
    pub regions: Vec<Region>,
    pub seed: u64,
}

impl SlideSpec {
    fn validate(&self) -> Result<()> {
        let (w, h) = self.extent;
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(Error::Validation(format!("invalid slide extent {w}x{h}")));
        }
        if !(self.tile_size > 0.0 && self.tile_size.is_finite()) {
            return Err(Error::Validation("tile size must be positive".into()));
        }
        for r in &self.regions {
            let q = r.rect;
            if !(q.x0 >= 0.0 && q.y0 >= 0.0 && q.x1 <= w && q.y1 <= h && q.x0 < q.x1 && q.y0 < q.y1)
            {
                return Err(Error::Validation(format!(
                    "region {q:?} is empty or outside the {w}x{h} extent"
                )));
            }
            if r.intensity.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Validation(
                    "intensities must be finite and non-negative".into(),
                ));
            }
        }
        Ok(())
    }
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

/// Samples each class in each region as a homogeneous Poisson process and
/// labels every tile by the region category covering most of it; tiles less
/// than half covered are background.
pub fn generate_slide(spec: &SlideSpec) -> Result<(CellMap, TissueLabelGrid)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cells = Vec::new();
    for region in &spec.regions {
        let r = region.rect;
        let area_mm2 = r.area() * 1e-6;
        for class in CellClass::ALL {
            let n = poisson(&mut rng, region.intensity[class.index()] * area_mm2);
            for _ in 0..n {
                let x = rng.random_range(r.x0..r.x1);
                let y = rng.random_range(r.y0..r.y1);
                cells.push(CellRecord::new(x, y, class)?);
            }
        }
    }
    let map = CellMap::new(spec.slide_id.clone(), cells, Some(spec.extent))?;

    let t = spec.tile_size;
    let rows = (spec.extent.1 / t).ceil() as u32;
    let cols = (spec.extent.0 / t).ceil() as u32;
    let mut grid = TissueLabelGrid::new(spec.slide_id.clone(), t);
    for row in 0..rows {
        for col in 0..cols {
            let tile = Rect::new(
                col as f64 * t,
                row as f64 * t,
                ((col + 1) as f64 * t).min(spec.extent.0),
                ((row + 1) as f64 * t).min(spec.extent.1),
            );
            let mut cover: BTreeMap<TissueLabel, f64> = BTreeMap::new();
            for region in &spec.regions {
                let o = region.rect.overlap(&tile);
                if o > 0.0 {
                    *cover.entry(region.label).or_default() += o;
                }
            }
            let total: f64 = cover.values().sum();
            let label = if total < 0.5 * tile.area() {
                TissueLabel::Background
            } else {
                // Largest cover wins; BTreeMap order breaks ties.
                cover
                    .iter()
                    .fold((TissueLabel::Background, -1.0), |best, (&l, &a)| {
                        if a > best.1 {
                            (l, a)
                        } else {
                            best
                        }
                    })
                    .0
            };
            grid.labels.insert(TileAddress::new(row, col), label);
        }
    }
    Ok((map, grid))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeatureDistribution {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGenerator {
    pub name: String,
    pub distribution: FeatureDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n: usize,
    pub features: Vec<FeatureGenerator>,
    pub logistic_intercept: f64,
    pub logistic_coefficients: Vec<f64>,
    /// Baseline hazard per year of the exponential survival model.
    pub baseline_hazard: f64,
    pub cox_coefficients: Vec<f64>,
    /// Target share of censored patients.
    pub censoring_rate: f64,
    /// Chance that each of differentiation and histological type is missing.
    pub missing_rate: f64,
    pub seed: u64,
}

impl CohortSpec {
    /// Two null features (uniform and normal) with moderate censoring.
    pub fn default_with(n: usize, seed: u64) -> Self {
        CohortSpec {
            n,
            features: vec![
                FeatureGenerator {
                    name: "feature_a".into(),
                    distribution: FeatureDistribution::Uniform {
                        low: 0.0,
                        high: 1.0,
                    },
                },
                FeatureGenerator {
                    name: "feature_b".into(),
                    distribution: FeatureDistribution::Normal { mean: 0.0, sd: 1.0 },
                },
            ],
            logistic_intercept: -0.5,
            logistic_coefficients: vec![0.0, 0.0],
            baseline_hazard: 0.2,
            cox_coefficients: vec![0.0, 0.0],
            censoring_rate: 0.3,
            missing_rate: 0.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let p = self.features.len();
        if self.n < 2 {
            return Err(Error::Validation(
                "a cohort needs at least 2 patients".into(),
            ));
        }
        if self.logistic_coefficients.len() != p || self.cox_coefficients.len() != p {
            return Err(Error::Validation(format!(
                "{p} features but {} logistic and {} Cox coefficients",
                self.logistic_coefficients.len(),
                self.cox_coefficients.len()
            )));
        }
        if !(0.0..1.0).contains(&self.censoring_rate) {
            return Err(Error::Validation(
                "censoring rate must lie in [0, 1)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.missing_rate) {
            return Err(Error::Validation("missing rate must lie in [0, 1]".into()));
        }
        if !(self.baseline_hazard > 0.0 && self.baseline_hazard.is_finite()) {
            return Err(Error::Validation("baseline hazard must be positive".into()));
        }
        for f in &self.features {
            let ok = match f.distribution {
                FeatureDistribution::Uniform { low, high } => low < high,
                FeatureDistribution::Normal { sd, .. } => sd > 0.0,
                FeatureDistribution::Bernoulli { p } => (0.0..=1.0).contains(&p),
            };
            if !ok {
                return Err(Error::Validation(format!(
                    "invalid generator for {}",
                    f.name
                )));
            }
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, d: FeatureDistribution) -> f64 {
    match d {
        FeatureDistribution::Uniform { low, high } => rng.random_range(low..high),
        FeatureDistribution::Normal { mean, sd } => {
            Normal::new(mean, sd).expect("validated").sample(rng)
        }
        FeatureDistribution::Bernoulli { p } => f64::from(u8::from(rng.random::<f64>() < p)),
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Upper bound `c` of uniform censoring on `[0, c]` whose expected censored
/// share over `times` equals `rate`.
fn censoring_bound(times: &[f64], rate: f64) -> f64 {
    let share = |c: f64| times.iter().map(|&t| t.min(c) / c).sum::<f64>() / times.len() as f64;
    let max_t = times.iter().cloned().fold(0.0, f64::max);
    let (mut lo, mut hi) = (max_t * 1e-9, max_t * 1e9);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if share(mid) > rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

/// Survival outcomes under exponential hazards `rates` with uniform censoring
/// calibrated to `censoring_rate`.
fn survival_outcomes(rng: &mut ChaCha8Rng, rates: &[f64], censoring_rate: f64) -> Vec<(f64, bool)> {
    let times: Vec<f64> = rates
        .iter()
        .map(|&r| Exp::new(r).expect("positive rate").sample(rng))
        .collect();
    if censoring_rate == 0.0 {
        return times.into_iter().map(|t| (t, true)).collect();
    }
    let bound = censoring_bound(&times, censoring_rate);
    times
        .into_iter()
        .map(|t| {
            let c = rng.random_range(0.0..bound);
            if t <= c {
                (t, true)
            } else {
                (c, false)
            }
        })
        .collect()
}

fn clinical_draw(rng: &mut ChaCha8Rng, id: String, missing_rate: f64) -> ClinicalRecord {
    let differentiation = if rng.random::<f64>() < 0.2 {
        Differentiation::Poor
    } else {
        Differentiation::Moderate
    };
    let histological_type = if rng.random::<f64>() < 0.15 {
        HistologicalType::Mucinous
    } else {
        HistologicalType::Adenocarcinoma
    };
    let t_stage = if rng.random::<f64>() < 0.3 {
        TStage::T4
    } else {
        TStage::T3
    };
    let keep_d = rng.random::<f64>() >= missing_rate;
    let keep_h = rng.random::<f64>() >= missing_rate;
    ClinicalRecord {
        slide_id: id,
        differentiation: keep_d.then_some(differentiation),
        histological_type: keep_h.then_some(histological_type),
        t_stage: Some(t_stage),
        metastasis_5yr: None,
        dmfs_years: None,
        event: None,
    }
}

/// Draws features, clinical covariates, a logistic metastasis outcome and
/// exponential proportional-hazards survival with uniform censoring.
pub fn generate_cohort(spec: &CohortSpec) -> Result<CohortTable> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::with_capacity(spec.n);
    let mut rates = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let x: Vec<f64> = spec
            .features
            .iter()
            .map(|f| draw(&mut rng, f.distribution))
            .collect();
        let lin = |b: &[f64]| x.iter().zip(b).map(|(v, c)| v * c).sum::<f64>();
        let p = sigmoid(spec.logistic_intercept + lin(&spec.logistic_coefficients));
        let mut clinical = clinical_draw(&mut rng, format!("patient_{i:05}"), spec.missing_rate);
        clinical.metastasis_5yr = Some(rng.random::<f64>() < p);
        rates.push(spec.baseline_hazard * lin(&spec.cox_coefficients).exp());
        rows.push(CohortRow {
            clinical,
            features: x.into_iter().map(Some).collect(),
        });
    }
    for (row, (t, e)) in
        rows.iter_mut()
            .zip(survival_outcomes(&mut rng, &rates, spec.censoring_rate))
    {
        row.clinical.dmfs_years = Some(t);
        row.clinical.event = Some(e);
    }
    Ok(CohortTable {
        feature_names: spec.features.iter().map(|f| f.name.clone()).collect(),
        rows,
    })
}

/// `per_cluster` vectors around each of `n_clusters` one-hot centres (one per
/// class pair). Each vector moves a random share in `[0, noise)` of its mass
/// onto the other pairs. Returns the vectors with their planted labels.
pub fn planted_cf_clusters(
    n_clusters: usize,
    per_cluster: usize,
    noise: f64,
    seed: u64,
) -> (Vec<CfVector>, Vec<usize>) {
    assert!(
        n_clusters <= PAIR_COUNT,
        "at most {PAIR_COUNT} planted clusters"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n_clusters * per_cluster);
    let mut labels = Vec::with_capacity(n_clusters * per_cluster);
    for c in 0..n_clusters {
        for _ in 0..per_cluster {
            let delta = if noise > 0.0 {
                rng.random_range(0.0..noise)
            } else {
                0.0
            };
            let w: [f64; PAIR_COUNT] =
                std::array::from_fn(|j| if j == c { 0.0 } else { rng.random::<f64>() });
            let total: f64 = w.iter().sum();
            let h: [f64; PAIR_COUNT] = std::array::from_fn(|j| {
                if j == c {
                    1.0 - delta
                } else {
                    delta * w[j] / total
                }
            });
            data.push(CfVector::from_frequencies(h, 100).expect("valid frequencies"));
            labels.push(c);
        }
    }
    (data, labels)
}

/// Tile programs of the study fixture: (appearance label, intensities M, I, S, N).
pub const TILE_PROGRAMS: [(TissueLabel, [f64; 4]); 6] = [
    (TissueLabel::SmoothMuscle, [0.0, 0.0, 1500.0, 0.0]),
    (TissueLabel::Inflammation, [0.0, 1500.0, 0.0, 0.0]),
    (TissueLabel::Stroma, [750.0, 0.0, 750.0, 0.0]),
    (TissueLabel::Tumor, [1500.0, 0.0, 0.0, 0.0]),
    (TissueLabel::Necrosis, [0.0, 0.0, 0.0, 1500.0]),
    (TissueLabel::LooseConnective, [0.0, 600.0, 600.0, 0.0]),
];

/// Slides, truth and clinical data of a synthetic study.
#[derive(Debug, Clone)]
pub struct SyntheticStudy {
    pub slides: Vec<(CellMap, TissueLabelGrid)>,
    /// Planted program per tissue tile of each slide.
    pub programs: Vec<BTreeMap<TileAddress, usize>>,
    pub clinical: Vec<ClinicalRecord>,
}

impl SyntheticStudy {
    /// Writes `<slide>.cells.csv`, `<slide>.labels.csv` and `clinical.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (map, grid) in &self.slides {
            let p = dir.join(format!("{}.cells.csv", map.slide_id));
            let f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
            write_cell_map(map, std::io::BufWriter::new(f))?;
            let p = dir.join(format!("{}.labels.csv", grid.slide_id));
            let f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
            write_tissue_labels(grid, std::io::BufWriter::new(f))?;
        }
        let p = dir.join("clinical.csv");
        std::fs::write(&p, write_clinical(&self.clinical)).map_err(|e| Error::io(&p, e))
    }
}

/// Generates `n_slides` 800×800 µm slides whose tiles each follow one of six
/// planted programs, plus fat tiles without cells. Metastasis risk and hazard
/// rise with the slide's smooth-muscle share.
pub fn study_fixture(n_slides: usize, seed: u64) -> Result<SyntheticStudy> {
    const SIDE: f64 = 800.0;
    let t = DEFAULT_TILE_SIZE_UM;
    let per_side = (SIDE / t) as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slides = Vec::with_capacity(n_slides);
    let mut programs = Vec::with_capacity(n_slides);
    let mut clinical = Vec::with_capacity(n_slides);
    let mut rates = Vec::with_capacity(n_slides);
    for s in 0..n_slides {
        let slide_id = format!("slide_{s:03}");
        // Slide-specific program mixture so ratios vary between slides.
        let weights: Vec<f64> = (0..TILE_PROGRAMS.len())
            .map(|_| rng.random_range(0.3..1.0))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut addresses: Vec<TileAddress> = (0..per_side)
            .flat_map(|r| (0..per_side).map(move |c| TileAddress::new(r, c)))
            .collect();
        addresses.shuffle(&mut rng);
        let mut regions = Vec::new();
        let mut truth = BTreeMap::new();
        for (i, addr) in addresses.iter().enumerate() {
            let rect = Rect::new(
                addr.col as f64 * t,
                addr.row as f64 * t,
                (addr.col + 1) as f64 * t,
                (addr.row + 1) as f64 * t,
            );
            if i < 2 {
                regions.push(Region {
                    rect,
                    label: TissueLabel::Fat,
                    intensity: [0.0; 4],
                });
                continue;
            }
            let mut u = rng.random::<f64>() * total;
            let mut program = TILE_PROGRAMS.len() - 1;
            for (j, w) in weights.iter().enumerate() {
                if u < *w {
                    program = j;
                    break;
                }
                u -= w;
            }
            let (label, intensity) = TILE_PROGRAMS[program];
            regions.push(Region {
                rect,
                label,
                intensity,
            });
            truth.insert(*addr, program);
        }
        let spec = SlideSpec {
            slide_id: slide_id.clone(),
            extent: (SIDE, SIDE),
            tile_size: t,
            regions,
            seed: rng.random(),
        };
        slides.push(generate_slide(&spec)?);
        let muscle = truth.values().filter(|&&p| p == 0).count() as f64 / truth.len() as f64;
        let mut record = clinical_draw(&mut rng, slide_id, 0.0);
        record.metastasis_5yr = Some(rng.random::<f64>() < sigmoid(-1.5 + 8.0 * muscle));
        rates.push(0.15 * (6.0 * muscle).exp());
        clinical.push(record);
        programs.push(truth);
    }
    for (rec, (time, event)) in clinical
        .iter_mut()
        .zip(survival_outcomes(&mut rng, &rates, 0.3))
    {
        rec.dmfs_years = Some(time);
        rec.event = Some(event);
    }
    Ok(SyntheticStudy {
        slides,
        programs,
        clinical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn square(label: TissueLabel, intensity: [f64; 4], seed: u64) -> SlideSpec {
        SlideSpec {
            slide_id: "s".into(),
            extent: (1000.0, 1000.0),
            tile_size: 200.0,
            regions: vec![Region {
                rect: Rect::new(0.0, 0.0, 1000.0, 1000.0),
                label,
                intensity,
            }],
            seed,
        }
    }

    #[test]
    fn slides_are_deterministic() {
        let spec = square(TissueLabel::Tumor, [500.0, 200.0, 0.0, 10.0], 3);
        let a = generate_slide(&spec).unwrap();
        let b = generate_slide(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.len(), 25);
        assert_eq!(a.1.count(TissueLabel::Tumor), 25);
    }

    #[test]
    fn zero_intensity_gives_no_cells() {
        let mut spec = square(TissueLabel::Stroma, [0.0; 4], 1);
        spec.regions.push(Region {
            rect: Rect::new(0.0, 0.0, 200.0, 200.0),
            label: TissueLabel::Tumor,
            intensity: [0.0, 0.0, 800.0, 0.0],
        });
        let (map, grid) = generate_slide(&spec).unwrap();
        assert!(map.cells.iter().all(|c| c.x < 200.0 && c.y < 200.0));
        assert!(!map.cells.is_empty());
        // Both regions cover tile (0, 0) fully; the lower-ordered label wins.
        assert_eq!(grid.get(TileAddress::new(0, 0)), Some(TissueLabel::Stroma));
    }

    #[test]
    fn uncovered_tiles_are_background() {
        let spec = SlideSpec {
            slide_id: "s".into(),
            extent: (400.0, 200.0),
            tile_size: 200.0,
            regions: vec![Region {
                rect: Rect::new(0.0, 0.0, 250.0, 200.0),
                label: TissueLabel::Fat,
                intensity: [0.0; 4],
            }],
            seed: 0,
        };
        let (_, grid) = generate_slide(&spec).unwrap();
        assert_eq!(grid.get(TileAddress::new(0, 0)), Some(TissueLabel::Fat));
        assert_eq!(
            grid.get(TileAddress::new(0, 1)),
            Some(TissueLabel::Background)
        );
    }

    #[test]
    fn poisson_counts_within_tail_bound() {
        let mut inside = 0;
        for seed in 0..100 {
            let (map, _) =
                generate_slide(&square(TissueLabel::Tumor, [1000.0, 0.0, 0.0, 0.0], seed)).unwrap();
            let n = map.count(CellClass::M) as f64;
            if (n - 1000.0).abs() <= 4.0 * 1000f64.sqrt() {
                inside += 1;
            }
        }
        assert!(inside >= 99, "{inside}");
    }

    #[test]
    fn invalid_region_rejected() {
        let mut spec = square(TissueLabel::Tumor, [1.0; 4], 0);
        spec.regions[0].rect.x1 = 2000.0;
        assert!(generate_slide(&spec).is_err());
    }

    #[test]
    fn null_prevalence_matches_intercept() {
        let mut spec = CohortSpec::default_with(5000, 4);
        spec.logistic_intercept = 0.4;
        let c = generate_cohort(&spec).unwrap();
        let prev = c
            .rows
            .iter()
            .filter(|r| r.clinical.metastasis_5yr == Some(true))
            .count() as f64
            / 5000.0;
        assert_abs_diff_eq!(prev, sigmoid(0.4), epsilon = 0.03);
    }

    #[test]
    fn censoring_rate_is_achieved() {
        for &rate in &[0.1, 0.3, 0.6] {
            let mut spec = CohortSpec::default_with(2000, 7);
            spec.censoring_rate = rate;
            spec.cox_coefficients = vec![1.0, 0.5];
            let c = generate_cohort(&spec).unwrap();
            let censored = c
                .rows
                .iter()
                .filter(|r| r.clinical.event == Some(false))
                .count() as f64
                / 2000.0;
            assert!((censored - rate).abs() <= 0.05, "rate {rate}: {censored}");
        }
        let mut spec = CohortSpec::default_with(100, 1);
        spec.censoring_rate = 0.0;
        let c = generate_cohort(&spec).unwrap();
        assert!(c.rows.iter().all(|r| r.clinical.event == Some(true)));
    }

    #[test]
    fn planted_binary_hazard_recovered() {
        let spec = CohortSpec {
            n: 2000,
            features: vec![FeatureGenerator {
                name: "flag".into(),
                distribution: FeatureDistribution::Bernoulli { p: 0.5 },
            }],
            logistic_intercept: 0.0,
            logistic_coefficients: vec![0.0],
            baseline_hazard: 0.3,
            cox_coefficients: vec![2f64.ln()],
            censoring_rate: 0.25,
            missing_rate: 0.0,
            seed: 12,
        };
        let c = generate_cohort(&spec).unwrap();
        let x = nalgebra::DMatrix::from_fn(c.len(), 1, |i, _| c.rows[i].features[0].unwrap());
        let t: Vec<f64> = c
            .rows
            .iter()
            .map(|r| r.clinical.dmfs_years.unwrap())
            .collect();
        let e: Vec<bool> = c.rows.iter().map(|r| r.clinical.event.unwrap()).collect();
        let fit = crate::stats::cox_fit(&x, &t, &e, &[1.0]).unwrap();
        assert!((fit.coefficients[0] - 2f64.ln()).abs() < 0.15);
    }

    #[test]
    fn planted_clusters_shape() {
        let (data, labels) = planted_cf_clusters(3, 4, 0.2, 1);
        assert_eq!(data.len(), 12);
        assert_eq!(labels, vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]);
        for (v, &l) in data.iter().zip(&labels) {
            assert_abs_diff_eq!(v.h.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(v.h[l] > 0.8);
        }
    }

    #[test]
    fn study_fixture_is_deterministic() {
        let a = study_fixture(3, 5).unwrap();
        let b = study_fixture(3, 5).unwrap();
        assert_eq!(a.slides, b.slides);
        assert_eq!(a.clinical, b.clinical);
        assert_eq!(a.programs[0].len(), 14);
    }
}
