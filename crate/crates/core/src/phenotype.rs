//! Phenotype discovery: k-medoids over CF vectors under the chi-squared distance.
//!
//! Each run draws `k` distinct random medoids and then alternates nearest-medoid
//! assignment with an in-cluster medoid update until nothing changes (or 300
//! iterations pass). The best of `restarts` independent runs by total cost is kept.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::RangeInclusive;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cellgraph::{chi2, CfVector, PAIR_COUNT};
use crate::cellmap::TileAddress;
use crate::error::{Error, Result};
use crate::stats::spearman;

pub const DEFAULT_RESTARTS: usize = 100;
pub const MAX_ITERATIONS: usize = 300;
/// Medoid pairs closer than this are considered the same phenotype.
pub const MIN_MEDOID_DISTANCE: f64 = 0.2;
/// Ratio features correlated beyond this (in |ρ|) are considered redundant.
pub const MAX_FEATURE_CORRELATION: f64 = 0.8;
pub const DEFAULT_K_RANGE: RangeInclusive<usize> = 2..=10;

/// Largest data set for which the pairwise distance matrix is cached.
const MATRIX_LIMIT: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeModel {
    pub k: usize,
    pub medoids: Vec<CfVector>,
    /// Position of each medoid in the clustered data.
    pub medoid_indices: Vec<usize>,
    /// Phenotype of each input vector, aligned with the clustered data.
    pub assignments: Vec<usize>,
    pub total_cost: f64,
    pub seed: u64,
    pub restarts: usize,
    /// Restart that produced this model.
    pub best_restart: usize,
}

impl PhenotypeModel {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Smallest chi-squared distance between two distinct medoids.
    pub fn min_medoid_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.medoids.len() {
            for j in i + 1..self.medoids.len() {
                best = best.min(chi2(&self.medoids[i].h, &self.medoids[j].h));
            }
        }
        best
    }
}

enum Distances<'a> {
    Matrix { n: usize, d: Vec<f64> },
    Direct(&'a [CfVector]),
}

impl<'a> Distances<'a> {
    fn new(data: &'a [CfVector]) -> Self {
        let n = data.len();
        if n > MATRIX_LIMIT {
            return Distances::Direct(data);
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| chi2(&data[i].h, &data[j].h)).collect())
            .collect();
        Distances::Matrix {
            n,
            d: rows.concat(),
        }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Distances::Matrix { n, d } => d[i * n + j],
            Distances::Direct(data) => chi2(&data[i].h, &data[j].h),
        }
    }

    fn len(&self) -> usize {
        match self {
            Distances::Matrix { n, .. } => *n,
            Distances::Direct(data) => data.len(),
        }
    }
}

#[derive(Debug, Clone)]
struct RunResult {
    medoids: Vec<usize>,
    labels: Vec<usize>,
    cost: f64,
    /// Total cost after every assignment step.
    #[cfg_attr(not(test), allow(dead_code))]
    history: Vec<f64>,
}

/// Nearest medoid of point `i` (ties to the lowest medoid slot) and its distance.
fn nearest(dist: &Distances, medoids: &[usize], i: usize) -> (usize, f64) {
    let mut best = (0, dist.get(i, medoids[0]));
    for (slot, &m) in medoids.iter().enumerate().skip(1) {
        let d = dist.get(i, m);
        if d < best.1 {
            best = (slot, d);
        }
    }
    best
}

fn assign_all(dist: &Distances, medoids: &[usize], labels: &mut [usize]) -> f64 {
    let mut cost = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        let (slot, d) = nearest(dist, medoids, i);
        *label = slot;
        cost += d;
    }
    cost
}

fn run_once(dist: &Distances, k: usize, rng: &mut ChaCha8Rng) -> RunResult {
    let n = dist.len();
    let mut medoids: Vec<usize> = rand::seq::index::sample(rng, n, k).into_vec();
    let mut labels = vec![0usize; n];
    let mut history = Vec::new();
    let mut cost = f64::INFINITY;
    let mut converged = false;

    for _ in 0..MAX_ITERATIONS {
        cost = assign_all(dist, &medoids, &mut labels);

        // Reseed medoids that lost all members at the point worst served by its medoid.
        for _ in 0..k {
            let mut sizes = vec![0usize; k];
            for &l in &labels {
                sizes[l] += 1;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                break;
            };
            let far = (0..n)
                .filter(|i| !medoids.contains(i))
                .map(|i| (i, nearest(dist, &medoids, i).1))
                .fold(None, |acc: Option<(usize, f64)>, (i, d)| match acc {
                    Some((_, bd)) if bd >= d => acc,
                    _ => Some((i, d)),
                });
            let Some((far, _)) = far else { break };
            medoids[empty] = far;
            cost = assign_all(dist, &medoids, &mut labels);
        }
        history.push(cost);

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        let mut changed = false;
        for (slot, group) in members.iter().enumerate() {
            if group.is_empty() {
                continue;
            }
            let within = |c: usize| group.iter().map(|&j| dist.get(c, j)).sum::<f64>();
            let current = medoids[slot];
            let mut best = (current, within(current));
            for &c in group {
                if c == current {
                    continue;
                }
                let s = within(c);
                if s < best.1 {
                    best = (c, s);
                }
            }
            if best.0 != current {
                medoids[slot] = best.0;
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    if !converged {
        cost = assign_all(dist, &medoids, &mut labels);
        history.push(cost);
    }
    RunResult {
        medoids,
        labels,
        cost,
        history,
    }
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

fn fit(data: &[CfVector], k: usize, restarts: usize, seed: u64) -> Result<PhenotypeModel> {
    if data.len() < k {
        return Err(Error::InsufficientData {
            needed: k,
            got: data.len(),
        });
    }
    if restarts == 0 {
        return Err(Error::Validation("restarts must be at least 1".into()));
    }
    if let Some(i) = data.iter().position(|v| !v.has_edges()) {
        return Err(Error::Validation(format!(
            "vector {i} has no edges and cannot be clustered"
        )));
    }
    let dist = Distances::new(data);
    let runs: Vec<RunResult> = (0..restarts)
        .into_par_iter()
        .map(|r| run_once(&dist, k, &mut restart_rng(seed, r)))
        .collect();
    let (best_restart, best) = runs
        .iter()
        .enumerate()
        .fold(
            None,
            |acc: Option<(usize, &RunResult)>, (r, run)| match acc {
                Some((_, b)) if b.cost <= run.cost => acc,
                _ => Some((r, run)),
            },
        )
        .expect("at least one restart");
    Ok(PhenotypeModel {
        k,
        medoids: best.medoids.iter().map(|&i| data[i]).collect(),
        medoid_indices: best.medoids.clone(),
        assignments: best.labels.clone(),
        total_cost: best.cost,
        seed,
        restarts,
        best_restart,
    })
}

/// Best-of-`restarts` k-medoids clustering of CF vectors; deterministic given `seed`.
pub fn kmedoids(data: &[CfVector], k: usize, restarts: usize, seed: u64) -> Result<PhenotypeModel> {
    if k < 2 {
        return Err(Error::Validation(format!("k must be at least 2, got {k}")));
    }
    fit(data, k, restarts, seed)
}

/// Nearest medoid under the chi-squared distance, ties to the lowest index.
pub fn assign(model: &PhenotypeModel, h: &CfVector) -> Result<usize> {
    if !h.has_edges() || h.h.iter().all(|&v| v == 0.0) {
        return Err(Error::NotAssignable);
    }
    let mut best = (0, f64::INFINITY);
    for (i, m) in model.medoids.iter().enumerate() {
        let d = chi2(&h.h, &m.h);
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

/// Which slide each clustered vector belongs to, and how ratios are normalized per slide.
#[derive(Debug, Clone)]
pub struct SlideGrouping {
    /// Slide index of each data vector.
    pub slide_of: Vec<usize>,
    /// Whether a vector's tile counts towards its slide's phenotype ratios.
    pub in_tissue: Vec<bool>,
    /// Ratio denominator per slide (tissue tiles, including unphenotyped ones).
    pub denominators: Vec<usize>,
}

impl SlideGrouping {
    /// Every vector counts and each slide's denominator is its number of vectors.
    pub fn uniform(slide_of: Vec<usize>) -> Self {
        let n_slides = slide_of.iter().max().map_or(0, |m| m + 1);
        let mut denominators = vec![0; n_slides];
        for &s in &slide_of {
            denominators[s] += 1;
        }
        SlideGrouping {
            in_tissue: vec![true; slide_of.len()],
            slide_of,
            denominators,
        }
    }

    pub fn slide_count(&self) -> usize {
        self.denominators.len()
    }

    /// Per-slide phenotype ratios (`slides × k`); `None` where a slide has no tissue.
    pub fn ratios(&self, assignments: &[usize], k: usize) -> Vec<Option<Vec<f64>>> {
        let mut counts = vec![vec![0usize; k]; self.slide_count()];
        for ((&s, &a), &t) in self.slide_of.iter().zip(assignments).zip(&self.in_tissue) {
            if t {
                counts[s][a] += 1;
            }
        }
        counts
            .into_iter()
            .zip(&self.denominators)
            .map(|(c, &den)| (den > 0).then(|| c.iter().map(|&x| x as f64 / den as f64).collect()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionRow {
    pub k: usize,
    pub min_medoid_distance: f64,
    /// Largest |ρ| over pairs of ratio features with defined correlation.
    pub max_abs_spearman: f64,
    /// Feature pairs skipped because one feature was constant across slides.
    pub undefined_pairs: usize,
    pub total_cost: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionReport {
    pub rows: Vec<KSelectionRow>,
    pub chosen_k: usize,
    pub distance_threshold: f64,
    pub correlation_threshold: f64,
    /// Set when no candidate met both criteria and the fallback rule picked `chosen_k`.
    pub fallback: bool,
}

fn max_abs_spearman(ratios: &[Option<Vec<f64>>], k: usize) -> (f64, usize) {
    let rows: Vec<&Vec<f64>> = ratios.iter().flatten().collect();
    let mut worst = 0.0f64;
    let mut undefined = 0;
    for p in 0..k {
        for q in p + 1..k {
            let xs: Vec<f64> = rows.iter().map(|r| r[p]).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r[q]).collect();
            match spearman(&xs, &ys) {
                Ok(rho) => worst = worst.max(rho.abs()),
                Err(_) => undefined += 1,
            }
        }
    }
    (worst, undefined)
}

/// Fits every k in `k_range` and picks the largest k whose medoids stay at least
/// [`MIN_MEDOID_DISTANCE`] apart and whose slide-level ratio features stay at most
/// [`MAX_FEATURE_CORRELATION`] correlated. Returns the report and the fitted models.
pub fn select_k(
    data: &[CfVector],
    slides: &SlideGrouping,
    k_range: RangeInclusive<usize>,
    restarts: usize,
    seed: u64,
) -> Result<(KSelectionReport, Vec<PhenotypeModel>)> {
    if data.is_empty() {
        return Err(Error::Validation("no CF vectors to cluster".into()));
    }
    if *k_range.start() < 2 || *k_range.end() > 12 || k_range.is_empty() {
        return Err(Error::Validation(format!(
            "k range {}..={} must lie within 2..=12",
            k_range.start(),
            k_range.end()
        )));
    }
    if slides.slide_of.len() != data.len() || slides.in_tissue.len() != data.len() {
        return Err(Error::Validation(
            "slide grouping does not match the data length".into(),
        ));
    }
    if slides.slide_count() < 2 {
        return Err(Error::Validation(
            "selecting k needs at least two slides".into(),
        ));
    }

    let mut rows = Vec::new();
    let mut models = Vec::new();
    for k in k_range {
        let model = kmedoids(data, k, restarts, seed)?;
        let min_d = model.min_medoid_distance();
        let ratios = slides.ratios(&model.assignments, k);
        let (max_rho, undefined) = max_abs_spearman(&ratios, k);
        rows.push(KSelectionRow {
            k,
            min_medoid_distance: min_d,
            max_abs_spearman: max_rho,
            undefined_pairs: undefined,
            total_cost: model.total_cost,
            passes: min_d >= MIN_MEDOID_DISTANCE && max_rho <= MAX_FEATURE_CORRELATION,
        });
        models.push(model);
    }
    let passing = rows.iter().filter(|r| r.passes).map(|r| r.k).max();
    let (chosen_k, fallback) = match passing {
        Some(k) => (k, false),
        None => {
            let best = rows
                .iter()
                .fold(None, |acc: Option<&KSelectionRow>, r| match acc {
                    Some(b) if b.min_medoid_distance >= r.min_medoid_distance => acc,
                    _ => Some(r),
                })
                .expect("non-empty k range");
            log::warn!(
                "no k satisfies both phenotype criteria; falling back to k = {} (largest medoid separation)",
                best.k
            );
            (best.k, true)
        }
    };
    Ok((
        KSelectionReport {
            rows,
            chosen_k,
            distance_threshold: MIN_MEDOID_DISTANCE,
            correlation_threshold: MAX_FEATURE_CORRELATION,
            fallback,
        },
        models,
    ))
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let n = a.len();
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(n);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// On-disk form of a fitted model (assignments are exported separately).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub library_version: String,
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub distance_threshold: f64,
    pub correlation_threshold: f64,
    pub total_cost: f64,
    pub medoids: Vec<[f64; PAIR_COUNT]>,
    pub medoid_edge_counts: Vec<usize>,
}

impl ModelFile {
    pub fn from_model(model: &PhenotypeModel) -> Self {
        ModelFile {
            library_version: crate::VERSION.to_string(),
            k: model.k,
            seed: model.seed,
            restarts: model.restarts,
            distance_threshold: MIN_MEDOID_DISTANCE,
            correlation_threshold: MAX_FEATURE_CORRELATION,
            total_cost: model.total_cost,
            medoids: model.medoids.iter().map(|m| m.h).collect(),
            medoid_edge_counts: model.medoids.iter().map(|m| m.edge_count).collect(),
        }
    }

    /// Model usable for [`assign`]; carries no training assignments.
    pub fn to_model(&self) -> Result<PhenotypeModel> {
        if self.medoids.len() != self.k || self.medoid_edge_counts.len() != self.k {
            return Err(Error::Validation(format!(
                "model declares k = {} but stores {} medoids",
                self.k,
                self.medoids.len()
            )));
        }
        let medoids = self
            .medoids
            .iter()
            .zip(&self.medoid_edge_counts)
            .map(|(h, &e)| CfVector::from_frequencies(*h, e))
            .collect::<Result<Vec<_>>>()?;
        Ok(PhenotypeModel {
            k: self.k,
            medoids,
            medoid_indices: Vec::new(),
            assignments: Vec::new(),
            total_cost: self.total_cost,
            seed: self.seed,
            restarts: self.restarts,
            best_restart: 0,
        })
    }
}

/// One row of the tile assignment export.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileAssignment {
    pub slide_id: String,
    pub tile_row: u32,
    pub tile_col: u32,
    pub phenotype: usize,
}

impl TileAssignment {
    pub fn address(&self) -> TileAddress {
        TileAddress::new(self.tile_row, self.tile_col)
    }
}

pub fn write_assignments_csv<W: Write>(rows: &[TileAssignment], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Validation(format!("writing assignments: {e}")))?;
    }
    w.flush().map_err(|e| Error::io("<assignments csv>", e))?;
    Ok(())
}

pub fn parse_assignments_csv(text: &str, source_name: &str) -> Result<Vec<TileAssignment>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    r.deserialize()
        .map(|rec| {
            rec.map_err(|e: csv::Error| Error::Parse {
                source_name: source_name.into(),
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })
        })
        .collect()
}
