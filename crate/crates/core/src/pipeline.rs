//! End-to-end orchestration with persisted, re-loadable stage outputs.
//!
//! Every stage reads its inputs from the input directory and from earlier
//! stage outputs inside the output directory, so running stages one by one
//! writes exactly the same bytes as [`run_pipeline`].
//!
//! Layout of an output directory:
//!
//! ```text
//! cf/<slide>.csv        per-tile CF vectors
//! model.json            fitted phenotype medoids
//! k_selection.json      k scan (only when k is not fixed)
//! assignments.csv       phenotype of every profiled tile
//! features.csv          slide-level features
//! report.json           statistical analysis (with stats enabled)
//! km/<feature>.csv|svg  Kaplan-Meier curves of the optimal split
//! manifest.json         seed, config hash, version and output hashes
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cellgraph::{parse_cf_csv, tile_profile, write_cf_csv, CfVector};
use crate::cellmap::{
    load_cell_map, load_tissue_labels, tile_cells, TileAddress, DEFAULT_TILE_SIZE_UM,
};
use crate::error::{Error, Result, ResultExt};
use crate::features::{tissue_tiles, FeatureTable, SlideFeatures};
use crate::phenotype::{
    kmedoids, parse_assignments_csv, select_k, write_assignments_csv, KSelectionReport, ModelFile,
    SlideGrouping, TileAssignment, DEFAULT_K_RANGE, DEFAULT_RESTARTS,
};
use crate::stats::cohort::{load_clinical, CohortTable};
use crate::stats::report::{
    analyze, AnalysisOptions, AnalysisReport, DEFAULT_BOOTSTRAP_REPLICATES,
};
use crate::stats::survival::km_svg;

const CELLS_SUFFIX: &str = ".cells.csv";
const LABELS_SUFFIX: &str = ".labels.csv";
const MANIFEST: &str = "manifest.json";

/// Largest k the phenotype scan accepts.
pub const MAX_K: usize = 12;

/// Effective settings of a run. `threads` and `out` only affect where and how
/// fast results are produced, so they are left out of the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Directory with `<slide>.cells.csv` and `<slide>.labels.csv` pairs.
    pub input: PathBuf,
    pub clinical: Option<PathBuf>,
    pub stats: bool,
    pub tile_size: f64,
    /// Fixed number of phenotypes; `k_range` is scanned when absent.
    pub k: Option<usize>,
    pub k_range: (usize, usize),
    pub restarts: usize,
    pub seed: u64,
    /// Morisita quadrat side; the tile size when absent.
    pub quadrat_size: Option<f64>,
    pub bootstrap_replicates: usize,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: PathBuf::from("."),
            clinical: None,
            stats: false,
            tile_size: DEFAULT_TILE_SIZE_UM,
            k: None,
            k_range: (*DEFAULT_K_RANGE.start(), *DEFAULT_K_RANGE.end()),
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            quadrat_size: None,
            bootstrap_replicates: DEFAULT_BOOTSTRAP_REPLICATES,
            threads: None,
            out: PathBuf::from("out"),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

/// Parses `a-b`, `a..b` or `a..=b`.
pub fn parse_k_range(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .or_else(|| s.split_once('-'))
        .ok_or_else(|| Error::Config(format!("k range {s:?} is not of the form a-b")))?;
    Ok((
        parse_value("k_range", a.trim())?,
        parse_value("k_range", b.trim())?,
    ))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid value {value:?} for {key}"))),
    }
}

impl RunConfig {
    /// Sets one `key = value` setting. Relative paths are resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        match key {
            "input" => self.input = path(value),
            "clinical" => self.clinical = Some(path(value)),
            "out" => self.out = path(value),
            "stats" => self.stats = parse_bool(key, value)?,
            "tile_size" => self.tile_size = parse_value(key, value)?,
            "k" => self.k = Some(parse_value(key, value)?),
            "k_range" => self.k_range = parse_k_range(value)?,
            "restarts" => self.restarts = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "threads" => self.threads = Some(parse_value(key, value)?),
            "quadrat_size" => self.quadrat_size = Some(parse_value(key, value)?),
            "bootstrap_replicates" => self.bootstrap_replicates = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Applies a plain `key = value` file; blank lines and `#` comments are ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                source_name: path.display().to_string(),
                line: i + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim(), base)
                .context_with(|| format!("{}:{}", path.display(), i + 1))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_file(path)?;
        Ok(c)
    }

    pub fn k_range(&self) -> RangeInclusive<usize> {
        self.k_range.0..=self.k_range.1
    }

    pub fn quadrat(&self) -> f64 {
        self.quadrat_size.unwrap_or(self.tile_size)
    }

    /// Seed of the statistics stage, derived from the root seed.
    pub fn stats_seed(&self) -> u64 {
        self.seed.wrapping_add(0x5eed_0000_0000)
    }

    /// Checks parameter ranges and that inputs exist. Cheap; runs before any compute.
    pub fn validate(&self) -> Result<()> {
        if !(self.tile_size.is_finite() && self.tile_size > 0.0) {
            return Err(Error::Config(format!(
                "tile_size must be positive, got {}",
                self.tile_size
            )));
        }
        if !(self.quadrat().is_finite() && self.quadrat() > 0.0) {
            return Err(Error::Config("quadrat_size must be positive".into()));
        }
        if let Some(k) = self.k {
            if !(2..=MAX_K).contains(&k) {
                return Err(Error::Config(format!("k must lie in 2..={MAX_K}, got {k}")));
            }
        }
        let (a, b) = self.k_range;
        if a < 2 || b > MAX_K || a > b {
            return Err(Error::Config(format!(
                "k range must lie within 2..={MAX_K}, got {a}..={b}"
            )));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if !self.input.is_dir() {
            return Err(Error::Config(format!(
                "input directory {} does not exist",
                self.input.display()
            )));
        }
        if self.stats {
            match &self.clinical {
                None => {
                    return Err(Error::Config(
                        "stats requested but no clinical file given".into(),
                    ))
                }
                Some(p) if !p.is_file() => {
                    return Err(Error::Config(format!(
                        "clinical file {} does not exist",
                        p.display()
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form of the result-relevant settings.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// Runs `f` on a pool with the configured number of threads.
pub fn with_pool<T: Send>(config: &RunConfig, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.threads {
        b = b.num_threads(n);
    }
    let pool = b
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Slide ids with a cell map in `input`, sorted.
pub fn discover_slides(input: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(input).map_err(|e| Error::io(input, e))? {
        let entry = entry.map_err(|e| Error::io(input, e))?;
        if let Some(id) = entry
            .file_name()
            .to_str()
            .and_then(|n| n.strip_suffix(CELLS_SUFFIX))
        {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    if ids.is_empty() {
        return Err(Error::Config(format!(
            "no *{CELLS_SUFFIX} files in {}",
            input.display()
        )));
    }
    Ok(ids)
}

fn cells_path(input: &Path, id: &str) -> PathBuf {
    input.join(format!("{id}{CELLS_SUFFIX}"))
}

fn labels_path(input: &Path, id: &str) -> PathBuf {
    input.join(format!("{id}{LABELS_SUFFIX}"))
}

/// Writes through a temporary sibling and renames, so readers never see half a file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    std::io::Write::write_all(&mut tmp, bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

/// Tiles every slide and writes `cf/<slide>.csv` for tiles with a cell network.
pub fn stage_tile(config: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let ids = discover_slides(&config.input)?;
    let files: Vec<(String, Vec<u8>)> = ids
        .par_iter()
        .map(|id| {
            let map = load_cell_map(&cells_path(&config.input, id))?;
            let tiles = tile_cells(&map, config.tile_size)?;
            let rows: Vec<(TileAddress, CfVector)> = tiles
                .tiles
                .iter()
                .filter_map(|t| tile_profile(t).map(|(_, cf)| (t.address, cf)))
                .collect();
            let mut buf = Vec::new();
            write_cf_csv(&rows, &mut buf)?;
            Ok((id.clone(), buf))
        })
        .map(|r: Result<_>| r)
        .collect::<Vec<_>>()
        .into_iter()
        .zip(&ids)
        .map(|(r, id)| r.context_with(|| format!("slide {id}")))
        .collect::<Result<_>>()?;
    for (id, bytes) in files {
        write_atomic(&out.join("cf").join(format!("{id}.csv")), &bytes)?;
    }
    Ok(ids)
}

/// Outcome of the phenotype stage.
#[derive(Debug, Clone)]
pub struct PhenotypeOutcome {
    pub k: usize,
    pub selection: Option<KSelectionReport>,
    pub assignments: Vec<TileAssignment>,
}

/// Pools the CF vectors of all slides, picks k (or uses the fixed one) and
/// writes `model.json`, `assignments.csv` and, when scanning, `k_selection.json`.
pub fn stage_phenotype(config: &RunConfig, out: &Path) -> Result<PhenotypeOutcome> {
    let ids = discover_slides(&config.input)?;
    let mut data = Vec::new();
    let mut origin = Vec::new();
    let mut grouping = SlideGrouping {
        slide_of: Vec::new(),
        in_tissue: Vec::new(),
        denominators: Vec::with_capacity(ids.len()),
    };
    for (s, id) in ids.iter().enumerate() {
        let grid = load_tissue_labels(&labels_path(&config.input, id))
            .context_with(|| format!("slide {id}"))?;
        let tissue = tissue_tiles(&grid);
        let path = out.join("cf").join(format!("{id}.csv"));
        let rows = parse_cf_csv(&read(&path)?, &path.display().to_string())?;
        for (addr, cf) in rows {
            grouping.slide_of.push(s);
            grouping.in_tissue.push(tissue.contains(&addr));
            origin.push((s, addr));
            data.push(cf);
        }
        grouping.denominators.push(tissue.len());
    }
    if data.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }

    let (model, selection) = match config.k {
        Some(k) => (kmedoids(&data, k, config.restarts, config.seed)?, None),
        None => {
            let (report, models) = select_k(
                &data,
                &grouping,
                config.k_range(),
                config.restarts,
                config.seed,
            )?;
            let chosen = models
                .into_iter()
                .find(|m| m.k == report.chosen_k)
                .ok_or_else(|| Error::Estimation("chosen k has no fitted model".into()))?;
            (chosen, Some(report))
        }
    };

    let mut assignments: Vec<TileAssignment> = origin
        .iter()
        .zip(&model.assignments)
        .map(|(&(s, addr), &p)| TileAssignment {
            slide_id: ids[s].clone(),
            tile_row: addr.row,
            tile_col: addr.col,
            phenotype: p,
        })
        .collect();
    assignments.sort();

    write_atomic(
        &out.join("model.json"),
        &json_bytes(&ModelFile::from_model(&model))?,
    )?;
    let mut buf = Vec::new();
    write_assignments_csv(&assignments, &mut buf)?;
    write_atomic(&out.join("assignments.csv"), &buf)?;
    if let Some(report) = &selection {
        write_atomic(&out.join("k_selection.json"), &json_bytes(report)?)?;
    }
    Ok(PhenotypeOutcome {
        k: model.k,
        selection,
        assignments,
    })
}

fn load_model(out: &Path) -> Result<ModelFile> {
    let path = out.join("model.json");
    serde_json::from_str(&read(&path)?).map_err(|e| Error::Parse {
        source_name: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Computes slide features from cell maps, labels and tile assignments; writes `features.csv`.
pub fn stage_features(config: &RunConfig, out: &Path) -> Result<FeatureTable> {
    let ids = discover_slides(&config.input)?;
    let k = load_model(out)?.k;
    let path = out.join("assignments.csv");
    let rows = parse_assignments_csv(&read(&path)?, &path.display().to_string())?;
    let mut by_slide: BTreeMap<String, BTreeMap<TileAddress, usize>> = BTreeMap::new();
    for r in rows {
        if r.phenotype >= k {
            return Err(Error::Validation(format!(
                "{}: phenotype {} out of range for k = {k}",
                r.slide_id, r.phenotype
            )));
        }
        by_slide
            .entry(r.slide_id.clone())
            .or_default()
            .insert(r.address(), r.phenotype);
    }
    let empty = BTreeMap::new();
    let slides: Vec<SlideFeatures> = ids
        .par_iter()
        .map(|id| {
            let map = load_cell_map(&cells_path(&config.input, id))?;
            let grid = load_tissue_labels(&labels_path(&config.input, id))?;
            let assigned = by_slide.get(id).unwrap_or(&empty);
            SlideFeatures::compute(&map, &grid, assigned, k, config.quadrat())
                .context_with(|| format!("slide {id}"))
        })
        .collect::<Result<_>>()?;
    let table = FeatureTable::from_slides(&slides, k);
    write_atomic(&out.join("features.csv"), table.to_csv().as_bytes())?;
    Ok(table)
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Joins features with the clinical table and writes `report.json` and `km/`.
pub fn stage_analyze(config: &RunConfig, out: &Path) -> Result<AnalysisReport> {
    let clinical_path = config
        .clinical
        .as_deref()
        .ok_or_else(|| Error::Config("analysis needs a clinical file".into()))?;
    let features = FeatureTable::load(&out.join("features.csv"))?;
    let clinical = load_clinical(clinical_path)?;
    let cohort = CohortTable::join(&features, &clinical)?;
    let options = AnalysisOptions {
        bootstrap_replicates: config.bootstrap_replicates,
        seed: config.stats_seed(),
        features: None,
    };
    let report = analyze(&cohort, &options)?;
    write_atomic(&out.join("report.json"), &json_bytes(&report)?)?;
    for f in &report.features {
        let Some(cut) = f.cutoff.as_ref().and_then(|c| c.ok()) else {
            continue;
        };
        let stem = file_stem(&f.name);
        let km = out.join("km");
        write_atomic(
            &km.join(format!("{stem}_low.csv")),
            cut.low.to_csv().as_bytes(),
        )?;
        write_atomic(
            &km.join(format!("{stem}_high.csv")),
            cut.high.to_csv().as_bytes(),
        )?;
        let low = format!("≤ {:.4}", cut.cutoff);
        let high = format!("> {:.4}", cut.cutoff);
        let svg = km_svg(&f.name, &[(&low, &cut.low), (&high, &cut.high)]);
        write_atomic(&km.join(format!("{stem}.svg")), svg.as_bytes())?;
    }
    Ok(report)
}

/// Provenance record of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub library_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    pub chosen_k: usize,
    /// SHA-256 of every other file in the output directory, by relative path.
    pub outputs: BTreeMap<String, String>,
}

fn hash_tree(root: &Path, dir: &Path, into: &mut BTreeMap<String, String>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            hash_tree(root, &path, into)?;
            continue;
        }
        let rel = path.strip_prefix(root).expect("inside root");
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if rel == MANIFEST {
            continue;
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        into.insert(rel, hex::encode(Sha256::digest(bytes)));
    }
    Ok(())
}

/// Writes `manifest.json` describing the outputs currently in `out`.
pub fn write_manifest(config: &RunConfig, out: &Path, chosen_k: usize) -> Result<Manifest> {
    let mut outputs = BTreeMap::new();
    hash_tree(out, out, &mut outputs)?;
    let manifest = Manifest {
        library_version: crate::VERSION.to_string(),
        seed: config.seed,
        config_hash: config.hash(),
        config: config.clone(),
        chosen_k,
        outputs,
    };
    write_atomic(&out.join(MANIFEST), &json_bytes(&manifest)?)?;
    Ok(manifest)
}

/// Runs every stage into a staging directory next to `config.out` and moves
/// it into place only when all stages succeed.
pub fn run_pipeline(config: &RunConfig) -> Result<Manifest> {
    config.validate()?;
    let parent = match config.out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let staging = tempfile::Builder::new()
        .prefix(".histophenotype-")
        .tempdir_in(&parent)
        .map_err(|e| Error::io(&parent, e))?;
    let dir = staging.path();

    let manifest = with_pool(config, || -> Result<Manifest> {
        stage_tile(config, dir).context_with(|| "tile stage".into())?;
        let ph = stage_phenotype(config, dir).context_with(|| "phenotype stage".into())?;
        stage_features(config, dir).context_with(|| "features stage".into())?;
        if config.stats {
            stage_analyze(config, dir).context_with(|| "analysis stage".into())?;
        }
        write_manifest(config, dir, ph.k)
    })??;

    let target = &config.out;
    if target.exists() {
        let old = parent.join(format!(
            ".histophenotype-old-{}",
            target.file_name().and_then(|n| n.to_str()).unwrap_or("out")
        ));
        if old.exists() {
            fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
        }
        fs::rename(target, &old).map_err(|e| Error::io(target, e))?;
        fs::rename(staging.path(), target).map_err(|e| Error::io(target, e))?;
        fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    } else {
        fs::rename(staging.path(), target).map_err(|e| Error::io(target, e))?;
    }
    Ok(manifest)
}

/// Short human summary of a manifest.
pub fn summarize(manifest: &Manifest) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "chosen k: {}", manifest.chosen_k);
    let _ = writeln!(s, "seed: {}", manifest.seed);
    let _ = writeln!(s, "config hash: {}", manifest.config_hash);
    let _ = write!(s, "{} output files", manifest.outputs.len());
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::study_fixture;

    fn fixture_config(dir: &Path, n: usize) -> RunConfig {
        let study = study_fixture(n, 3).unwrap();
        let input = dir.join("in");
        study.write_to(&input).unwrap();
        RunConfig {
            input: input.clone(),
            clinical: Some(input.join("clinical.csv")),
            k_range: (2, 7),
            restarts: 8,
            bootstrap_replicates: 10,
            out: dir.join("out"),
            ..RunConfig::default()
        }
    }

    #[test]
    fn config_file_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        fs::write(
            &p,
            "# comment\ninput = slides\nk_range = 3-6\nseed = 42 # trailing\nstats = yes\nthreads=2\n",
        )
        .unwrap();
        let c = RunConfig::from_file(&p).unwrap();
        assert_eq!(c.input, dir.path().join("slides"));
        assert_eq!(c.k_range, (3, 6));
        assert_eq!(c.seed, 42);
        assert!(c.stats);
        assert_eq!(c.threads, Some(2));
        assert_eq!(c.restarts, DEFAULT_RESTARTS);
        assert_eq!(c.tile_size, 200.0);
    }

    #[test]
    fn bad_config_lines_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        fs::write(&p, "colour = blue\n").unwrap();
        assert!(matches!(
            RunConfig::from_file(&p).unwrap_err().root(),
            Error::Config(_)
        ));
        fs::write(&p, "seed 4\n").unwrap();
        assert!(matches!(
            RunConfig::from_file(&p),
            Err(Error::Parse { line: 1, .. })
        ));
        assert_eq!(parse_k_range("2..=9").unwrap(), (2, 9));
        assert_eq!(parse_k_range("2..9").unwrap(), (2, 9));
    }

    #[test]
    fn hash_ignores_threads_and_out() {
        let a = RunConfig::default();
        let b = RunConfig {
            threads: Some(7),
            out: "elsewhere".into(),
            ..a.clone()
        };
        let c = RunConfig {
            seed: 1,
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn stats_without_clinical_fails_before_compute() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = fixture_config(dir.path(), 3);
        c.stats = true;
        c.clinical = Some(dir.path().join("missing.csv"));
        let err = run_pipeline(&c).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(!c.out.exists());
        c.clinical = None;
        assert!(matches!(run_pipeline(&c), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_parameters_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let base = RunConfig {
            input: dir.path().into(),
            ..RunConfig::default()
        };
        for bad in [
            RunConfig {
                tile_size: 0.0,
                ..base.clone()
            },
            RunConfig {
                k: Some(1),
                ..base.clone()
            },
            RunConfig {
                k_range: (5, 3),
                ..base.clone()
            },
            RunConfig {
                k_range: (2, 13),
                ..base.clone()
            },
            RunConfig {
                restarts: 0,
                ..base.clone()
            },
            RunConfig {
                threads: Some(0),
                ..base.clone()
            },
            RunConfig {
                input: dir.path().join("nope"),
                ..base.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
        assert!(base.validate().is_ok());
    }

    #[test]
    fn failed_run_leaves_previous_output_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let c = fixture_config(dir.path(), 3);
        fs::create_dir_all(&c.out).unwrap();
        fs::write(c.out.join("keep.txt"), "old").unwrap();
        // A cell map without its labels fails in the phenotype stage.
        fs::remove_file(c.input.join("slide_001.labels.csv")).unwrap();
        let err = run_pipeline(&c).unwrap_err();
        assert!(err.to_string().contains("slide_001"), "{err}");
        assert_eq!(fs::read_to_string(c.out.join("keep.txt")).unwrap(), "old");
        let leftovers = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .file_name()
                    .to_string_lossy()
                    .starts_with('.')
            })
            .count();
        assert_eq!(leftovers, 0);
    }

    #[test]
    fn stages_match_single_shot_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = fixture_config(dir.path(), 6);
        c.stats = true;
        c.k = Some(4);
        let m = run_pipeline(&c).unwrap();
        assert_eq!(m.chosen_k, 4);
        assert!(c.out.join("report.json").is_file());

        let staged = dir.path().join("staged");
        stage_tile(&c, &staged).unwrap();
        stage_phenotype(&c, &staged).unwrap();
        stage_features(&c, &staged).unwrap();
        stage_analyze(&c, &staged).unwrap();
        let m2 = write_manifest(&c, &staged, 4).unwrap();
        assert_eq!(m, m2);
        assert_eq!(
            fs::read(c.out.join(MANIFEST)).unwrap(),
            fs::read(staged.join(MANIFEST)).unwrap()
        );
    }
}
