//! Acceptance criteria, one line each. Runs without the libtest harness so the
//! pass/fail lines always reach the terminal.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use histophenotype::cellgraph::{
    chi_squared_distance, connection_frequency, delaunay, pair_label, tile_network, CfVector,
    PAIR_COUNT,
};
use histophenotype::cellmap::{CellClass, CellRecord, Tile, TileAddress};
use histophenotype::phenotype::{adjusted_rand_index, kmedoids, select_k, SlideGrouping};
use histophenotype::stats::{
    altman_adjust, cox, cox_fit, kaplan_meier, logistic, logistic_fit, logrank,
    optimal_cutoff_stratify,
};
use histophenotype::synth::{planted_cf_clusters, study_fixture};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed < Duration::from_secs(limit_s), || {
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

// 1 -------------------------------------------------------------------------

fn orient_i(a: [i64; 2], b: [i64; 2], c: [i64; 2]) -> i128 {
    let (ax, ay, bx, by, cx, cy) = (
        a[0] as i128,
        a[1] as i128,
        b[0] as i128,
        b[1] as i128,
        c[0] as i128,
        c[1] as i128,
    );
    (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
}

fn lift(p: [i64; 2]) -> i128 {
    (p[0] as i128).pow(2) + (p[1] as i128).pow(2)
}

/// 3×3 in-circle determinant; positive iff `d` is inside the ccw circle `abc`.
fn incircle_i(a: [i64; 2], b: [i64; 2], c: [i64; 2], d: [i64; 2]) -> i128 {
    let row = |p: [i64; 2]| {
        [
            (p[0] - d[0]) as i128,
            (p[1] - d[1]) as i128,
            lift(p) - lift(d),
        ]
    };
    let (r0, r1, r2) = (row(a), row(b), row(c));
    r0[0] * (r1[1] * r2[2] - r1[2] * r2[1]) - r0[1] * (r1[0] * r2[2] - r1[2] * r2[0])
        + r0[2] * (r1[0] * r2[1] - r1[1] * r2[0])
}

/// In-circle with every lifted height raised by ε^(rank+1); lower ranks dominate.
fn perturbed_inside(p: &[[i64; 2]], rank: &[usize], t: [usize; 3], d: usize) -> bool {
    let (a, b, c) = (t[0], t[1], t[2]);
    let exact = incircle_i(p[a], p[b], p[c], p[d]);
    if exact != 0 {
        return exact > 0;
    }
    // d(det)/d(lift) for each of the four rows, via 2×2 minors of the xy-differences.
    let minor = |u: usize, v: usize| {
        let du = [p[u][0] - p[d][0], p[u][1] - p[d][1]];
        let dv = [p[v][0] - p[d][0], p[v][1] - p[d][1]];
        du[0] as i128 * dv[1] as i128 - du[1] as i128 * dv[0] as i128
    };
    let ca = minor(b, c);
    let cb = -minor(a, c);
    let cc = minor(a, b);
    let cd = -(ca + cb + cc);
    let mut terms = [(rank[a], ca), (rank[b], cb), (rank[c], cc), (rank[d], cd)];
    terms.sort();
    terms.iter().find(|t| t.1 != 0).is_some_and(|t| t.1 > 0)
}

/// All triangles whose perturbed circumcircle holds no other site.
fn brute_force_edges(raw: &[[i64; 2]]) -> BTreeSet<(usize, usize)> {
    let mut sites: Vec<usize> = Vec::new();
    for i in 0..raw.len() {
        if !sites.iter().any(|&j| raw[j] == raw[i]) {
            sites.push(i);
        }
    }
    let mut order = sites.clone();
    order.sort_by_key(|&i| (raw[i][0], raw[i][1], i));
    let mut rank = vec![usize::MAX; raw.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let mut edges = BTreeSet::new();
    for (x, &a) in sites.iter().enumerate() {
        for (y, &b) in sites.iter().enumerate().skip(x + 1) {
            for &c in sites.iter().skip(y + 1) {
                let o = orient_i(raw[a], raw[b], raw[c]);
                if o == 0 {
                    continue;
                }
                let t = if o > 0 { [a, b, c] } else { [a, c, b] };
                let empty = sites
                    .iter()
                    .filter(|&&d| d != a && d != b && d != c)
                    .all(|&d| !perturbed_inside(raw, &rank, t, d));
                if empty {
                    for (u, v) in [(a, b), (b, c), (a, c)] {
                        edges.insert((u.min(v), u.max(v)));
                    }
                }
            }
        }
    }
    edges
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut tested = 0;
    let mut grid_sets = 0;
    while tested < 200 {
        let n = rng.random_range(3..=12);
        // A small integer grid forces duplicates, collinear runs and cocircular quadruples.
        let side = if tested % 2 == 0 { 5 } else { 40 };
        let raw: Vec<[i64; 2]> = (0..n)
            .map(|_| [rng.random_range(0..side), rng.random_range(0..side)])
            .collect();
        let Some(&q) = raw.iter().find(|&&q| q != raw[0]) else {
            continue;
        };
        if raw.iter().all(|&c| orient_i(raw[0], q, c) == 0) {
            continue;
        }
        // Exactly representable, non-integer coordinates.
        let points: Vec<[f64; 2]> = raw
            .iter()
            .map(|p| [p[0] as f64 * 0.5 + 1000.25, p[1] as f64 * 0.5 - 17.75])
            .collect();
        let got: BTreeSet<(usize, usize)> = delaunay(&points)
            .map_err(|e| format!("set {tested}: {e}"))?
            .iter()
            .copied()
            .collect();
        let want = brute_force_edges(&raw);
        ensure(got == want, || {
            format!("set {tested} {raw:?}: got {got:?}, want {want:?}")
        })?;
        if side == 5 {
            grid_sets += 1;
        }
        tested += 1;
    }
    within(start.elapsed(), 10)?;
    Ok(format!(
        "200 sets match the brute-force oracle ({grid_sets} on a tie-heavy grid) in {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

// 2 -------------------------------------------------------------------------

fn criterion_2() -> Outcome {
    const LABELS: [&str; PAIR_COUNT] = ["MM", "MI", "MS", "MN", "II", "IS", "IN", "SS", "SN", "NN"];
    let order = |c: CellClass| match c {
        CellClass::M => 0,
        CellClass::I => 1,
        CellClass::S => 2,
        CellClass::N => 3,
    };
    let letter = |c: CellClass| ["M", "I", "S", "N"][order(c)];
    for (k, l) in LABELS.iter().enumerate() {
        ensure(pair_label(k) == *l, || {
            format!("pair {k} is {} not {l}", pair_label(k))
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut with_edges = 0;
    for t in 0..1000 {
        let n = rng.random_range(3..40);
        let cells: Vec<CellRecord> = (0..n)
            .map(|_| {
                let class = CellClass::ALL[rng.random_range(0..4)];
                CellRecord::new(
                    rng.random_range(0.0..200.0),
                    rng.random_range(0.0..200.0),
                    class,
                )
                .unwrap()
            })
            .collect();
        let tile = Tile {
            address: TileAddress::new(0, 0),
            cells,
        };
        let Ok(edges) = tile_network(&tile) else {
            continue;
        };
        let cf = connection_frequency(&tile, &edges);

        let mut tally: BTreeMap<String, usize> = BTreeMap::new();
        for &(a, b) in edges.iter() {
            let (ca, cb) = (tile.cells[a].class, tile.cells[b].class);
            let (lo, hi) = if order(ca) <= order(cb) {
                (ca, cb)
            } else {
                (cb, ca)
            };
            *tally
                .entry(format!("{}{}", letter(lo), letter(hi)))
                .or_default() += 1;
        }
        let total = edges.len();
        for (k, l) in LABELS.iter().enumerate() {
            let want = tally.get(*l).map_or(0.0, |&c| c as f64 / total as f64);
            ensure(cf.h[k] == want, || {
                format!("tile {t} pair {l}: {} vs {want}", cf.h[k])
            })?;
        }
        ensure(cf.edge_count == total, || format!("tile {t}: edge count"))?;
        if total > 0 {
            let s: f64 = cf.h.iter().sum();
            ensure((s - 1.0).abs() < 1e-12, || format!("tile {t}: sum {s}"))?;
            with_edges += 1;
        }
    }
    Ok(format!(
        "1000 tiles recounted exactly, {with_edges} with edges sum to 1"
    ))
}

// 3 -------------------------------------------------------------------------

fn random_frequencies(rng: &mut ChaCha8Rng) -> CfVector {
    let w: [f64; PAIR_COUNT] = std::array::from_fn(|_| {
        if rng.random_bool(0.4) {
            0.0
        } else {
            rng.random::<f64>()
        }
    });
    let s: f64 = w.iter().sum();
    if s == 0.0 {
        return CfVector::zero();
    }
    CfVector::from_frequencies(w.map(|v| v / s), 10).unwrap()
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut shared_zero_terms = 0;
    for i in 0..10_000 {
        let h = random_frequencies(&mut rng);
        let m = random_frequencies(&mut rng);
        let d = chi_squared_distance(&h, &m).map_err(|e| e.to_string())?;
        let back = chi_squared_distance(&m, &h).map_err(|e| e.to_string())?;
        let own = chi_squared_distance(&h, &h).map_err(|e| e.to_string())?;
        let mut oracle = 0.0;
        for k in 0..PAIR_COUNT {
            if h.h[k] == 0.0 && m.h[k] == 0.0 {
                shared_zero_terms += 1;
            } else {
                oracle += (h.h[k] - m.h[k]).powi(2) / (h.h[k] + m.h[k]);
            }
        }
        ensure(own == 0.0, || format!("pair {i}: d(h,h) = {own}"))?;
        ensure(d == back, || format!("pair {i}: asymmetric {d} vs {back}"))?;
        ensure((-1e-15..=2.0 + 1e-12).contains(&d), || {
            format!("pair {i}: {d} outside [0,2]")
        })?;
        ensure(d.is_finite() && (d - oracle).abs() < 1e-12, || {
            format!("pair {i}: {d} vs {oracle}")
        })?;
    }
    let mut bad = CfVector::zero();
    bad.h[0] = -0.1;
    ensure(
        chi_squared_distance(&bad, &CfVector::zero()).is_err(),
        || "negative entry accepted".into(),
    )?;
    Ok(format!(
        "10000 pairs; {shared_zero_terms} shared-zero terms contributed 0"
    ))
}

// 4 -------------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let (data, truth) = planted_cf_clusters(6, 50, 0.1, 42);
    let mut centers = Vec::new();
    for c in 0..6 {
        let mut h = [0.0; PAIR_COUNT];
        h[c] = 1.0;
        centers.push(CfVector::from_frequencies(h, 1).unwrap());
    }
    for a in 0..6 {
        for b in a + 1..6 {
            let d = chi_squared_distance(&centers[a], &centers[b]).unwrap();
            ensure(d > 0.5, || {
                format!("planted centers {a},{b} only {d} apart")
            })?;
        }
    }
    let model = kmedoids(&data, 6, 100, 7).map_err(|e| e.to_string())?;
    let ari = adjusted_rand_index(&model.assignments, &truth);
    ensure(ari >= 0.99, || format!("ARI {ari}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let slides = SlideGrouping::uniform((0..data.len()).map(|_| rng.random_range(0..20)).collect());
    let (report, _) = select_k(&data, &slides, 2..=8, 100, 7).map_err(|e| e.to_string())?;
    ensure(report.chosen_k == 6, || {
        format!("select_k chose {}", report.chosen_k)
    })?;
    within(start.elapsed(), 60)?;
    Ok(format!(
        "ARI {ari:.4}, chosen k 6, min medoid distance {:.3}, {:.1} s",
        model.min_medoid_distance(),
        start.elapsed().as_secs_f64()
    ))
}

// 5 -------------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let beta_l = [-0.5, 1.0, -0.7];
    let x = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y: Vec<bool> = (0..n)
        .map(|i| {
            let eta = beta_l[0] + beta_l[1] * x[(i, 0)] + beta_l[2] * x[(i, 1)];
            rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp())
        })
        .collect();
    let fit = logistic_fit(&x, &y, &[1.0, 1.0]).map_err(|e| e.to_string())?;
    for (j, (&b, &t)) in fit.coefficients.iter().zip(&beta_l).enumerate() {
        ensure((b - t).abs() <= 0.15, || {
            format!("logistic beta {j}: {b} vs {t}")
        })?;
    }
    let g = logistic::gradient(&x, &y, &fit.coefficients);
    let gl = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure(gl < 1e-6, || format!("logistic gradient {gl:e}"))?;

    let beta_c = [0.7, -0.5];
    let x = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let rate = (beta_c[0] * x[(i, 0)] + beta_c[1] * x[(i, 1)]).exp();
        let t = -(1.0 - rng.random::<f64>()).ln() / rate;
        let c = rng.random_range(0.0..3.0);
        times.push(t.min(c));
        events.push(t <= c);
    }
    let fit = cox_fit(&x, &times, &events, &[1.0, 1.0]).map_err(|e| e.to_string())?;
    for (j, (&b, &t)) in fit.coefficients.iter().zip(&beta_c).enumerate() {
        ensure((b - t).abs() <= 0.15, || {
            format!("cox beta {j}: {b} vs {t}")
        })?;
    }
    let g = cox::gradient(&x, &times, &events, &fit.coefficients);
    let gc = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure(gc < 1e-6, || format!("cox gradient {gc:e}"))?;
    within(start.elapsed(), 30)?;
    Ok(format!(
        "max gradient {:.1e} (logistic) {:.1e} (cox), {:.2} s",
        gl,
        gc,
        start.elapsed().as_secs_f64()
    ))
}

// 6 -------------------------------------------------------------------------

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for d in 0..50 {
        let n = rng.random_range(30..200);
        let hr = rng.random_range(0.5..2.5);
        let groups: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let mut times = Vec::with_capacity(n);
        let mut events = Vec::with_capacity(n);
        for &g in &groups {
            let rate = if g == 1 { hr } else { 1.0 };
            let t = -(1.0 - rng.random::<f64>()).ln() / rate;
            let c = rng.random_range(0.0..4.0);
            times.push(t.min(c));
            events.push(t <= c);
        }
        if groups.iter().all(|&g| g == groups[0]) {
            continue;
        }
        let x = DMatrix::from_fn(n, 1, |i, _| groups[i] as f64);
        let score = cox_fit(&x, &times, &events, &[1.0]).map_err(|e| format!("set {d}: {e}"))?;
        let lr = logrank(&groups, &times, &events).map_err(|e| format!("set {d}: {e}"))?;
        let diff = (score.score_p - lr.p).abs();
        worst = worst.max(diff);
        ensure(diff < 1e-6, || {
            format!("set {d}: score p {} vs log-rank p {}", score.score_p, lr.p)
        })?;
    }
    Ok(format!("50 datasets, largest |p difference| {worst:.1e}"))
}

// 7 -------------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let a = altman_adjust(0.05).map_err(|e| e.to_string())?;
    let b = altman_adjust(0.001).map_err(|e| e.to_string())?;
    ensure((a.p_adj - 0.4923).abs() <= 0.001, || {
        format!("p_adj(0.05) = {}", a.p_adj)
    })?;
    ensure((b.p_adj - 0.0248).abs() <= 0.001, || {
        format!("p_adj(0.001) = {}", b.p_adj)
    })?;
    Ok(format!(
        "p_adj(0.05) = {:.4}, p_adj(0.001) = {:.4}",
        a.p_adj, b.p_adj
    ))
}

// 8 -------------------------------------------------------------------------

fn criterion_8() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let km = kaplan_meier(&[1.0, 2.0, 3.0], &[true; 3]).map_err(|e| e.to_string())?;
    for (t, s) in [(1.0, 2.0 / 3.0), (2.0, 1.0 / 3.0), (3.0, 0.0)] {
        ensure(close(km.survival_at(t), s), || {
            format!("all events S({t}) = {}", km.survival_at(t))
        })?;
    }
    let km = kaplan_meier(&[1.0, 2.0, 3.0], &[true, false, true]).map_err(|e| e.to_string())?;
    for (t, s) in [(0.5, 1.0), (1.0, 2.0 / 3.0), (2.5, 2.0 / 3.0), (3.0, 0.0)] {
        ensure(close(km.survival_at(t), s), || {
            format!("censored S({t}) = {}", km.survival_at(t))
        })?;
    }
    let km = kaplan_meier(&[1.0, 2.0, 5.0], &[false; 3]).map_err(|e| e.to_string())?;
    for t in [0.0, 1.0, 3.0, 10.0] {
        ensure(km.survival_at(t) == 1.0, || {
            format!("all censored S({t}) = {}", km.survival_at(t))
        })?;
    }
    let times = [1.0, 3.0, 4.0, 6.0, 8.0, 1.0, 3.0, 4.0, 6.0, 8.0];
    let events = [
        true, false, true, true, false, true, false, true, true, false,
    ];
    let groups = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
    let lr = logrank(&groups, &times, &events).map_err(|e| e.to_string())?;
    ensure(lr.chi2.abs() < 1e-12, || {
        format!("identical groups chi2 = {}", lr.chi2)
    })?;
    Ok("three KM hand cases match, identical groups give chi2 = 0".into())
}

// 9 -------------------------------------------------------------------------

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("slides");
    study_fixture(40, 0)
        .and_then(|s| s.write_to(&input))
        .map_err(|e| e.to_string())?;
    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        "input = slides\nclinical = slides/clinical.csv\nstats = true\nseed = 0\n",
    )
    .map_err(|e| e.to_string())?;

    let run = |out: &str, threads: usize| -> Result<BTreeMap<String, Vec<u8>>, String> {
        let status = Command::new(env!("CARGO_BIN_EXE_histophenotype"))
            .args(["run", "--config"])
            .arg(&conf)
            .args(["--threads", &threads.to_string(), "--out"])
            .arg(dir.path().join(out))
            .env("RUST_LOG", "error")
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || {
            format!("run {out} exited with {status}")
        })?;
        Ok(read_tree(&dir.path().join(out)))
    };
    let a = run("a", 4)?;
    let b = run("b", 4)?;
    let c = run("c", 1)?;
    ensure(a == b, || "two runs with 4 threads differ".into())?;
    ensure(a == c, || "runs with 4 and 1 threads differ".into())?;
    let manifest: serde_json::Value =
        serde_json::from_slice(&a["manifest.json"]).map_err(|e| e.to_string())?;
    ensure(manifest["chosen_k"] == 6, || {
        format!("chosen_k = {}", manifest["chosen_k"])
    })?;
    ensure(a.contains_key("report.json"), || "no report".into())?;
    Ok(format!(
        "3 runs byte-identical over {} files, chosen_k 6, {:.1} s",
        a.len(),
        start.elapsed().as_secs_f64()
    ))
}

// 10 ------------------------------------------------------------------------

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let runs = 500;
    let mut significant = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for r in 0..runs {
        let n = 100;
        let values: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut times = Vec::with_capacity(n);
        let mut events = Vec::with_capacity(n);
        for _ in 0..n {
            let t = -(1.0 - rng.random::<f64>()).ln() * 5.0;
            let c = rng.random_range(0.0..10.0);
            times.push(t.min(c));
            events.push(t <= c);
        }
        let cut = optimal_cutoff_stratify(&values, &times, &events)
            .map_err(|e| format!("cohort {r}: {e}"))?;
        if cut.adjusted.p_adj < 0.05 {
            significant += 1;
        }
    }
    let rate = significant as f64 / runs as f64;
    ensure(rate <= 0.10, || {
        format!("{significant}/{runs} null cohorts significant")
    })?;
    within(start.elapsed(), 300)?;
    Ok(format!(
        "{significant}/{runs} null cohorts with p_adj < 0.05 ({:.1}%), {:.1} s",
        rate * 100.0,
        start.elapsed().as_secs_f64()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("Delaunay oracle equivalence", criterion_1),
        ("CF recount", criterion_2),
        ("chi-squared metric properties", criterion_3),
        ("phenotype recovery", criterion_4),
        ("estimator recovery", criterion_5),
        ("score test equals log-rank", criterion_6),
        ("cutoff correction values", criterion_7),
        ("KM and log-rank hand cases", criterion_8),
        ("pipeline determinism", criterion_9),
        ("null calibration", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
