//! Kaplan–Meier curves, log-rank tests and minimum-p cutoff stratification.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::spd_inverse;
use super::{chi2_sf, median, Z_95};
use crate::error::{Error, Result};

/// Smallest share of cases allowed on either side of a stratification cutoff.
pub const MIN_STRATUM_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmStep {
    pub time: f64,
    pub at_risk: usize,
    pub events: usize,
    pub censored: usize,
    pub survival: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Product-limit estimate with one step per distinct event time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub n: usize,
    pub steps: Vec<KmStep>,
    /// Times of censored observations, ascending, for plot marks.
    pub censor_times: Vec<f64>,
}

impl KmCurve {
    /// Right-continuous S(t).
    pub fn survival_at(&self, t: f64) -> f64 {
        self.steps
            .iter()
            .take_while(|s| s.time <= t)
            .last()
            .map_or(1.0, |s| s.survival)
    }

    /// `t,S,CI_lo,CI_hi,at_risk` rows, starting from S(0) = 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,S,CI_lo,CI_hi,at_risk\n");
        let _ = writeln!(out, "0.0,1.0,1.0,1.0,{}", self.n);
        for s in &self.steps {
            let _ = writeln!(
                out,
                "{:?},{:?},{:?},{:?},{}",
                s.time, s.survival, s.ci_lower, s.ci_upper, s.at_risk
            );
        }
        out
    }
}

fn check_survival_input(times: &[f64], events: &[bool]) -> Result<()> {
    if times.len() != events.len() {
        return Err(Error::Validation(format!(
            "{} times but {} event flags",
            times.len(),
            events.len()
        )));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::Validation(
            "survival times must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

pub fn kaplan_meier(times: &[f64], events: &[bool]) -> Result<KmCurve> {
    check_survival_input(times, events)?;
    if times.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut steps = Vec::new();
    let mut censor_times = Vec::new();
    let mut at_risk = times.len();
    let mut survival = 1.0;
    let mut greenwood = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut j = i;
        while j < order.len() && times[order[j]] == t {
            j += 1;
        }
        let d = order[i..j].iter().filter(|&&k| events[k]).count();
        let c = (j - i) - d;
        censor_times.extend(std::iter::repeat_n(t, c));
        if d > 0 {
            let (n, df) = (at_risk as f64, d as f64);
            survival *= 1.0 - df / n;
            let (lo, hi) = if d < at_risk {
                greenwood += df / (n * (n - df));
                let half = Z_95 * greenwood.sqrt();
                (
                    (survival.ln() - half).exp(),
                    (survival.ln() + half).exp().min(1.0),
                )
            } else {
                (0.0, 0.0)
            };
            steps.push(KmStep {
                time: t,
                at_risk,
                events: d,
                censored: c,
                survival,
                ci_lower: lo,
                ci_upper: hi,
            });
        }
        at_risk -= j - i;
        i = j;
    }
    Ok(KmCurve {
        n: times.len(),
        steps,
        censor_times,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRank {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
}

/// k-sample log-rank test with hypergeometric variance; groups are any labels.
pub fn logrank(groups: &[usize], times: &[f64], events: &[bool]) -> Result<LogRank> {
    check_survival_input(times, events)?;
    if groups.len() != times.len() {
        return Err(Error::Validation(format!(
            "{} group labels but {} times",
            groups.len(),
            times.len()
        )));
    }
    let mut labels: Vec<usize> = groups.to_vec();
    labels.sort_unstable();
    labels.dedup();
    let k = labels.len();
    if k < 2 {
        return Err(Error::Validation(
            "log-rank test needs at least two groups".into(),
        ));
    }
    let g: Vec<usize> = groups
        .iter()
        .map(|l| labels.binary_search(l).expect("label present"))
        .collect();

    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut risk = vec![0usize; k];
    for &gi in &g {
        risk[gi] += 1;
    }
    let m = k - 1;
    let mut o_minus_e = DVector::<f64>::zeros(m);
    let mut v = DMatrix::<f64>::zeros(m, m);
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut j = i;
        while j < order.len() && times[order[j]] == t {
            j += 1;
        }
        let mut dg = vec![0usize; k];
        for &idx in &order[i..j] {
            if events[idx] {
                dg[g[idx]] += 1;
            }
        }
        let d: usize = dg.iter().sum();
        let n: usize = risk.iter().sum();
        if d > 0 {
            let (nf, df) = (n as f64, d as f64);
            let hyper = if n > 1 {
                df * (nf - df) / (nf - 1.0)
            } else {
                0.0
            };
            for a in 0..m {
                let pa = risk[a] as f64 / nf;
                o_minus_e[a] += dg[a] as f64 - df * pa;
                for b in 0..m {
                    let pb = risk[b] as f64 / nf;
                    let delta = if a == b { 1.0 } else { 0.0 };
                    v[(a, b)] += hyper * pa * (delta - pb);
                }
            }
        }
        for &idx in &order[i..j] {
            risk[g[idx]] -= 1;
        }
        i = j;
    }
    if o_minus_e.iter().all(|x| x.abs() < 1e-300) {
        return Ok(LogRank {
            chi2: 0.0,
            df: m,
            p: 1.0,
        });
    }
    let inv = spd_inverse(&v).map_err(|_| {
        Error::Estimation("log-rank variance is singular (groups without shared risk sets)".into())
    })?;
    let chi2 = (o_minus_e.transpose() * inv * &o_minus_e)[(0, 0)].max(0.0);
    Ok(LogRank {
        chi2,
        df: m,
        p: chi2_sf(chi2, m as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltmanAdjusted {
    pub p_min: f64,
    pub p_adj: f64,
    /// False when `p_min` lies outside the range the approximation was derived for.
    pub in_domain: bool,
}

/// Corrects a minimum p-value for the optimized choice of cutoff.
pub fn altman_adjust(p_min: f64) -> Result<AltmanAdjusted> {
    if !(0.0..=1.0).contains(&p_min) {
        return Err(Error::Validation(format!("p-value {p_min} outside [0, 1]")));
    }
    let raw = if p_min == 0.0 {
        0.0
    } else {
        -1.63 * p_min * (1.0 + 2.35 * p_min.ln())
    };
    let in_domain = p_min > 0.0 && p_min < 0.1;
    if !in_domain {
        log::warn!("minimum p-value {p_min} is outside the range of the cutoff correction");
    }
    Ok(AltmanAdjusted {
        p_min,
        p_adj: raw.clamp(p_min, 1.0),
        in_domain,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffResult {
    pub cutoff: f64,
    pub chi2: f64,
    pub adjusted: AltmanAdjusted,
    pub candidates: usize,
    pub n_low: usize,
    pub n_high: usize,
    /// Cases with values below the cutoff.
    pub low: KmCurve,
    pub high: KmCurve,
}

/// Searches midpoints between distinct values for the two-group split with the
/// smallest log-rank p-value, keeping at least 10% of cases on each side.
pub fn optimal_cutoff_stratify(
    values: &[f64],
    times: &[f64],
    events: &[bool],
) -> Result<CutoffResult> {
    check_survival_input(times, events)?;
    if values.len() != times.len() {
        return Err(Error::Validation(format!(
            "{} feature values but {} times",
            values.len(),
            times.len()
        )));
    }
    if values.len() < 10 {
        return Err(Error::InsufficientData {
            needed: 10,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("feature values must be finite".into()));
    }
    let n = values.len();
    let mid = median(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let floor = MIN_STRATUM_FRACTION * n as f64;

    let mut best: Option<(f64, LogRank)> = None;
    let mut candidates = 0;
    for w in 0..n - 1 {
        if sorted[w] == sorted[w + 1] {
            continue;
        }
        let below = w + 1;
        if (below as f64) < floor || ((n - below) as f64) < floor {
            continue;
        }
        let cutoff = 0.5 * (sorted[w] + sorted[w + 1]);
        let groups: Vec<usize> = values.iter().map(|&v| usize::from(v > cutoff)).collect();
        let test = logrank(&groups, times, events)?;
        candidates += 1;
        let better = match &best {
            None => true,
            Some((c, b)) => {
                let tol = 1e-12 * b.p.max(test.p);
                if (test.p - b.p).abs() <= tol {
                    // Cutoffs arrive in ascending order, so equal distance keeps the lower one.
                    (cutoff - mid).abs() < (c - mid).abs()
                } else {
                    test.p < b.p
                }
            }
        };
        if better {
            best = Some((cutoff, test));
        }
    }
    let (cutoff, test) = best.ok_or_else(|| {
        Error::Validation("no admissible cutoff leaves 10% of cases on each side".into())
    })?;
    let split = |high: bool| -> Result<KmCurve> {
        let (t, e): (Vec<f64>, Vec<bool>) = (0..n)
            .filter(|&i| (values[i] > cutoff) == high)
            .map(|i| (times[i], events[i]))
            .unzip();
        kaplan_meier(&t, &e)
    };
    let low = split(false)?;
    let high = split(true)?;
    Ok(CutoffResult {
        cutoff,
        chi2: test.chi2,
        adjusted: altman_adjust(test.p)?,
        candidates,
        n_low: low.n,
        n_high: high.n,
        low,
        high,
    })
}

/// Renders step curves as a standalone SVG document.
pub fn km_svg(title: &str, curves: &[(&str, &KmCurve)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 60.0;
    const R: f64 = 150.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    const COLORS: [&str; 6] = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
    ];

    let t_max = curves
        .iter()
        .flat_map(|(_, c)| {
            c.steps
                .iter()
                .map(|s| s.time)
                .chain(c.censor_times.iter().copied())
        })
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let px = |t: f64| L + (W - L - R) * t / t_max;
    let py = |s: f64| T + (H - T - B) * (1.0 - s);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (W - R + L) / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{L},{T} V{} H{}" fill="none" stroke="black"/>"#,
        H - B,
        W - R
    );
    for k in 0..=4 {
        let s = k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{s:.2}</text>"#,
            L - 6.0,
            py(s) + 4.0
        );
        let t = t_max * s;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{:.2}</text>"#,
            px(t),
            H - B + 18.0,
            t
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">time</text>"#,
        (W - R + L) / 2.0,
        H - 10.0
    );
    for (idx, (name, curve)) in curves.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        let mut d = format!("M{:.2},{:.2}", px(0.0), py(1.0));
        for s in &curve.steps {
            let _ = write!(d, " H{:.2} V{:.2}", px(s.time), py(s.survival));
        }
        let last = curve.censor_times.last().copied().unwrap_or(0.0);
        let end = curve.steps.last().map_or(0.0, |s| s.time).max(last);
        let _ = write!(d, " H{:.2}", px(end));
        let _ = writeln!(
            svg,
            r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
        );
        for &c in &curve.censor_times {
            let (x, y) = (px(c), py(curve.survival_at(c)));
            let _ = writeln!(
                svg,
                r#"<path d="M{:.2},{:.2} V{:.2}" stroke="{color}"/>"#,
                x,
                y - 4.0,
                y + 4.0
            );
        }
        let ly = T + 20.0 * idx as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="12" height="3" fill="{color}"/><text x="{}" y="{}">{} (n={})</text>"#,
            W - R + 12.0,
            ly,
            W - R + 30.0,
            ly + 5.0,
            escape(name),
            curve.n
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn km_all_events() {
        let km = kaplan_meier(&[1.0, 2.0, 3.0], &[true; 3]).unwrap();
        let s: Vec<f64> = km.steps.iter().map(|s| s.survival).collect();
        assert_abs_diff_eq!(s[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn km_with_censoring() {
        let km = kaplan_meier(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
        assert_eq!(km.steps.len(), 2);
        assert_abs_diff_eq!(km.survival_at(1.0), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(km.survival_at(2.5), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(km.survival_at(3.0), 0.0, epsilon = 1e-12);
        assert_eq!(km.censor_times, vec![2.0]);
    }

    #[test]
    fn km_all_censored() {
        let km = kaplan_meier(&[1.0, 4.0, 2.0], &[false; 3]).unwrap();
        assert!(km.steps.is_empty());
        assert_eq!(km.survival_at(10.0), 1.0);
        assert!(km
            .to_csv()
            .starts_with("t,S,CI_lo,CI_hi,at_risk\n0.0,1.0,1.0,1.0,3\n"));
    }

    #[test]
    fn km_rejects_negative_time() {
        assert!(kaplan_meier(&[-1.0], &[true]).is_err());
    }

    #[test]
    fn km_greenwood_interval() {
        // Ten subjects, one event at t = 1: var(log S) = 1 / (10·9).
        let mut t = vec![5.0; 10];
        t[0] = 1.0;
        let mut e = vec![false; 10];
        e[0] = true;
        let km = kaplan_meier(&t, &e).unwrap();
        let s = &km.steps[0];
        let half = Z_95 * (1.0f64 / 90.0).sqrt();
        assert_abs_diff_eq!(s.ci_lower, 0.9 * (-half).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.ci_upper, (0.9 * half.exp()).min(1.0), epsilon = 1e-12);
    }

    #[test]
    fn identical_groups_have_zero_statistic() {
        let t = [1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0];
        let e = [true, false, true, true, true, false, true, true];
        let g = [0, 0, 0, 0, 1, 1, 1, 1];
        let lr = logrank(&g, &t, &e).unwrap();
        assert_abs_diff_eq!(lr.chi2, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lr.p, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn logrank_detects_strong_separation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = Vec::new();
        let mut g = Vec::new();
        for arm in 0..2usize {
            let rate = if arm == 1 { 5.0 } else { 1.0 };
            for _ in 0..200 {
                t.push(-(1.0 - rng.random::<f64>()).ln() / rate);
                g.push(arm);
            }
        }
        let lr = logrank(&g, &t, &vec![true; 400]).unwrap();
        assert!(lr.p < 1e-3);
        assert_eq!(lr.df, 1);
    }

    #[test]
    fn logrank_two_group_hand_value() {
        // Times 1..4, group A = {1, 3}, B = {2, 4}, all events.
        // t=1: n=4, nA=2, d=1 → E=0.5, V=0.25; t=2: n=3, nA=1 → E=1/3, V=2/9;
        // t=3: n=2, nA=1 → E=0.5, V=0.25.
        let lr = logrank(&[0, 1, 0, 1], &[1.0, 2.0, 3.0, 4.0], &[true; 4]).unwrap();
        let oe: f64 = 2.0 - (0.5 + 1.0 / 3.0 + 0.5);
        let v = 0.25 + 2.0 / 9.0 + 0.25;
        assert_abs_diff_eq!(lr.chi2, oe * oe / v, epsilon = 1e-12);
    }

    #[test]
    fn logrank_three_groups() {
        let t = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let g = [7, 7, 7, 3, 3, 3, 9, 9, 9];
        let lr = logrank(&g, &t, &[true; 9]).unwrap();
        assert_eq!(lr.df, 2);
        assert!(lr.chi2 > 0.0 && lr.p < 0.05);
    }

    #[test]
    fn logrank_single_group_rejected() {
        assert!(logrank(&[1, 1], &[1.0, 2.0], &[true, true]).is_err());
    }

    #[test]
    fn altman_values() {
        assert_abs_diff_eq!(altman_adjust(0.05).unwrap().p_adj, 0.4923, epsilon = 1e-3);
        assert_abs_diff_eq!(altman_adjust(0.001).unwrap().p_adj, 0.0248, epsilon = 1e-3);
        assert!(altman_adjust(0.01).unwrap().p_adj > altman_adjust(0.001).unwrap().p_adj);
        let out = altman_adjust(0.3).unwrap();
        assert!(!out.in_domain);
        assert!(out.p_adj >= 0.3 && out.p_adj <= 1.0);
    }

    #[test]
    fn planted_split_is_found() {
        // Values above 10 die early, values below survive long.
        let values: Vec<f64> = (0..40)
            .map(|i| if i < 20 { i as f64 } else { 20.0 + i as f64 })
            .collect();
        let times: Vec<f64> = (0..40)
            .map(|i| {
                if i < 20 {
                    10.0 + i as f64
                } else {
                    1.0 + 0.1 * i as f64
                }
            })
            .collect();
        let events = vec![true; 40];
        let r = optimal_cutoff_stratify(&values, &times, &events).unwrap();
        assert!(r.cutoff > 19.0 && r.cutoff < 40.0, "cutoff {}", r.cutoff);
        assert_eq!(r.n_low, 20);
        assert!(r.adjusted.p_adj >= r.adjusted.p_min);
    }

    #[test]
    fn constant_feature_has_no_cutoff() {
        let r = optimal_cutoff_stratify(&[1.0; 12], &[1.0; 12], &[true; 12]);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn svg_is_well_formed() {
        let a = kaplan_meier(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
        let b = kaplan_meier(&[0.5, 1.5], &[true, true]).unwrap();
        let svg = km_svg("low <> high", &[("low", &a), ("high", &b)]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("&lt;&gt;"));
    }

    proptest! {
        #[test]
        fn km_without_censoring_is_one_minus_ecdf(
            raw in prop::collection::vec(0u8..20, 1..40)
        ) {
            let t: Vec<f64> = raw.iter().map(|&v| f64::from(v)).collect();
            let km = kaplan_meier(&t, &vec![true; t.len()]).unwrap();
            let n = t.len() as f64;
            let mut prev = 1.0;
            for s in &km.steps {
                let ecdf = t.iter().filter(|&&v| v <= s.time).count() as f64 / n;
                prop_assert!((s.survival - (1.0 - ecdf)).abs() < 1e-12);
                prop_assert!(s.survival <= prev + 1e-15);
                prop_assert!(s.ci_lower <= s.survival + 1e-12 && s.survival <= s.ci_upper + 1e-12);
                prev = s.survival;
            }
        }

        #[test]
        fn logrank_p_in_unit_interval(
            raw in prop::collection::vec((0u8..10, any::<bool>(), 0usize..3), 4..40)
        ) {
            let t: Vec<f64> = raw.iter().map(|r| f64::from(r.0)).collect();
            let e: Vec<bool> = raw.iter().map(|r| r.1).collect();
            let g: Vec<usize> = raw.iter().map(|r| r.2).collect();
            if let Ok(lr) = logrank(&g, &t, &e) {
                prop_assert!((0.0..=1.0).contains(&lr.p));
            }
        }
    }
}
