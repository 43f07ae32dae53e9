use serde::{Deserialize, Serialize};

use super::{midranks, normal_two_sided_p};
use crate::error::{Error, Result};

/// Pooled sample sizes up to this use the exact permutation distribution.
const EXACT_LIMIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    /// Tie-corrected normal score.
    pub z: f64,
    pub p: f64,
    /// Effect size r² = Z² / (n₁ + n₂).
    pub r2: f64,
    pub exact: bool,
}

fn for_each_subset(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..=n - (k - cur.len()) {
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Two-sided Wilcoxon–Mann–Whitney rank-sum test.
pub fn mann_whitney(xs: &[f64], ys: &[f64]) -> Result<MannWhitney> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Validation(
            "Mann-Whitney test needs two non-empty samples".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Validation(
            "Mann-Whitney input must be finite".into(),
        ));
    }
    let (n1, n2) = (xs.len(), ys.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let u = r1 - offset;
    let mean = (n1 * n2) as f64 / 2.0;

    let nf = n as f64;
    let tie_term: f64 =
        ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (nf * (nf - 1.0));
    let var = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - if n > 1 { tie_term } else { 0.0 });
    let z = if var > 0.0 {
        (u - mean) / var.sqrt()
    } else {
        0.0
    };

    let (p, exact) = if n <= EXACT_LIMIT {
        let observed = (u - mean).abs();
        let mut hits = 0usize;
        let mut total = 0usize;
        for_each_subset(n, n1, &mut |subset| {
            let us: f64 = subset.iter().map(|&i| ranks[i]).sum::<f64>() - offset;
            total += 1;
            if (us - mean).abs() >= observed - 1e-9 {
                hits += 1;
            }
        });
        (hits as f64 / total as f64, true)
    } else if var > 0.0 {
        (normal_two_sided_p(z), false)
    } else {
        (1.0, false)
    };

    Ok(MannWhitney {
        u,
        z,
        p,
        r2: z * z / nf,
        exact,
    })
}

/// Spearman rank correlation: Pearson correlation of mid-ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Validation(format!(
            "Spearman needs paired samples, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation(
            "fewer than two observations".into(),
        ));
    }
    let (rx, _) = midranks(xs);
    let (ry, _) = midranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
