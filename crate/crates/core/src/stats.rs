//! Rank tests, correlation, and histogram summaries.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod special;

/// Largest `n1·n2` for which the exact U distribution is enumerated.
pub const EXACT_U_MAX_CELLS: usize = 400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("all values are identical; the statistic is undefined")]
    ZeroVariance,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("samples have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("exact method requested but samples contain ties or exceed {EXACT_U_MAX_CELLS} cells")]
    ExactUnavailable,
    #[error("bin count must be positive")]
    NoBins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    /// First sample tends to be larger.
    Greater,
    /// First sample tends to be smaller.
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    /// U of the first sample.
    pub u_statistic: f64,
    pub p_value: f64,
    pub method: UMethod,
    pub alternative: Alternative,
    pub n1: usize,
    pub n2: usize,
    pub tie_correction_applied: bool,
    pub continuity_correction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Midranks (1-based) of `values`, plus the tie groups' sizes.
pub fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Ranks start+1..=end averaged.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        if end - start > 1 {
            ties.push(end - start);
        }
        start = end;
    }
    (ranks, ties)
}

/// Number of rank assignments giving each U value, for `u = 0..=n1·n2`.
pub fn exact_u_counts(n1: usize, n2: usize) -> Vec<u128> {
    // counts[a][b] holds the distribution for sizes (a, b); rolled over b.
    let max = n1 * n2;
    let mut table: Vec<Vec<Vec<u128>>> = vec![vec![Vec::new(); n2 + 1]; n1 + 1];
    for row in table.iter_mut() {
        row[0] = vec![1];
    }
    for cell in table[0].iter_mut() {
        *cell = vec![1];
    }
    for a in 1..=n1 {
        for b in 1..=n2 {
            // The largest observation belongs to sample 1 (adds b to U) or to sample 2.
            let mut dist = vec![0u128; a * b + 1];
            for (u, &c) in table[a - 1][b].iter().enumerate() {
                dist[u + b] += c;
            }
            for (u, &c) in table[a][b - 1].iter().enumerate() {
                dist[u] += c;
            }
            table[a][b] = dist;
        }
    }
    let out = std::mem::take(&mut table[n1][n2]);
    debug_assert_eq!(out.len(), max + 1);
    out
}

fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// Mann-Whitney U test with automatic method selection.
pub fn mann_whitney_u(sample1: &[f64], sample2: &[f64], alternative: Alternative) -> Result<UTestResult, StatsError> {
    mann_whitney_u_with(sample1, sample2, alternative, MethodChoice::Auto)
}

/// Mann-Whitney U test.
///
/// `Auto` uses exact enumeration when `n1·n2 ≤ 400` and there are no ties,
/// otherwise the normal approximation with tie-corrected variance and a 0.5
/// continuity correction.
pub fn mann_whitney_u_with(
    sample1: &[f64],
    sample2: &[f64],
    alternative: Alternative,
    method: MethodChoice,
) -> Result<UTestResult, StatsError> {
    let (n1, n2) = (sample1.len(), sample2.len());
    if n1 == 0 || n2 == 0 {
        return Err(StatsError::EmptySample);
    }
    check_finite(sample1)?;
    check_finite(sample2)?;
    let pooled: Vec<f64> = sample1.iter().chain(sample2).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;

    let exact_ok = ties.is_empty() && n1 * n2 <= EXACT_U_MAX_CELLS;
    let use_exact = match method {
        MethodChoice::Auto => exact_ok,
        MethodChoice::Exact if exact_ok => true,
        MethodChoice::Exact => return Err(StatsError::ExactUnavailable),
        MethodChoice::Normal => false,
    };

    if use_exact {
        let counts = exact_u_counts(n1, n2);
        let total: u128 = counts.iter().sum();
        let u = u1.round() as usize;
        let lower: u128 = counts[..=u].iter().sum();
        let upper: u128 = counts[u..].iter().sum();
        let p_lower = lower as f64 / total as f64;
        let p_upper = upper as f64 / total as f64;
        let p = match alternative {
            Alternative::Less => p_lower,
            Alternative::Greater => p_upper,
            Alternative::TwoSided => (2.0 * p_lower.min(p_upper)).min(1.0),
        };
        return Ok(UTestResult {
            u_statistic: u1,
            p_value: p,
            method: UMethod::Exact,
            alternative,
            n1,
            n2,
            tie_correction_applied: false,
            continuity_correction: false,
        });
    }

    if ties.first() == Some(&(n1 + n2)) {
        return Err(StatsError::ZeroVariance);
    }
    let n = (n1 + n2) as f64;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let variance = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let sigma = variance.sqrt();
    let mean = (n1 * n2) as f64 / 2.0;
    let p = match alternative {
        Alternative::TwoSided => {
            let z = ((u1 - mean).abs() - 0.5).max(0.0) / sigma;
            (2.0 * special::normal_sf(z)).min(1.0)
        }
        Alternative::Greater => special::normal_sf((u1 - mean - 0.5) / sigma),
        Alternative::Less => special::normal_cdf((u1 - mean + 0.5) / sigma),
    };
    Ok(UTestResult {
        u_statistic: u1,
        p_value: p,
        method: UMethod::NormalApprox,
        alternative,
        n1,
        n2,
        tie_correction_applied: !ties.is_empty(),
        continuity_correction: true,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Pearson correlation with a two-sided Student-t p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewPoints { needed: 3, got: n });
    }
    check_finite(x)?;
    check_finite(y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    // With t = r·√(df/(1-r²)), df/(df+t²) reduces to 1-r².
    let p = special::reg_inc_beta(df / 2.0, 0.5, 1.0 - r * r);
    Ok(CorrelationResult { r, p_value: p, n })
}

/// Two-sided p-value of a Student-t statistic with `df > 0` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    special::reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub median: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Equal-width histogram over `[min, max]`; the last bin is closed on the right.
pub fn summarize_distribution(values: &[f64], bins: usize) -> Result<Histogram, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(values)?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    histogram_over(values, lo, hi, bins)
}

/// Histogram over a caller-supplied range, for overlaying several samples on shared edges.
pub fn histogram_over(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Histogram, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if bins == 0 {
        return Err(StatsError::NoBins);
    }
    check_finite(values)?;
    let (edges, counts) = if hi <= lo {
        (vec![lo, hi], vec![values.len()])
    } else {
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|k| lo + width * k as f64).collect();
        edges.push(hi);
        let mut counts = vec![0usize; bins];
        for &v in values {
            if v < lo || v > hi {
                continue;
            }
            let k = (((v - lo) / width).floor() as usize).min(bins - 1);
            counts[k] += 1;
        }
        (edges, counts)
    };
    Ok(Histogram {
        edges,
        counts,
        mean: mean(values),
        median: median(values),
    })
}

/// Histograms of two samples sharing the same bin edges.
pub fn paired_histograms(a: &[f64], b: &[f64], bins: usize) -> Result<(Histogram, Histogram), StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let all = a.iter().chain(b);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((histogram_over(a, lo, hi, bins)?, histogram_over(b, lo, hi, bins)?))
}
