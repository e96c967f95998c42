use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::quadrature::integrate;
use super::{Result, StatsError};

/// Degrees of freedom of the variance estimate behind a studentized range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeDf {
    Infinite,
    Finite(f64),
}

const QUAD_TOL: f64 = 1e-11;
const Z_LIMIT: f64 = 10.0;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Survival function `P(Q > q)` of the studentized range of `k` means.
///
/// Only the infinite-df (known variance) case is implemented; with several
/// thousand observations the finite-df correction is negligible.
pub fn studentized_range_sf(q: f64, k: usize, df: RangeDf) -> Result<f64> {
    if let RangeDf::Finite(_) = df {
        return Err(StatsError::FiniteDfUnsupported);
    }
    if k < 2 {
        return Err(StatsError::Invalid(format!("studentized range needs k >= 2, got {k}")));
    }
    if q.is_nan() || q < 0.0 {
        return Err(StatsError::Invalid(format!("q must be >= 0, got {q}")));
    }
    if q == 0.0 {
        return Ok(1.0);
    }
    let power = (k - 1) as i32;
    let cdf = integrate(
        |z| normal_pdf(z) * (normal_cdf(z) - normal_cdf(z - q)).powi(power),
        -Z_LIMIT,
        Z_LIMIT + q,
        QUAD_TOL,
    )?;
    Ok((1.0 - k as f64 * cdf).clamp(0.0, 1.0))
}

/// Upper `alpha` critical value of the studentized range, by bisection.
pub fn studentized_range_critical(alpha: f64, k: usize, df: RangeDf) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::Invalid(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while studentized_range_sf(hi, k, df)? > alpha {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(StatsError::NonConvergence(hi));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if studentized_range_sf(mid, k, df)? > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyPair {
    pub i: usize,
    pub j: usize,
    /// `mean_j - mean_i`.
    pub mean_diff: f64,
    pub q: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyResult {
    pub means: Vec<f64>,
    pub ms_within: f64,
    pub df_within: usize,
    pub pairs: Vec<TukeyPair>,
}

/// All-pairs Tukey-Kramer comparison over `groups`, with p-values from the
/// infinite-df studentized range at `k = groups.len()`.
pub fn tukey_hsd(groups: &[Vec<f64>]) -> Result<TukeyResult> {
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::Invalid(format!("need at least 2 groups, got {k}")));
    }
    if let Some(g) = groups.iter().position(|g| g.len() < 2) {
        return Err(StatsError::Invalid(format!("group {g} has fewer than 2 scores")));
    }
    let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let n_total: usize = groups.iter().map(Vec::len).sum();
    let ss: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|x| (x - m) * (x - m)).sum::<f64>())
        .sum();
    let df_within = n_total - k;
    let ms_within = ss / df_within as f64;
    if ms_within.is_nan() || ms_within <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }

    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let ni = groups[i].len() as f64;
            let nj = groups[j].len() as f64;
            let diff = means[j] - means[i];
            let se = (ms_within / 2.0 * (1.0 / ni + 1.0 / nj)).sqrt();
            let q = diff.abs() / se;
            let p = studentized_range_sf(q, k, RangeDf::Infinite)?;
            pairs.push(TukeyPair { i, j, mean_diff: diff, q, p });
        }
    }
    Ok(TukeyResult { means, ms_within, df_within, pairs })
}
