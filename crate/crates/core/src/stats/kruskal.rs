use serde::{Deserialize, Serialize};
use statrs::function::gamma::checked_gamma_ur;

use super::{Result, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KwResult {
    /// Tie-corrected H statistic.
    pub h: f64,
    pub df: usize,
    pub p: f64,
}

/// Upper tail of the chi-square distribution, `Q(df/2, x/2)`.
pub fn chi_square_sf(x: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(StatsError::Invalid("chi-square needs df >= 1".into()));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    checked_gamma_ur(df as f64 / 2.0, x / 2.0)
        .map(|p| p.clamp(0.0, 1.0))
        .map_err(|e| StatsError::Invalid(e.to_string()))
}

/// Mid-ranks (1-based) of `values`, plus the tie term `Σ (t³ − t)`.
fn mid_ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

/// Kruskal-Wallis H test with tie correction; p from the chi-square upper
/// tail with `groups - 1` degrees of freedom.
///
/// When every observation is identical the correction is undefined; the
/// result is then `H = 0, p = 1`.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KwResult> {
    if groups.len() < 2 {
        return Err(StatsError::Invalid(format!("need at least 2 groups, got {}", groups.len())));
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(StatsError::Invalid("every group must be nonempty".into()));
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    if all.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::Invalid("non-finite observation".into()));
    }
    let df = groups.len() - 1;
    let n = all.len() as f64;
    let (ranks, ties) = mid_ranks(&all);
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        return Ok(KwResult { h: 0.0, df, p: 1.0 });
    }

    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = ((12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)) / correction).max(0.0);
    Ok(KwResult { h, df, p: chi_square_sf(h, df)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_separated_groups() {
        let r = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]])
            .unwrap();
        assert!((r.h - 7.2).abs() < 1e-12);
        assert_eq!(r.df, 2);
        // df = 2: survival is exp(-x/2)
        assert!((r.p - (-3.6f64).exp()).abs() < 1e-12);
        assert!((r.p - 0.0273).abs() < 1e-4);
    }

    #[test]
    fn identical_groups() {
        let r = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(r.h.abs() < 1e-12);
        assert!((r.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_tied() {
        let r = kruskal_wallis(&[vec![3.0, 3.0], vec![3.0]]).unwrap();
        assert_eq!((r.h, r.p), (0.0, 1.0));
    }

    #[test]
    fn mid_ranks_with_ties() {
        let (r, t) = mid_ranks(&[2.0, 1.0, 2.0, 3.0]);
        assert_eq!(r, vec![2.5, 1.0, 2.5, 4.0]);
        assert_eq!(t, 6.0);
    }

    #[test]
    fn input_errors() {
        assert!(kruskal_wallis(&[vec![1.0]]).is_err());
        assert!(kruskal_wallis(&[vec![1.0], vec![]]).is_err());
    }

    #[test]
    fn chi_square_df1_matches_normal_tail() {
        // P(chi2_1 > 3.841459) = 0.05
        assert!((chi_square_sf(3.841_458_820_694_124, 1).unwrap() - 0.05).abs() < 1e-10);
    }
}
