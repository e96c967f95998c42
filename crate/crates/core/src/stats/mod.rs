//! MOS tables, inter-rater agreement, significance tests and regression
//! metrics.
//!
//! All functions are pure. Sample standard deviations use the `n - 1`
//! denominator throughout.

mod agreement;
mod descriptive;
mod kruskal;
mod metrics;
mod quadrature;
mod tukey;

pub use agreement::{icc_2_1, icc_anova, krippendorff_alpha, AlphaMetric, IccAnova, RatingMatrix};
pub use descriptive::{bin_by_mos, group_scores, mos_table, GroupBy, GroupStats};
pub use kruskal::{chi_square_sf, kruskal_wallis, KwResult};
pub use metrics::{
    bootstrap_ci, metric_value, regression_metrics, Interval, MetricIntervals, MetricKind,
    Metrics,
};
pub use quadrature::integrate;
pub use tukey::{
    normal_cdf, studentized_range_critical, studentized_range_sf, tukey_hsd, RangeDf, TukeyPair,
    TukeyResult,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("input is constant; {0} is undefined")]
    Constant(&'static str),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("no pairable values: every group has fewer than two ratings")]
    NoPairableValues,
    #[error("group {0:?} has no ratings and cannot be imputed")]
    EmptyColumn(String),
    #[error("zero within-group variance")]
    ZeroVariance,
    #[error("numerical integration did not converge (estimated error {0:e})")]
    NonConvergence(f64),
    #[error("finite degrees of freedom are not supported for the studentized range")]
    FiniteDfUnsupported,
    #[error("bootstrap replicate {0} stayed degenerate after repeated redraws")]
    DegenerateResample(usize),
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// Mean and sample standard deviation. Empty input gives `(0, 0)`; a single
/// value has standard deviation 0.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_sd_basics() {
        assert_eq!(mean_sd(&[3.0, 5.0]), (4.0, 2f64.sqrt()));
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        assert_eq!(mean_sd(&[]), (0.0, 0.0));
        assert_eq!(mean_sd(&[4.0, 4.0, 4.0]).1, 0.0);
    }
}
