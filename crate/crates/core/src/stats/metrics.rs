use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Result, StatsError};
use crate::exec::Execution;

/// Attempts per bootstrap replicate before giving up on a degenerate draw.
const MAX_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Pcc,
    Mae,
    Rmse,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Pcc, MetricKind::Mae, MetricKind::Rmse];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricIntervals {
    pub pcc: Interval,
    pub mae: Interval,
    pub rmse: Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub pcc: f64,
    pub mae: f64,
    pub rmse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<MetricIntervals>,
}

fn check_lengths(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(StatsError::LengthMismatch(pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(())
}

fn pcc_of<I: Iterator<Item = (f64, f64)> + Clone>(pairs: I, n: f64) -> Result<f64> {
    let (sp, st) = pairs.clone().fold((0.0, 0.0), |(a, b), (p, t)| (a + p, b + t));
    let (mp, mt) = (sp / n, st / n);
    let (mut cov, mut vp, mut vt) = (0.0, 0.0, 0.0);
    for (p, t) in pairs {
        cov += (p - mp) * (t - mt);
        vp += (p - mp) * (p - mp);
        vt += (t - mt) * (t - mt);
    }
    if vt <= 0.0 {
        return Err(StatsError::Constant("PCC (target)"));
    }
    if vp <= 0.0 {
        return Err(StatsError::Constant("PCC (prediction)"));
    }
    Ok((cov / (vp * vt).sqrt()).clamp(-1.0, 1.0))
}

fn value_of<I: Iterator<Item = (f64, f64)> + Clone>(kind: MetricKind, pairs: I, n: f64) -> Result<f64> {
    match kind {
        MetricKind::Pcc => pcc_of(pairs, n),
        MetricKind::Mae => Ok(pairs.map(|(p, t)| (p - t).abs()).sum::<f64>() / n),
        MetricKind::Rmse => Ok((pairs.map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n).sqrt()),
    }
}

/// A single metric over paired predictions and targets.
pub fn metric_value(pred: &[f64], target: &[f64], kind: MetricKind) -> Result<f64> {
    check_lengths(pred, target)?;
    let pairs = pred.iter().copied().zip(target.iter().copied());
    value_of(kind, pairs, pred.len() as f64)
}

/// PCC, MAE and RMSE. A constant target or prediction makes PCC undefined and
/// is reported as an error.
pub fn regression_metrics(pred: &[f64], target: &[f64]) -> Result<Metrics> {
    Ok(Metrics {
        pcc: metric_value(pred, target, MetricKind::Pcc)?,
        mae: metric_value(pred, target, MetricKind::Mae)?,
        rmse: metric_value(pred, target, MetricKind::Rmse)?,
        ci: None,
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap interval for `kind` over resampled (pred, target)
/// pairs.
///
/// Replicate `r` draws from its own ChaCha8 stream (`seed`, stream `r`), so
/// the interval is identical under sequential and parallel execution. A
/// resample on which the metric is undefined (constant PCC input) is redrawn
/// from the same stream, up to 10 attempts per replicate.
pub fn bootstrap_ci(
    pred: &[f64],
    target: &[f64],
    kind: MetricKind,
    n_boot: usize,
    level: f64,
    seed: u64,
    exec: Execution,
) -> Result<Interval> {
    check_lengths(pred, target)?;
    if n_boot < 100 {
        return Err(StatsError::Invalid(format!("n_boot must be >= 100, got {n_boot}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::Invalid(format!("level must be in (0, 1), got {level}")));
    }
    let n = pred.len();
    let replicate = |r: usize| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let mut idx = vec![0usize; n];
        for _ in 0..MAX_ATTEMPTS {
            idx.iter_mut().for_each(|i| *i = rng.gen_range(0..n));
            let pairs = idx.iter().map(|&i| (pred[i], target[i]));
            match value_of(kind, pairs, n as f64) {
                Err(StatsError::Constant(_)) => continue,
                other => return other,
            }
        }
        Err(StatsError::DegenerateResample(r))
    };
    let mut values = exec.map_range(n_boot, replicate).into_iter().collect::<Result<Vec<f64>>>()?;
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(Interval { lower: quantile(&values, tail), upper: quantile(&values, 1.0 - tail), level })
}

impl MetricIntervals {
    /// Bootstrap intervals for all three metrics with a shared seed.
    pub fn bootstrap(
        pred: &[f64],
        target: &[f64],
        n_boot: usize,
        level: f64,
        seed: u64,
        exec: Execution,
    ) -> Result<Self> {
        let ci = |kind| bootstrap_ci(pred, target, kind, n_boot, level, seed, exec);
        Ok(MetricIntervals { pcc: ci(MetricKind::Pcc)?, mae: ci(MetricKind::Mae)?, rmse: ci(MetricKind::Rmse)? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let t = [1.0, 2.5, 4.0, 3.0];
        let m = regression_metrics(&t, &t).unwrap();
        assert!((m.pcc - 1.0).abs() < 1e-15);
        assert_eq!((m.mae, m.rmse), (0.0, 0.0));
    }

    #[test]
    fn negated_prediction() {
        let t = [-1.0, 0.0, 1.0, 2.0, -2.0];
        let p: Vec<f64> = t.iter().map(|x| -x).collect();
        assert!((metric_value(&p, &t, MetricKind::Pcc).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_example() {
        let m = regression_metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 4.0]).unwrap();
        assert!((m.mae - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.rmse - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((m.pcc - 0.75f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_and_length_errors() {
        assert_eq!(
            regression_metrics(&[1.0, 2.0], &[3.0, 3.0]),
            Err(StatsError::Constant("PCC (target)"))
        );
        assert_eq!(regression_metrics(&[1.0], &[1.0, 2.0]), Err(StatsError::LengthMismatch(1, 2)));
        assert_eq!(regression_metrics(&[], &[]), Err(StatsError::Empty));
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile(&xs, 0.5), 1.5);
        assert_eq!(quantile(&xs, 0.0), 0.0);
        assert_eq!(quantile(&xs, 1.0), 3.0);
    }

    #[test]
    fn exact_prediction_has_zero_mae_interval() {
        let t: Vec<f64> = (0..50).map(|i| 1.0 + (i % 9) as f64 * 0.5).collect();
        let ci = bootstrap_ci(&t, &t, MetricKind::Mae, 200, 0.95, 1, Execution::Sequential).unwrap();
        assert_eq!((ci.lower, ci.upper), (0.0, 0.0));
    }

    #[test]
    fn strategies_agree() {
        let t: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() * 2.0 + 3.0).collect();
        let p: Vec<f64> = t.iter().enumerate().map(|(i, x)| x + ((i * 7) % 5) as f64 * 0.1).collect();
        for kind in MetricKind::ALL {
            let a = bootstrap_ci(&p, &t, kind, 300, 0.95, 9, Execution::Sequential).unwrap();
            let b = bootstrap_ci(&p, &t, kind, 300, 0.95, 9, Execution::Parallel).unwrap();
            assert_eq!(a, b);
            let point = metric_value(&p, &t, kind).unwrap();
            assert!(a.lower <= point && point <= a.upper, "{kind:?}");
        }
    }

    #[test]
    fn small_pcc_sample_redraws() {
        // Three pairs, two of them with equal target: many resamples are
        // constant and must be redrawn.
        let ci = bootstrap_ci(
            &[1.0, 2.0, 3.0],
            &[1.0, 1.0, 2.0],
            MetricKind::Pcc,
            200,
            0.9,
            3,
            Execution::Sequential,
        )
        .unwrap();
        assert!(ci.lower <= ci.upper);
    }

    #[test]
    fn bootstrap_argument_checks() {
        let t = [1.0, 2.0, 3.0];
        assert!(bootstrap_ci(&t, &t, MetricKind::Mae, 10, 0.95, 0, Execution::Sequential).is_err());
        assert!(bootstrap_ci(&t, &t, MetricKind::Mae, 100, 1.0, 0, Execution::Sequential).is_err());
    }
}
