use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{forward, io_err, DenseMosError, Mode, ModelParams, Result, Sample};
use crate::exec::Execution;
use crate::stats::{regression_metrics, MetricIntervals, Metrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub stimulus_id: String,
    pub predicted: f64,
    pub target: f64,
}

/// Bootstrap settings; `n_boot = 0` skips the confidence intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub n_boot: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { n_boot: 1000, level: 0.95, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub predictions: Vec<Prediction>,
}

/// Eval-mode MOS predictions, in input order.
pub fn predict(params: &ModelParams, samples: &[Sample], exec: Execution) -> Result<Vec<Prediction>> {
    exec.try_map(samples, |s| {
        Ok(Prediction {
            stimulus_id: s.stimulus_id.clone(),
            predicted: forward(params, &s.embedding, Mode::Eval)?.prediction(),
            target: s.label,
        })
    })
}

/// Predictions plus PCC, MAE and RMSE on the 1..5 scale.
pub fn evaluate(
    params: &ModelParams,
    samples: &[Sample],
    options: &EvalOptions,
    exec: Execution,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(DenseMosError::EmptySet("test"));
    }
    let predictions = predict(params, samples, exec)?;
    let pred: Vec<f64> = predictions.iter().map(|p| p.predicted).collect();
    let target: Vec<f64> = predictions.iter().map(|p| p.target).collect();
    let mut metrics = regression_metrics(&pred, &target)?;
    if options.n_boot > 0 {
        metrics.ci = Some(MetricIntervals::bootstrap(
            &pred,
            &target,
            options.n_boot,
            options.level,
            options.seed,
            exec,
        )?);
    }
    Ok(Evaluation { metrics, predictions })
}

/// One JSON object per line.
pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let mut out = String::new();
    for p in predictions {
        out.push_str(&serde_json::to_string(p).expect("plain struct serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}
