use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    adam_step, forward, loss_and_grads, AdamState, Checkpoint, DenseMosError, LayerEmbeddings, Mode,
    ModelParams, ModelShape, Result, Sample, HIDDEN,
};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_alpha: f64,
    pub lr_mlp: f64,
    pub dropout_p: f64,
    pub patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_alpha: 0.001,
            lr_mlp: 0.0001,
            dropout_p: 0.6,
            patience: 40,
            batch_size: 32,
            max_epochs: 1000,
            hidden: HIDDEN,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DenseMosError::Config(m.to_string()));
        if !(self.lr_alpha > 0.0 && self.lr_mlp > 0.0) {
            return bad("learning rates must be > 0");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must be in [0, 1)");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.hidden == 0 {
            return bad("batch_size, max_epochs and hidden must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch loss with dropout active.
    pub train_loss: f64,
    /// Eval-mode loss on the validation set.
    pub val_loss: f64,
}

/// Eval-mode MSE on the normalised scale.
pub(crate) fn mean_loss(params: &ModelParams, samples: &[Sample], exec: Execution) -> Result<f64> {
    let errs = exec.try_map(samples, |s| {
        let o = forward(params, &s.embedding, Mode::Eval)?.output;
        let t = (s.label - 1.0) / 4.0;
        Ok::<f64, DenseMosError>((o - t) * (o - t))
    })?;
    Ok(errs.iter().sum::<f64>() / samples.len() as f64)
}

/// Trains from a seeded initialisation with Adam and early stopping on the
/// validation loss.
///
/// Training samples are put in stimulus-id order before the first shuffle,
/// so the result does not depend on the order they are passed in. The
/// returned parameters are those of the best validation epoch, rounded to
/// f32. Only validation is spread over `exec`; the update loop itself is
/// sequential, and the checkpoint is identical for either strategy.
pub fn train(train: &[Sample], val: &[Sample], config: &TrainConfig, exec: Execution) -> Result<Checkpoint> {
    config.validate()?;
    let first = train.first().ok_or(DenseMosError::EmptySet("training"))?;
    if val.is_empty() {
        return Err(DenseMosError::EmptySet("validation"));
    }
    let shape = ModelShape {
        n_layers: first.embedding.n_layers(),
        dim: first.embedding.dim(),
        hidden: config.hidden,
    };
    let mut params = ModelParams::init(shape, config.seed)?;
    let mut adam = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let mut order: Vec<usize> = (0..train.len()).collect();
    order.sort_by(|&a, &b| train[a].stimulus_id.cmp(&train[b].stimulus_id).then(a.cmp(&b)));

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&LayerEmbeddings, f64)> =
                chunk.iter().map(|&i| (&train[i].embedding, train[i].label)).collect();
            let (loss, grads) = loss_and_grads(&params, &batch, config.dropout_p, &mut rng)?;
            adam_step(&mut params, &grads, &mut adam, config)?;
            train_loss += loss * chunk.len() as f64;
        }
        train_loss /= train.len() as f64;
        let val_loss = mean_loss(&params, val, exec)?;
        history.push(EpochRecord { epoch, train_loss, val_loss });
        tracing::debug!(epoch, train_loss, val_loss, "epoch done");

        match &best {
            Some((b, _, _)) if val_loss >= *b => {}
            _ => best = Some((val_loss, epoch, params.clone())),
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.1);
        if epoch - best_epoch >= config.patience {
            tracing::info!(epoch, best_epoch, "early stopping");
            break;
        }
    }

    let (_, best_epoch, mut params) = best.expect("at least one epoch");
    params.round_to_f32();
    Ok(Checkpoint { params, config: config.clone(), history, best_epoch })
}
