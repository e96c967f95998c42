use std::path::Path;

use super::{read_embedding, DenseMosError, LayerEmbeddings, Result};
use crate::corpus::{Split, SplitAssignment};
use crate::exec::Execution;
use crate::ratings::{per_stimulus_mos, Rating};

/// One training or evaluation item: an embedding and its MOS label.
#[derive(Debug, Clone)]
pub struct Sample {
    pub stimulus_id: String,
    pub embedding: LayerEmbeddings,
    pub label: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SplitSamples {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Reads `<emb_dir>/<stimulus_id>.emb1` for every labelled id.
pub fn load_samples(labels: &[(String, f64)], emb_dir: &Path, exec: Execution) -> Result<Vec<Sample>> {
    exec.try_map(labels, |(id, label)| {
        let path = emb_dir.join(format!("{id}.emb1"));
        if !path.is_file() {
            return Err(DenseMosError::MissingEmbedding { id: id.clone(), path });
        }
        Ok(Sample { stimulus_id: id.clone(), embedding: read_embedding(&path)?, label: *label })
    })
}

/// Labels every split member with its mean rating and loads the
/// embeddings. Stimuli without any rating are skipped; ids within a split
/// are in sorted order.
pub fn split_samples(
    ratings: &[Rating],
    split: &SplitAssignment,
    emb_dir: &Path,
    exec: Execution,
) -> Result<SplitSamples> {
    let mos = per_stimulus_mos(ratings);
    let labels = |which: Split| -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = split
            .ids(which)
            .filter_map(|id| mos.get(id).map(|(m, _)| (id.to_string(), *m)))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    };
    Ok(SplitSamples {
        train: load_samples(&labels(Split::Train), emb_dir, exec)?,
        val: load_samples(&labels(Split::Val), emb_dir, exec)?,
        test: load_samples(&labels(Split::Test), emb_dir, exec)?,
    })
}
