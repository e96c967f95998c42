use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, DenseMosError, EpochRecord, ModelParams, ModelShape, Result, TrainConfig};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DMOS";
const CHECKPOINT_VERSION: u16 = 1;
const HEADER_LEN: usize = 10;

/// Trained parameters together with the run that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    version: u16,
    shape: ModelShape,
    param_count: usize,
    best_epoch: usize,
    config: TrainConfig,
    history: Vec<EpochRecord>,
}

/// `model.dmos` → `model.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the binary parameter file and its JSON sidecar.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    if path.extension().is_some_and(|e| e == "json") {
        return Err(DenseMosError::Config("checkpoint path must not end in .json".into()));
    }
    if ckpt.history.is_empty() {
        return Err(DenseMosError::Sidecar("empty training history".into()));
    }
    let values = ckpt.params.values();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * values.len());
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(io_err(path))?;

    let sidecar = Sidecar {
        version: CHECKPOINT_VERSION,
        shape: ckpt.params.shape(),
        param_count: values.len(),
        best_epoch: ckpt.best_epoch,
        config: ckpt.config.clone(),
        history: ckpt.history.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| DenseMosError::Sidecar(e.to_string()))?;
    let side = sidecar_path(path);
    fs::write(&side, json + "\n").map_err(io_err(side))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(io_err(&side))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| DenseMosError::Sidecar(e.to_string()))?;
    if sidecar.history.is_empty() {
        return Err(DenseMosError::Sidecar("empty training history".into()));
    }

    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() < HEADER_LEN {
        return Err(DenseMosError::Truncated { path: path.into(), expected: HEADER_LEN, found: bytes.len() });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(DenseMosError::BadMagic { path: path.into(), found: magic });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(DenseMosError::Version { path: path.into(), version });
    }
    let count = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let expected = sidecar.shape.param_count();
    if count != expected || sidecar.param_count != expected {
        return Err(DenseMosError::Dimension { what: "parameter count", expected, found: count });
    }
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 4 * count {
        return Err(DenseMosError::Truncated {
            path: path.into(),
            expected: HEADER_LEN + 4 * count,
            found: bytes.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(Checkpoint {
        params: ModelParams::from_values(sidecar.shape, values)?,
        config: sidecar.config,
        history: sidecar.history,
        best_epoch: sidecar.best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckpt(shape: ModelShape) -> Checkpoint {
        let mut params = ModelParams::init(shape, 11).unwrap();
        params.round_to_f32();
        Checkpoint {
            params,
            config: TrainConfig::default(),
            history: vec![EpochRecord { epoch: 0, train_loss: 0.1, val_loss: 0.2 }],
            best_epoch: 0,
        }
    }

    #[test]
    fn default_shape_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.dmos");
        let c = ckpt(ModelShape::default());
        save_checkpoint(&path, &c).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 10 + 4 * 115_086);
        assert!(dir.path().join("model.json").is_file());
        assert_eq!(load_checkpoint(&path).unwrap(), c);
    }

    #[test]
    fn corrupted_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dmos");
        save_checkpoint(&path, &ckpt(ModelShape { n_layers: 2, dim: 3, hidden: 4 })).unwrap();
        let good = fs::read(&path).unwrap();

        let mut bad = good.clone();
        bad[1] = b'X';
        fs::write(&path, &bad).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(DenseMosError::BadMagic { .. })));

        let mut bad = good.clone();
        bad[6] += 1;
        fs::write(&path, &bad).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(DenseMosError::Dimension { .. })));

        let mut bad = good.clone();
        bad[4] = 9;
        fs::write(&path, &bad).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(DenseMosError::Version { version: 9, .. })));

        fs::write(&path, &good[..good.len() - 4]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(DenseMosError::Truncated { .. })));
    }

    #[test]
    fn json_path_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let c = ckpt(ModelShape { n_layers: 2, dim: 3, hidden: 4 });
        assert!(save_checkpoint(&dir.path().join("m.json"), &c).is_err());
    }
}
