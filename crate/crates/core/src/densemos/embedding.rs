use std::fs;
use std::path::Path;

use super::{io_err, DenseMosError, Result, EMBED_DIM, N_LAYERS};

pub const EMB_MAGIC: [u8; 4] = *b"EMB1";
pub const EMB_VERSION: u16 = 1;
const FLAG_TIME_AVERAGED: u32 = 1;
const HEADER_LEN: usize = 16;

/// Time-averaged encoder outputs, one row per layer (layer 0 is the
/// convolutional front end).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEmbeddings {
    n_layers: usize,
    dim: usize,
    data: Vec<f32>,
}

impl LayerEmbeddings {
    pub fn new(n_layers: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n_layers * dim {
            return Err(DenseMosError::Dimension {
                what: "embedding values",
                expected: n_layers * dim,
                found: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(DenseMosError::NonFinite(i));
        }
        Ok(Self { n_layers, dim, data })
    }

    pub fn from_fn(n_layers: usize, dim: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(n_layers * dim);
        for l in 0..n_layers {
            for d in 0..dim {
                data.push(f(l, d));
            }
        }
        Self::new(n_layers, dim, data)
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layer(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// Writes an EMB1 file. Only the standard 13 × 768 shape can be written.
pub fn write_embedding(path: &Path, emb: &LayerEmbeddings) -> Result<()> {
    if emb.n_layers != N_LAYERS || emb.dim != EMBED_DIM {
        return Err(DenseMosError::Dimension {
            what: "embedding shape",
            expected: N_LAYERS * EMBED_DIM,
            found: emb.n_layers * emb.dim,
        });
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * emb.data.len());
    buf.extend_from_slice(&EMB_MAGIC);
    buf.extend_from_slice(&EMB_VERSION.to_le_bytes());
    buf.extend_from_slice(&(N_LAYERS as u16).to_le_bytes());
    buf.extend_from_slice(&(EMBED_DIM as u32).to_le_bytes());
    buf.extend_from_slice(&FLAG_TIME_AVERAGED.to_le_bytes());
    for v in &emb.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(io_err(path))
}

pub fn read_embedding(path: &Path) -> Result<LayerEmbeddings> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let truncated = |found| DenseMosError::Truncated {
        path: path.to_path_buf(),
        expected: HEADER_LEN + 4 * N_LAYERS * EMBED_DIM,
        found,
    };
    if bytes.len() < HEADER_LEN {
        return Err(truncated(bytes.len()));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != EMB_MAGIC {
        return Err(DenseMosError::BadMagic { path: path.to_path_buf(), found: magic });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != EMB_VERSION {
        return Err(DenseMosError::Version { path: path.to_path_buf(), version });
    }
    let n_layers = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    if n_layers != N_LAYERS {
        return Err(DenseMosError::Dimension { what: "n_layers", expected: N_LAYERS, found: n_layers });
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if dim != EMBED_DIM {
        return Err(DenseMosError::Dimension { what: "dim", expected: EMBED_DIM, found: dim });
    }
    // flags (bytes 12..16) are informational

    let payload = &bytes[HEADER_LEN..];
    let want = 4 * N_LAYERS * EMBED_DIM;
    if payload.len() < want {
        return Err(truncated(bytes.len()));
    }
    if payload.len() > want {
        return Err(DenseMosError::TrailingBytes { path: path.to_path_buf() });
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    LayerEmbeddings::new(N_LAYERS, EMBED_DIM, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64) -> LayerEmbeddings {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LayerEmbeddings::from_fn(N_LAYERS, EMBED_DIM, |_, _| rng.gen_range(-3.0..3.0)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.emb1");
        let e = random(4);
        write_embedding(&path, &e).unwrap();
        let back = read_embedding(&path).unwrap();
        assert!(e.as_slice().iter().zip(back.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(fs::metadata(&path).unwrap().len(), 16 + 4 * 13 * 768);
    }

    #[test]
    fn header_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.emb1");
        write_embedding(&path, &random(1)).unwrap();
        let good = fs::read(&path).unwrap();

        let mut bytes = good.clone();
        bytes[6] = 12;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_embedding(&path),
            Err(DenseMosError::Dimension { what: "n_layers", found: 12, .. })
        ));

        let mut bytes = good.clone();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_embedding(&path), Err(DenseMosError::BadMagic { .. })));

        fs::write(&path, &good[..good.len() - 3]).unwrap();
        assert!(matches!(read_embedding(&path), Err(DenseMosError::Truncated { .. })));

        fs::write(&path, &good[..10]).unwrap();
        assert!(matches!(read_embedding(&path), Err(DenseMosError::Truncated { .. })));
    }

    #[test]
    fn rejects_non_finite() {
        let mut data = vec![0.0f32; 26];
        data[7] = f32::NAN;
        assert!(matches!(LayerEmbeddings::new(13, 2, data), Err(DenseMosError::NonFinite(7))));
    }
}
