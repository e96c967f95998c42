use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DenseMosError, LayerEmbeddings, Result, EMBED_DIM, HIDDEN, N_LAYERS};

/// Layer sizes. The default is the 13 × 768 → 128 → 128 → 1 network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub n_layers: usize,
    pub dim: usize,
    pub hidden: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self { n_layers: N_LAYERS, dim: EMBED_DIM, hidden: HIDDEN }
    }
}

// Start offsets into the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w_out: usize,
    b_out: usize,
    end: usize,
}

impl ModelShape {
    fn layout(&self) -> Layout {
        let h = self.hidden;
        let w1 = self.n_layers;
        let b1 = w1 + h * self.dim;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w_out = b2 + h;
        let b_out = w_out + h;
        Layout { w1, b1, w2, b2, w_out, b_out, end: b_out + 1 }
    }

    pub fn param_count(&self) -> usize {
        self.layout().end
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.dim == 0 || self.hidden == 0 {
            return Err(DenseMosError::Config(format!("degenerate shape {self:?}")));
        }
        Ok(())
    }
}

/// All trainable scalars in one flat vector, in checkpoint order:
/// `α`, `W1` (row-major, `[out][in]`), `b1`, `W2`, `b2`, `w_out`, `b_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    shape: ModelShape,
    values: Vec<f64>,
}

impl ModelParams {
    pub fn from_values(shape: ModelShape, values: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if values.len() != shape.param_count() {
            return Err(DenseMosError::Dimension {
                what: "parameter count",
                expected: shape.param_count(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DenseMosError::NonFinite(i));
        }
        Ok(Self { shape, values })
    }

    /// He-uniform weights, zero biases and equal layer weights `1 / n_layers`.
    pub fn init(shape: ModelShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let l = shape.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; l.end];
        values[..l.w1].fill(1.0 / shape.n_layers as f64);
        let mut he = |range: std::ops::Range<usize>, fan_in: usize| {
            let limit = (6.0 / fan_in as f64).sqrt();
            for v in &mut values[range] {
                *v = rng.gen_range(-limit..limit);
            }
        };
        he(l.w1..l.b1, shape.dim);
        he(l.w2..l.b2, shape.hidden);
        he(l.w_out..l.b_out, shape.hidden);
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Number of leading entries that are layer weights `α`.
    pub fn n_alphas(&self) -> usize {
        self.shape.n_layers
    }

    pub fn alphas(&self) -> &[f64] {
        &self.values[..self.shape.n_layers]
    }

    pub fn alphas_mut(&mut self) -> &mut [f64] {
        let n = self.shape.n_layers;
        &mut self.values[..n]
    }

    /// Normalised layer weights `|α_i| / Σ|α_j|`.
    pub fn layer_weights(&self) -> Result<Vec<f64>> {
        let s: f64 = self.alphas().iter().map(|a| a.abs()).sum();
        if s == 0.0 {
            return Err(DenseMosError::ZeroAlphas);
        }
        Ok(self.alphas().iter().map(|a| a.abs() / s).collect())
    }

    /// Rounds every value to the nearest f32, the precision of checkpoints.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.values {
            *v = f64::from(*v as f32);
        }
    }
}

/// Eq. 1 fusion: `Σ|α_i| f_i / Σ|α_i|`.
pub fn weighted_layer_average(emb: &LayerEmbeddings, alphas: &[f64]) -> Result<Vec<f64>> {
    if alphas.len() != emb.n_layers() {
        return Err(DenseMosError::Dimension {
            what: "layer weights",
            expected: emb.n_layers(),
            found: alphas.len(),
        });
    }
    let s: f64 = alphas.iter().map(|a| a.abs()).sum();
    if s == 0.0 {
        return Err(DenseMosError::ZeroAlphas);
    }
    let mut out = vec![0.0; emb.dim()];
    for (i, a) in alphas.iter().enumerate() {
        let w = a.abs() / s;
        if w == 0.0 {
            continue;
        }
        for (o, &x) in out.iter_mut().zip(emb.layer(i)) {
            *o += w * f64::from(x);
        }
    }
    Ok(out)
}

/// Inverted-dropout masks for the two hidden layers: each entry is 0 or
/// `1 / (1 - p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
}

impl DropoutMasks {
    pub fn sample<R: Rng>(hidden: usize, p: f64, rng: &mut R) -> Self {
        let keep = 1.0 / (1.0 - p);
        let mut draw = || (0..hidden).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
        let m1 = draw();
        let m2 = draw();
        Self { m1, m2 }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    /// No dropout; deterministic.
    Eval,
    Train(&'a DropoutMasks),
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub fused: Vec<f64>,
    /// Pre-activations of the hidden layers.
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    /// Post-ReLU, post-dropout activations.
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub logit: f64,
    /// Sigmoid output in (0, 1).
    pub output: f64,
}

impl ForwardCache {
    /// Output mapped to the MOS scale, `1 + 4 o`.
    pub fn prediction(&self) -> f64 {
        1.0 + 4.0 * self.output
    }
}

// Kept off exactly 0 and 1, which f64 reaches for |x| > 37, so the MOS
// prediction never lands on the scale endpoints.
const OUTPUT_MARGIN: f64 = 1e-12;

fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(OUTPUT_MARGIN, 1.0 - OUTPUT_MARGIN)
}

fn check_embedding(shape: &ModelShape, emb: &LayerEmbeddings) -> Result<()> {
    if emb.n_layers() != shape.n_layers || emb.dim() != shape.dim {
        return Err(DenseMosError::Dimension {
            what: "embedding shape",
            expected: shape.n_layers * shape.dim,
            found: emb.n_layers() * emb.dim(),
        });
    }
    Ok(())
}

fn affine_relu(w: &[f64], b: &[f64], x: &[f64], mask: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
    let n_in = x.len();
    let pre: Vec<f64> = b
        .iter()
        .enumerate()
        .map(|(j, bj)| bj + w[j * n_in..(j + 1) * n_in].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let act = pre
        .iter()
        .enumerate()
        .map(|(j, &h)| {
            let r = h.max(0.0);
            mask.map_or(r, |m| r * m[j])
        })
        .collect();
    (pre, act)
}

pub fn forward(params: &ModelParams, emb: &LayerEmbeddings, mode: Mode<'_>) -> Result<ForwardCache> {
    let shape = params.shape;
    check_embedding(&shape, emb)?;
    let l = shape.layout();
    let v = &params.values;
    let (m1, m2) = match mode {
        Mode::Eval => (None, None),
        Mode::Train(m) => {
            if m.m1.len() != shape.hidden || m.m2.len() != shape.hidden {
                return Err(DenseMosError::Dimension {
                    what: "dropout mask",
                    expected: shape.hidden,
                    found: m.m1.len().min(m.m2.len()),
                });
            }
            (Some(m.m1.as_slice()), Some(m.m2.as_slice()))
        }
    };
    let fused = weighted_layer_average(emb, &v[..l.w1])?;
    let (h1, a1) = affine_relu(&v[l.w1..l.b1], &v[l.b1..l.w2], &fused, m1);
    let (h2, a2) = affine_relu(&v[l.w2..l.b2], &v[l.b2..l.w_out], &a1, m2);
    let logit = v[l.b_out] + v[l.w_out..l.b_out].iter().zip(&a2).map(|(a, b)| a * b).sum::<f64>();
    Ok(ForwardCache { fused, h1, h2, a1, a2, logit, output: sigmoid(logit) })
}

fn normalized_label(label: f64) -> Result<f64> {
    if !(1.0..=5.0).contains(&label) {
        return Err(DenseMosError::Label(label));
    }
    Ok((label - 1.0) / 4.0)
}

/// Mean squared error between the sigmoid output and `(label - 1) / 4`,
/// with its gradient for every parameter.
///
/// `masks` fixes the dropout pattern per item; `None` runs without
/// dropout.
pub fn loss_and_grads_masked(
    params: &ModelParams,
    batch: &[(&LayerEmbeddings, f64)],
    masks: Option<&[DropoutMasks]>,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(DenseMosError::EmptyBatch);
    }
    if let Some(m) = masks {
        if m.len() != batch.len() {
            return Err(DenseMosError::Dimension { what: "mask count", expected: batch.len(), found: m.len() });
        }
    }
    let shape = params.shape;
    let l = shape.layout();
    let v = &params.values;
    let (h, dim) = (shape.hidden, shape.dim);
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; l.end];
    let mut loss = 0.0;

    let alphas = &v[..l.w1];
    let sum_abs: f64 = alphas.iter().map(|a| a.abs()).sum();

    for (idx, &(emb, label)) in batch.iter().enumerate() {
        let target = normalized_label(label)?;
        let mask = masks.map(|m| &m[idx]);
        let c = forward(params, emb, mask.map_or(Mode::Eval, Mode::Train))?;
        let err = c.output - target;
        loss += err * err * scale;

        let dz = 2.0 * err * scale * c.output * (1.0 - c.output);
        grad[l.b_out] += dz;
        let mut dh2 = vec![0.0; h];
        for j in 0..h {
            grad[l.w_out + j] += dz * c.a2[j];
            if c.h2[j] > 0.0 {
                dh2[j] = dz * v[l.w_out + j] * mask.map_or(1.0, |m| m.m2[j]);
            }
        }

        let mut da1 = vec![0.0; h];
        for (j, &g) in dh2.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[l.b2 + j] += g;
            let row = l.w2 + j * h;
            for k in 0..h {
                grad[row + k] += g * c.a1[k];
                da1[k] += g * v[row + k];
            }
        }

        let mut df = vec![0.0; dim];
        for j in 0..h {
            if c.h1[j] <= 0.0 {
                continue;
            }
            let g = da1[j] * mask.map_or(1.0, |m| m.m1[j]);
            if g == 0.0 {
                continue;
            }
            grad[l.b1 + j] += g;
            let row = l.w1 + j * dim;
            for d in 0..dim {
                grad[row + d] += g * c.fused[d];
                df[d] += g * v[row + d];
            }
        }

        // f = N / S with N = Σ|α_i| f_i, S = Σ|α_i|, so
        // ∂f/∂α_i = sign(α_i) (f_i - f) / S.
        for (i, a) in alphas.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            let layer = emb.layer(i);
            let dot: f64 = (0..dim).map(|d| df[d] * (f64::from(layer[d]) - c.fused[d])).sum();
            grad[i] += a.signum() * dot / sum_abs;
        }
    }
    Ok((loss, grad))
}

/// [`loss_and_grads_masked`] with fresh dropout masks (probability `p`)
/// drawn from `rng` in batch order.
pub fn loss_and_grads<R: Rng>(
    params: &ModelParams,
    batch: &[(&LayerEmbeddings, f64)],
    dropout_p: f64,
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    let masks: Vec<DropoutMasks> =
        (0..batch.len()).map(|_| DropoutMasks::sample(params.shape.hidden, dropout_p, rng)).collect();
    loss_and_grads_masked(params, batch, Some(&masks))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelShape {
        ModelShape { n_layers: 4, dim: 6, hidden: 5 }
    }

    fn emb(shape: ModelShape, seed: u64) -> LayerEmbeddings {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LayerEmbeddings::from_fn(shape.n_layers, shape.dim, |_, _| rng.gen_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn default_parameter_count() {
        assert_eq!(ModelShape::default().param_count(), 115_086);
        assert_eq!(ModelParams::init(ModelShape::default(), 3).unwrap().len(), 115_086);
    }

    #[test]
    fn init_is_seeded() {
        let a = ModelParams::init(small(), 1).unwrap();
        assert_eq!(a, ModelParams::init(small(), 1).unwrap());
        assert_ne!(a, ModelParams::init(small(), 2).unwrap());
        assert!(a.alphas().iter().all(|&x| x == 0.25));
    }

    #[test]
    fn fusion_cases() {
        let s = small();
        let e = emb(s, 0);
        let mean = weighted_layer_average(&e, &[1.0; 4]).unwrap();
        for (d, got) in mean.iter().enumerate() {
            let m: f64 = (0..4).map(|l| f64::from(e.layer(l)[d])).sum::<f64>() / 4.0;
            assert!((got - m).abs() < 1e-15);
        }
        let one = weighted_layer_average(&e, &[0.0, 0.0, 2.5, 0.0]).unwrap();
        assert!(one.iter().zip(e.layer(2)).all(|(a, &b)| *a == f64::from(b)));
        let pos = weighted_layer_average(&e, &[0.3, 1.0, 0.2, 2.0]).unwrap();
        let neg = weighted_layer_average(&e, &[-0.3, -1.0, 0.2, -2.0]).unwrap();
        assert_eq!(pos, neg);
        assert!(matches!(weighted_layer_average(&e, &[0.0; 4]), Err(DenseMosError::ZeroAlphas)));
    }

    #[test]
    fn zero_weights_predict_three() {
        let s = small();
        let mut p = ModelParams::init(s, 0).unwrap();
        let l = s.layout();
        p.values_mut()[l.w1..].fill(0.0);
        let c = forward(&p, &emb(s, 1), Mode::Eval).unwrap();
        assert_eq!(c.prediction(), 3.0);
    }

    #[test]
    fn perfect_fit_has_zero_mlp_gradient() {
        let s = small();
        let p = ModelParams::init(s, 5).unwrap();
        let e = emb(s, 2);
        let label = forward(&p, &e, Mode::Eval).unwrap().prediction();
        let (loss, g) = loss_and_grads_masked(&p, &[(&e, label)], None).unwrap();
        assert!(loss < 1e-28);
        assert!(g.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn duplicated_batch_same_loss_and_grads() {
        let s = small();
        let p = ModelParams::init(s, 5).unwrap();
        let (e1, e2) = (emb(s, 1), emb(s, 2));
        let (l1, g1) = loss_and_grads_masked(&p, &[(&e1, 2.0), (&e2, 4.5)], None).unwrap();
        let (l2, g2) =
            loss_and_grads_masked(&p, &[(&e1, 2.0), (&e2, 4.5), (&e1, 2.0), (&e2, 4.5)], None).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        assert!(g1.iter().zip(&g2).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn batch_errors() {
        let p = ModelParams::init(small(), 0).unwrap();
        let e = emb(small(), 0);
        assert!(matches!(loss_and_grads_masked(&p, &[], None), Err(DenseMosError::EmptyBatch)));
        assert!(matches!(loss_and_grads_masked(&p, &[(&e, 5.5)], None), Err(DenseMosError::Label(_))));
        let wrong = emb(ModelShape { n_layers: 3, dim: 6, hidden: 5 }, 0);
        assert!(matches!(forward(&p, &wrong, Mode::Eval), Err(DenseMosError::Dimension { .. })));
    }

    #[test]
    fn masks_use_inverted_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = DropoutMasks::sample(1000, 0.6, &mut rng);
        assert!(m.m1.iter().all(|&x| x == 0.0 || (x - 2.5).abs() < 1e-15));
        let kept = m.m1.iter().filter(|&&x| x > 0.0).count();
        assert!((330..470).contains(&kept), "{kept}");
    }
}
