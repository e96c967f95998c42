//! Reference implementations used as test oracles. Each one takes the most
//! direct route to the definition (coincidence matrices, O(n^2) ranking,
//! explicit residuals, plain DFT) and shares no code with the library.

#![allow(dead_code)]

use std::f64::consts::PI;

use esmos_core::densemos::{loss_and_grads_masked, DropoutMasks, LayerEmbeddings, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random raters × groups matrix of integer scores in 1..=5 with roughly
/// `missing` of the cells blank.
pub fn random_matrix(rng: &mut ChaCha8Rng, raters: usize, groups: usize, missing: f64) -> Vec<Vec<Option<f64>>> {
    (0..raters)
        .map(|_| {
            (0..groups)
                .map(|_| (rng.gen::<f64>() >= missing).then(|| rng.gen_range(1..=5) as f64))
                .collect()
        })
        .collect()
}

fn columns(rows: &[Vec<Option<f64>>]) -> Vec<Vec<f64>> {
    let g = rows[0].len();
    (0..g).map(|j| rows.iter().filter_map(|r| r[j]).collect()).collect()
}

/// Krippendorff's alpha from the coincidence matrix. `ordinal` selects the
/// ordinal distance, otherwise squared difference.
pub fn alpha_coincidence(rows: &[Vec<Option<f64>>], ordinal: bool) -> Option<f64> {
    let units: Vec<Vec<f64>> = columns(rows).into_iter().filter(|u| u.len() >= 2).collect();
    let mut values: Vec<f64> = units.iter().flatten().copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let v = values.len();
    let index = |x: f64| values.iter().position(|&y| y == x).unwrap();

    let mut o = vec![vec![0.0; v]; v];
    for u in &units {
        let m = u.len() as f64;
        for (i, &a) in u.iter().enumerate() {
            for (j, &b) in u.iter().enumerate() {
                if i != j {
                    o[index(a)][index(b)] += 1.0 / (m - 1.0);
                }
            }
        }
    }
    let nc: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = nc.iter().sum();
    let delta = |c: usize, k: usize| -> f64 {
        if ordinal {
            let (lo, hi) = (c.min(k), c.max(k));
            let s: f64 = nc[lo..=hi].iter().sum::<f64>() - (nc[c] + nc[k]) / 2.0;
            s * s
        } else {
            (values[c] - values[k]).powi(2)
        }
    };
    let mut d_o = 0.0;
    let mut d_e = 0.0;
    for c in 0..v {
        for k in 0..v {
            d_o += o[c][k] * delta(c, k);
            d_e += nc[c] * nc[k] * delta(c, k);
        }
    }
    d_o /= n;
    d_e /= n * (n - 1.0);
    (d_e > 0.0).then(|| 1.0 - d_o / d_e)
}

/// ICC(2,1) with groups as targets, after group-mean imputation, from the
/// interaction residuals.
pub fn icc_residuals(rows: &[Vec<Option<f64>>]) -> f64 {
    let k = rows.len();
    let cols = columns(rows);
    let n = cols.len();
    let y: Vec<Vec<f64>> = (0..n)
        .map(|g| {
            let fill = cols[g].iter().sum::<f64>() / cols[g].len() as f64;
            (0..k).map(|r| rows[r][g].unwrap_or(fill)).collect()
        })
        .collect();
    let (nf, kf) = (n as f64, k as f64);
    let grand: f64 = y.iter().flatten().sum::<f64>() / (nf * kf);
    let row_mean: Vec<f64> = y.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let col_mean: Vec<f64> = (0..k).map(|r| y.iter().map(|t| t[r]).sum::<f64>() / nf).collect();
    let mut sse = 0.0;
    for g in 0..n {
        for r in 0..k {
            sse += (y[g][r] - row_mean[g] - col_mean[r] + grand).powi(2);
        }
    }
    let msr = kf * row_mean.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (nf - 1.0);
    let msc = nf * col_mean.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (kf - 1.0);
    let mse = sse / ((nf - 1.0) * (kf - 1.0));
    (msr - mse) / (msr + (kf - 1.0) * mse + kf * (msc - mse) / nf)
}

/// Upper tail of chi-square from the closed-form incomplete gamma series
/// for integer and half-integer shape.
pub fn chi2_sf_closed(x: f64, df: usize) -> f64 {
    let h = x / 2.0;
    if df.is_multiple_of(2) {
        let mut term = 1.0;
        let mut sum = 1.0;
        for i in 1..df / 2 {
            term *= h / i as f64;
            sum += term;
        }
        (-h).exp() * sum
    } else {
        // Q(1/2, h) = erfc(sqrt h); Q(s + 1, h) = Q(s, h) + h^s e^-h / Γ(s + 1)
        let mut q = statrs::function::erf::erfc(h.sqrt());
        let mut s = 0.5;
        let mut gamma_s1 = 0.5 * PI.sqrt(); // Γ(3/2)
        for _ in 0..(df - 1) / 2 {
            q += h.powf(s) * (-h).exp() / gamma_s1;
            s += 1.0;
            gamma_s1 *= s;
        }
        q
    }
}

/// Kruskal-Wallis H and p with O(n^2) mid-ranks.
pub fn kruskal_brute(groups: &[Vec<f64>]) -> (f64, f64) {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let rank = |x: f64| {
        let less = all.iter().filter(|&&y| y < x).count() as f64;
        let eq = all.iter().filter(|&&y| y == x).count() as f64;
        less + (eq + 1.0) / 2.0
    };
    let mut h = 0.0;
    for g in groups {
        let r: f64 = g.iter().map(|&x| rank(x)).sum();
        h += r * r / g.len() as f64;
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
    let mut distinct = all.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let ties: f64 = distinct
        .iter()
        .map(|&v| {
            let t = all.iter().filter(|&&y| y == v).count() as f64;
            t * t * t - t
        })
        .sum();
    let c = 1.0 - ties / (n * n * n - n);
    if c <= 0.0 {
        return (0.0, 1.0);
    }
    h /= c;
    (h, chi2_sf_closed(h, groups.len() - 1))
}

pub fn phi(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / 2f64.sqrt())
}

/// Studentized-range survival at infinite df by composite Simpson on a
/// fixed fine grid.
pub fn range_sf_simpson(q: f64, k: usize) -> f64 {
    let (a, b) = (-12.0, 12.0 + q);
    let m = 40_000;
    let h = (b - a) / m as f64;
    let f = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt() * (phi(z) - phi(z - q)).powi(k as i32 - 1);
    let mut s = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    1.0 - k as f64 * s * h / 3.0
}

/// Tukey-Kramer pairs `(i, j, q, p)` from the textbook formulas.
pub fn tukey_direct(groups: &[Vec<f64>]) -> Vec<(usize, usize, f64, f64)> {
    let k = groups.len();
    let mean = |g: &Vec<f64>| g.iter().sum::<f64>() / g.len() as f64;
    let n: usize = groups.iter().map(Vec::len).sum();
    let ssw: f64 = groups.iter().map(|g| {
        let m = mean(g);
        g.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
    }).sum();
    let msw = ssw / (n - k) as f64;
    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let se = (msw / 2.0 * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64)).sqrt();
            let q = (mean(&groups[i]) - mean(&groups[j])).abs() / se;
            out.push((i, j, q, range_sf_simpson(q, k)));
        }
    }
    out
}

/// (PCC, MAE, RMSE) using raw-sum formulas.
pub fn metrics_raw(p: &[f64], t: &[f64]) -> (f64, f64, f64) {
    let n = p.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy, mut abs, mut sq) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in p.iter().zip(t) {
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
        abs += (x - y).abs();
        sq += (x - y) * (x - y);
    }
    let pcc = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
    (pcc, abs / n, (sq / n).sqrt())
}

/// Magnitudes of the plain O(n^2) DFT, bins 0..=n/2.
pub fn dft_magnitudes(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let a = -2.0 * PI * (k * t) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

pub fn tone(freq: f64, sr: u32, len: usize) -> Vec<f64> {
    (0..len).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / sr as f64).sin()).collect()
}

/// Outcome of a finite-difference comparison over a set of coordinates.
#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub checked: usize,
    /// Coordinates whose ±ε perturbation flipped a ReLU and were skipped.
    pub kinks: usize,
    pub max_rel: f64,
}

/// Denominator floor for the relative error: below this gradient magnitude
/// the central difference is dominated by rounding.
pub const GRAD_FLOOR: f64 = 1e-7;
pub const FD_EPS: f64 = 1e-5;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

fn relu_pattern(params: &ModelParams, batch: &[(&LayerEmbeddings, f64)], masks: &[DropoutMasks]) -> Vec<bool> {
    use esmos_core::densemos::{forward, Mode};
    batch
        .iter()
        .zip(masks)
        .flat_map(|((e, _), m)| {
            let c = forward(params, e, Mode::Train(m)).unwrap();
            c.h1.iter().chain(&c.h2).map(|h| *h > 0.0).collect::<Vec<_>>()
        })
        .collect()
}

/// Compares the analytic gradient with central differences on `coords`.
pub fn check_gradients(
    params: &ModelParams,
    batch: &[(&LayerEmbeddings, f64)],
    masks: &[DropoutMasks],
    coords: &[usize],
) -> GradCheck {
    let (_, grad) = loss_and_grads_masked(params, batch, Some(masks)).unwrap();
    let mut out = GradCheck::default();
    let mut p = params.clone();
    for &i in coords {
        let x = params.values()[i];
        p.values_mut()[i] = x + FD_EPS;
        let plus = loss_and_grads_masked(&p, batch, Some(masks)).unwrap().0;
        let pat_plus = relu_pattern(&p, batch, masks);
        p.values_mut()[i] = x - FD_EPS;
        let minus = loss_and_grads_masked(&p, batch, Some(masks)).unwrap().0;
        let pat_minus = relu_pattern(&p, batch, masks);
        p.values_mut()[i] = x;
        if pat_plus != pat_minus {
            out.kinks += 1;
            continue;
        }
        let fd = (plus - minus) / (2.0 * FD_EPS);
        out.checked += 1;
        out.max_rel = out.max_rel.max(rel_err(grad[i], fd));
    }
    out
}

/// Random parameters away from the initialisation: α of both signs,
/// nonzero biases, and weights scaled so most units are active.
pub fn random_params(shape: esmos_core::densemos::ModelShape, rng: &mut ChaCha8Rng) -> ModelParams {
    let mut p = ModelParams::init(shape, rng.gen()).unwrap();
    let n_alpha = p.n_alphas();
    for (i, v) in p.values_mut().iter_mut().enumerate() {
        if i < n_alpha {
            *v = rng.gen_range(0.05..1.0) * if rng.gen_bool(0.3) { -1.0 } else { 1.0 };
        } else {
            *v += rng.gen_range(-0.05..0.05);
        }
    }
    p
}

pub fn random_embedding(n_layers: usize, dim: usize, rng: &mut ChaCha8Rng) -> LayerEmbeddings {
    LayerEmbeddings::from_fn(n_layers, dim, |_, _| rng.gen_range(-1.0..1.0)).unwrap()
}

pub fn stimulus(id: &str, system: &str, speaker: &str, duration_s: f64) -> esmos_core::corpus::Stimulus {
    esmos_core::corpus::Stimulus {
        stimulus_id: id.into(),
        audio_path: format!("audio/{id}.wav").into(),
        system_id: system.into(),
        speaker_id: speaker.into(),
        gender: esmos_core::corpus::Gender::F,
        dialect: "es-AR".into(),
        augmentation: esmos_core::corpus::Augmentation::None,
        source_stimulus_id: None,
        text: "el perro come pan".into(),
        duration_s,
        quality_tier: None,
    }
}

pub fn rating(session: &str, stimulus: &str, score: u8, response_ms: u64) -> esmos_core::ratings::Rating {
    esmos_core::ratings::Rating {
        session_id: session.into(),
        stimulus_id: stimulus.into(),
        score,
        listen_ms: response_ms,
        response_ms,
        batch_index: 0,
        timestamp: "2024-05-01T12:00:00Z".parse().unwrap(),
    }
}

/// Four sessions built to trip each exclusion rule:
///
/// - `ok`: clean.
/// - `fast`: one answer quicker than half the clip (timing).
/// - `bad`: the human clip scored below the augmented one (whole session).
/// - `both`: the only failing human rating is also too fast, so timing
///   removes it and the session survives the participant rule.
///
/// Returns the manifest, the ratings, and the expected (timing, participant,
/// valid) counts.
pub fn protocol_fixture() -> (esmos_core::corpus::Manifest, Vec<esmos_core::ratings::Rating>, (usize, usize, usize)) {
    use esmos_core::corpus::{Augmentation, Manifest};
    let mut vtlp = stimulus("t1_vtlp", "polly", "p1-VTLP", 2.0);
    vtlp.augmentation = Augmentation::Vtlp;
    vtlp.source_stimulus_id = Some("t1".into());
    let manifest = Manifest::new(vec![
        stimulus("t1", "polly", "p1", 2.0),
        vtlp,
        stimulus("h1", "human", "h1", 3.0),
        stimulus("h2", "human", "h2", 3.0),
    ])
    .unwrap();
    let ratings = vec![
        rating("ok", "h1", 5, 3000),
        rating("ok", "t1_vtlp", 2, 3000),
        rating("ok", "t1", 3, 2000),
        rating("fast", "t1", 4, 500),
        rating("fast", "h1", 5, 3000),
        rating("fast", "t1_vtlp", 3, 3000),
        rating("bad", "h1", 2, 3000),
        rating("bad", "t1_vtlp", 4, 3000),
        rating("bad", "t1", 4, 2500),
        rating("both", "h1", 3, 100),
        rating("both", "t1_vtlp", 4, 3000),
        rating("both", "h2", 5, 3000),
    ];
    (manifest, ratings, (2, 3, 7))
}
