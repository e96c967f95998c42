use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use super::stft::{ComplexSpectrogram, MagnitudeSpectrogram, StftEngine};
use super::{Result, Waveform};

/// Griffin-Lim phase reconstruction.
///
/// With `momentum == 0` this is the classical alternating projection, whose
/// consistency error never increases. A positive momentum gives the "fast"
/// variant, which usually converges quicker but loses that guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GriffinLim {
    pub n_iters: usize,
    pub momentum: f64,
    /// Seeds the initial random phase.
    pub seed: u64,
}

impl Default for GriffinLim {
    fn default() -> Self {
        Self { n_iters: 32, momentum: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct GriffinLimOutput {
    pub waveform: Waveform,
    /// `errors[k]` is `‖mag − |STFT(x_{k+1})|‖_F` after iteration `k + 1`,
    /// measured over the full two-sided spectrum.
    pub errors: Vec<f64>,
}

impl GriffinLim {
    pub fn with_iters(n_iters: usize) -> Self {
        Self { n_iters, ..Self::default() }
    }

    pub fn run(&self, mag: &MagnitudeSpectrogram) -> Result<GriffinLimOutput> {
        let n_iters = self.n_iters.max(1);
        let engine = StftEngine::new(mag.params)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let tau = std::f64::consts::TAU;

        let mut current = ComplexSpectrogram {
            data: mag
                .data
                .iter()
                .map(|&m| Complex64::from_polar(m, rng.gen::<f64>() * tau))
                .collect(),
            n_frames: mag.n_frames,
            params: mag.params,
            sample_rate: mag.sample_rate,
            signal_len: mag.signal_len,
        };
        let mut previous: Option<ComplexSpectrogram> = None;
        let mut errors = Vec::with_capacity(n_iters);
        let mut samples = Vec::new();

        for _ in 0..n_iters {
            for (c, &m) in current.data.iter_mut().zip(&mag.data) {
                *c = Complex64::from_polar(m, c.arg());
            }
            samples = engine.synthesize(&current);
            let rebuilt = engine.analyze(&samples, mag.sample_rate)?;
            errors.push(consistency_error(mag, &rebuilt));

            current = if self.momentum == 0.0 {
                rebuilt
            } else {
                let next = match &previous {
                    Some(prev) => ComplexSpectrogram {
                        data: rebuilt
                            .data
                            .iter()
                            .zip(&prev.data)
                            .map(|(t, p)| t + (t - p) * self.momentum)
                            .collect(),
                        ..rebuilt.clone()
                    },
                    None => rebuilt.clone(),
                };
                previous = Some(rebuilt);
                next
            };
        }

        Ok(GriffinLimOutput { waveform: Waveform::new(samples, mag.sample_rate)?, errors })
    }
}

/// Frobenius distance between a target magnitude and the magnitude of an
/// STFT, taken over the full spectrum: interior bins of the one-sided
/// representation count twice.
pub(crate) fn consistency_error(mag: &MagnitudeSpectrogram, spec: &ComplexSpectrogram) -> f64 {
    let bins = mag.n_bins();
    let nyquist = bins - 1;
    mag.data
        .iter()
        .zip(&spec.data)
        .enumerate()
        .map(|(i, (m, c))| {
            let k = i % bins;
            let weight = if k == 0 || k == nyquist { 1.0 } else { 2.0 };
            let d = m - c.norm();
            weight * d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Classical Griffin-Lim with default settings and `n_iters` iterations.
pub fn griffin_lim(mag: &MagnitudeSpectrogram, n_iters: usize) -> Result<Waveform> {
    Ok(GriffinLim::with_iters(n_iters).run(mag)?.waveform)
}
