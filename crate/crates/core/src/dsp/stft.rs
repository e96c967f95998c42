use std::ops::Range;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{DspError, Result, StftParams, Waveform};

/// One-sided complex STFT, `n_frames × n_bins`, frame-major.
///
/// Frames start at multiples of `hop` with no centering. The tail is
/// zero-padded so the last frame reaches the final sample; `signal_len`
/// remembers the unpadded length for the inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub(crate) data: Vec<Complex64>,
    pub(crate) n_frames: usize,
    pub(crate) params: StftParams,
    pub(crate) sample_rate: u32,
    pub(crate) signal_len: usize,
}

impl ComplexSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.params.n_bins()
    }

    pub fn params(&self) -> StftParams {
        self.params
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        let b = self.n_bins();
        &self.data[t * b..(t + 1) * b]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex64] {
        let b = self.n_bins();
        &mut self.data[t * b..(t + 1) * b]
    }

    pub fn magnitude(&self) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram {
            data: self.data.iter().map(|c| c.norm()).collect(),
            n_frames: self.n_frames,
            params: self.params,
            sample_rate: self.sample_rate,
            signal_len: self.signal_len,
        }
    }
}

/// Non-negative magnitudes with the STFT geometry they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    pub(crate) data: Vec<f64>,
    pub(crate) n_frames: usize,
    pub(crate) params: StftParams,
    pub(crate) sample_rate: u32,
    pub(crate) signal_len: usize,
}

impl MagnitudeSpectrogram {
    /// Builds a magnitude spectrogram for a signal of `signal_len` samples.
    /// `data` is frame-major and must match the frame count that
    /// [`stft`] would produce for that length.
    pub fn new(
        data: Vec<f64>,
        params: StftParams,
        sample_rate: u32,
        signal_len: usize,
    ) -> Result<Self> {
        params.validate()?;
        let n_frames = frame_count(signal_len, &params)?;
        if data.len() != n_frames * params.n_bins() {
            return Err(DspError::InvalidParams(format!(
                "expected {} x {} magnitudes, got {}",
                n_frames,
                params.n_bins(),
                data.len()
            )));
        }
        if data.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(DspError::InvalidParams("magnitudes must be finite and >= 0".into()));
        }
        Ok(Self { data, n_frames, params, sample_rate, signal_len })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.params.n_bins()
    }

    pub fn params(&self) -> StftParams {
        self.params
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let b = self.n_bins();
        &self.data[t * b..(t + 1) * b]
    }

    /// Per-bin magnitude averaged over frames.
    pub fn mean_spectrum(&self) -> Vec<f64> {
        let b = self.n_bins();
        let mut acc = vec![0.0; b];
        for t in 0..self.n_frames {
            for (a, m) in acc.iter_mut().zip(self.frame(t)) {
                *a += m;
            }
        }
        let n = self.n_frames.max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

pub(crate) fn frame_count(len: usize, params: &StftParams) -> Result<usize> {
    if len < params.fft_size {
        return Err(DspError::TooShort { len, frame: params.fft_size });
    }
    Ok(1 + (len - params.fft_size).div_ceil(params.hop))
}

/// Samples covered by the full number of overlapping frames.
///
/// Outside this range the window sum tapers off at the signal edges and
/// reconstruction is only approximate.
pub fn cola_interior(len: usize, params: &StftParams) -> Range<usize> {
    match frame_count(len, params) {
        Ok(n_frames) => {
            let start = params.fft_size - params.hop;
            let end = (n_frames * params.hop).min(len);
            start..end.max(start)
        }
        Err(_) => 0..0,
    }
}

/// Reusable FFT plans and window for one [`StftParams`].
pub(crate) struct StftEngine {
    params: StftParams,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl StftEngine {
    pub(crate) fn new(params: StftParams) -> Result<Self> {
        params.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            window: params.window.coefficients(params.fft_size),
            forward: planner.plan_fft_forward(params.fft_size),
            inverse: planner.plan_fft_inverse(params.fft_size),
            params,
        })
    }

    pub(crate) fn analyze(&self, samples: &[f64], sample_rate: u32) -> Result<ComplexSpectrogram> {
        let n = self.params.fft_size;
        let hop = self.params.hop;
        let bins = self.params.n_bins();
        let n_frames = frame_count(samples.len(), &self.params)?;
        let mut data = Vec::with_capacity(n_frames * bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for t in 0..n_frames {
            let start = t * hop;
            for (i, slot) in buf.iter_mut().enumerate() {
                let x = samples.get(start + i).copied().unwrap_or(0.0);
                *slot = Complex64::new(x * self.window[i], 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            data.extend_from_slice(&buf[..bins]);
        }
        Ok(ComplexSpectrogram {
            data,
            n_frames,
            params: self.params,
            sample_rate,
            signal_len: samples.len(),
        })
    }

    /// Least-squares overlap-add inverse (window-weighted, normalized by the
    /// summed squared window).
    pub(crate) fn synthesize(&self, spec: &ComplexSpectrogram) -> Vec<f64> {
        let n = self.params.fft_size;
        let hop = self.params.hop;
        let bins = self.params.n_bins();
        let padded = (spec.n_frames - 1) * hop + n;
        let mut out = vec![0.0; padded];
        let mut norm = vec![0.0; padded];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let scale = 1.0 / n as f64;
        for t in 0..spec.n_frames {
            let frame = spec.frame(t);
            buf[..bins].copy_from_slice(frame);
            for k in 1..(n - bins + 1) {
                buf[n - k] = frame[k].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = t * hop;
            for i in 0..n {
                let w = self.window[i];
                out[start + i] += w * buf[i].re * scale;
                norm[start + i] += w * w;
            }
        }
        let peak = norm.iter().fold(0.0f64, |m, v| m.max(*v));
        let floor = peak * 1e-10;
        out.truncate(spec.signal_len);
        for (o, w) in out.iter_mut().zip(&norm) {
            *o = if *w > floor { *o / w } else { 0.0 };
        }
        out
    }
}

/// Short-time Fourier transform with the window and hop of `params`.
pub fn stft(wave: &Waveform, params: StftParams) -> Result<ComplexSpectrogram> {
    StftEngine::new(params)?.analyze(wave.samples(), wave.sample_rate())
}

/// Inverse of [`stft`]; returns exactly `spec.signal_len()` samples.
pub fn istft(spec: &ComplexSpectrogram) -> Result<Waveform> {
    let samples = StftEngine::new(spec.params)?.synthesize(spec);
    Waveform::new(samples, spec.sample_rate)
}
