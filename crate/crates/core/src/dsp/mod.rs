//! Audio I/O and spectral processing.
//!
//! Everything here is a pure function over owned values. Signals are held in
//! `f64`; files on disk are RIFF WAV.

mod audio;
mod griffin_lim;
mod mel;
mod stft;
mod vtlp;

pub use audio::{load_audio, read_wav, resample, write_wav_pcm16};
pub use griffin_lim::{griffin_lim, GriffinLim, GriffinLimOutput};
pub use mel::{mel_filterbank, mel_spectrogram, MelSpectrogram};
pub use stft::{cola_interior, istft, stft, ComplexSpectrogram, MagnitudeSpectrogram};
pub use vtlp::{vtlp, vtlp_warp, VTLP_BOUNDARY_FRACTION};

use std::path::PathBuf;

use thiserror::Error;

/// Canonical rate for corpus audio and the embedding encoder.
pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("cannot read audio file {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("cannot write audio file {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("audio has zero length")]
    Empty,
    #[error("signal of {len} samples is shorter than one frame of {frame}")]
    TooShort { len: usize, frame: usize },
    #[error("invalid STFT parameters: {0}")]
    InvalidParams(String),
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("warp factor {0} outside [0.8, 1.25]")]
    FactorOutOfRange(f64),
}

pub type Result<T> = std::result::Result<T, DspError>;

/// Mono signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(DspError::InvalidWaveform("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DspError::InvalidWaveform(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    /// Silence of the given length.
    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self { samples: vec![0.0; len], sample_rate }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Scales the signal down if any sample exceeds unit amplitude.
    pub fn peak_limited(mut self) -> Self {
        let peak = self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if peak > 1.0 {
            self.samples.iter_mut().for_each(|s| *s /= peak);
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    /// Periodic Hann.
    #[default]
    Hann,
    /// Periodic Hamming.
    Hamming,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let phase = 2.0 * std::f64::consts::PI * i as f64 / n;
                match self {
                    WindowKind::Hann => 0.5 - 0.5 * phase.cos(),
                    WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

/// Frame size, hop and window of a short-time Fourier transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StftParams {
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftParams {
    fn default() -> Self {
        Self { fft_size: 1024, hop: 256, window: WindowKind::Hann }
    }
}

impl StftParams {
    pub fn new(fft_size: usize, hop: usize, window: WindowKind) -> Result<Self> {
        let p = Self { fft_size, hop, window };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.fft_size.is_power_of_two() || self.fft_size < 2 {
            return Err(DspError::InvalidParams(format!(
                "fft_size {} is not a power of two",
                self.fft_size
            )));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(DspError::InvalidParams(format!(
                "hop {} must be in 1..={}",
                self.hop, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn bin_hz(&self, sample_rate: u32) -> f64 {
        f64::from(sample_rate) / self.fft_size as f64
    }
}
