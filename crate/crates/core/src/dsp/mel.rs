use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{DspError, Result, Waveform, WindowKind};

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Power mel spectrogram, `n_frames × n_mels`, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub data: Vec<f64>,
    pub n_frames: usize,
    pub n_mels: usize,
}

impl MelSpectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_mels..(t + 1) * self.n_mels]
    }
}

/// Triangular mel filterbank (`n_mels × (fft_size/2 + 1)`, row-major)
/// spanning 0 Hz to Nyquist.
///
/// A filter too narrow to reach any bin centre is given unit weight on the
/// bin nearest its centre frequency, so every row has positive mass.
pub fn mel_filterbank(n_mels: usize, fft_size: usize, sample_rate: u32) -> Vec<f64> {
    let bins = fft_size / 2 + 1;
    let nyquist = f64::from(sample_rate) / 2.0;
    let bin_hz = f64::from(sample_rate) / fft_size as f64;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut fb = vec![0.0; n_mels * bins];
    for m in 0..n_mels {
        let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut fb[m * bins..(m + 1) * bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rise = (f - lo) / (centre - lo);
            let fall = (hi - f) / (hi - centre);
            *w = rise.min(fall).max(0.0);
        }
        if row.iter().all(|w| *w == 0.0) {
            let k = ((centre / bin_hz).round() as usize).min(bins - 1);
            row[k] = 1.0;
        }
    }
    fb
}

/// Mel spectrogram with windows and hops given in milliseconds.
///
/// Frames are not padded: a signal of `len` samples with window `w` and hop
/// `h` (in samples) yields `1 + (len - w) / h` frames.
pub fn mel_spectrogram(
    wave: &Waveform,
    n_mels: usize,
    window_ms: f64,
    hop_ms: f64,
) -> Result<MelSpectrogram> {
    if n_mels == 0 {
        return Err(DspError::InvalidParams("n_mels must be positive".into()));
    }
    if !(hop_ms > 0.0 && window_ms >= hop_ms) {
        return Err(DspError::InvalidParams(format!(
            "window {window_ms} ms must be >= hop {hop_ms} ms > 0"
        )));
    }
    let sr = f64::from(wave.sample_rate());
    let win = (sr * window_ms / 1000.0).round() as usize;
    let hop = ((sr * hop_ms / 1000.0).round() as usize).max(1);
    if wave.len() < win || win == 0 {
        return Err(DspError::TooShort { len: wave.len(), frame: win });
    }
    let fft_size = win.next_power_of_two();
    let bins = fft_size / 2 + 1;
    let n_frames = 1 + (wave.len() - win) / hop;
    let window = WindowKind::Hann.coefficients(win);
    let fb = mel_filterbank(n_mels, fft_size, wave.sample_rate());
    let fft = FftPlanner::new().plan_fft_forward(fft_size);

    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    let mut power = vec![0.0; bins];
    let mut data = Vec::with_capacity(n_frames * n_mels);
    for t in 0..n_frames {
        let frame = &wave.samples()[t * hop..t * hop + win];
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for ((slot, x), w) in buf.iter_mut().zip(frame).zip(&window) {
            slot.re = x * w;
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        for m in 0..n_mels {
            let row = &fb[m * bins..(m + 1) * bins];
            data.push(row.iter().zip(&power).map(|(w, p)| w * p).sum());
        }
    }
    Ok(MelSpectrogram { data, n_frames, n_mels })
}
