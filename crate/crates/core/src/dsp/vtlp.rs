use rustfft::num_complex::Complex64;

use super::stft::StftEngine;
use super::{DspError, Result, StftParams, Waveform};

/// Upper warp boundary as a fraction of Nyquist (4800 Hz at 16 kHz).
pub const VTLP_BOUNDARY_FRACTION: f64 = 0.6;

const FACTOR_RANGE: (f64, f64) = (0.8, 1.25);

/// Piecewise-linear vocal tract length warp of a frequency in Hz.
///
/// Below `f_b = f_hi * min(factor, 1) / factor` the axis is scaled by
/// `factor`; above it a second linear piece maps `f_b` to `factor * f_b`
/// and Nyquist onto itself.
pub fn vtlp_warp(freq: f64, factor: f64, sample_rate: u32) -> f64 {
    let nyquist = f64::from(sample_rate) / 2.0;
    let f_hi = VTLP_BOUNDARY_FRACTION * nyquist;
    let boundary = f_hi * factor.min(1.0) / factor;
    if freq <= boundary {
        freq * factor
    } else {
        let warped_boundary = boundary * factor;
        nyquist - (nyquist - warped_boundary) / (nyquist - boundary) * (nyquist - freq)
    }
}

/// Inverse of [`vtlp_warp`] (both pieces are strictly increasing).
fn vtlp_unwarp(freq: f64, factor: f64, sample_rate: u32) -> f64 {
    let nyquist = f64::from(sample_rate) / 2.0;
    let f_hi = VTLP_BOUNDARY_FRACTION * nyquist;
    let boundary = f_hi * factor.min(1.0) / factor;
    let warped_boundary = boundary * factor;
    if freq <= warped_boundary {
        freq / factor
    } else {
        nyquist - (nyquist - freq) * (nyquist - boundary) / (nyquist - warped_boundary)
    }
}

/// Vocal tract length perturbation.
///
/// Each output bin takes the magnitude found at the unwarped source
/// frequency (linear interpolation between bins) and keeps the phase the
/// input had at that bin; the result is resynthesized with the inverse STFT.
pub fn vtlp(wave: &Waveform, factor: f64, params: StftParams) -> Result<Waveform> {
    if !(FACTOR_RANGE.0..=FACTOR_RANGE.1).contains(&factor) {
        return Err(DspError::FactorOutOfRange(factor));
    }
    let engine = StftEngine::new(params)?;
    let mut spec = engine.analyze(wave.samples(), wave.sample_rate())?;
    let bins = params.n_bins();
    let bin_hz = params.bin_hz(wave.sample_rate());

    let sources: Vec<(usize, f64)> = (0..bins)
        .map(|k| {
            let src = vtlp_unwarp(k as f64 * bin_hz, factor, wave.sample_rate()) / bin_hz;
            let src = src.clamp(0.0, (bins - 1) as f64);
            let lo = (src.floor() as usize).min(bins - 1);
            (lo, src - lo as f64)
        })
        .collect();

    let mut mags = vec![0.0; bins];
    for t in 0..spec.n_frames() {
        let frame = spec.frame_mut(t);
        for (m, c) in mags.iter_mut().zip(frame.iter()) {
            *m = c.norm();
        }
        for (k, &(lo, frac)) in sources.iter().enumerate() {
            let hi = (lo + 1).min(bins - 1);
            let mag = mags[lo] * (1.0 - frac) + mags[hi] * frac;
            frame[k] = Complex64::from_polar(mag, frame[k].arg());
        }
    }
    Waveform::new(engine.synthesize(&spec), wave.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warp_fixes_endpoints_and_is_continuous() {
        for &a in &[0.8, 0.9, 1.0, 1.1, 1.25] {
            assert!(vtlp_warp(0.0, a, 16_000).abs() < 1e-12);
            assert!((vtlp_warp(8000.0, a, 16_000) - 8000.0).abs() < 1e-9);
            let b = 4800.0 * f64::min(a, 1.0) / a;
            let left = vtlp_warp(b, a, 16_000);
            let right = vtlp_warp(b + 1e-9, a, 16_000);
            assert!((left - right).abs() < 1e-6);
        }
    }

    #[test]
    fn unwarp_inverts_warp() {
        for &a in &[0.85, 0.9, 1.1, 1.2] {
            for f in [10.0, 900.0, 4000.0, 5000.0, 7999.0] {
                let back = vtlp_unwarp(vtlp_warp(f, a, 16_000), a, 16_000);
                assert!((back - f).abs() < 1e-9, "factor {a} freq {f}");
            }
        }
    }

    #[test]
    fn tone_below_boundary_scales_linearly() {
        assert!((vtlp_warp(1000.0, 0.9, 16_000) - 900.0).abs() < 1e-12);
        assert!((vtlp_warp(1000.0, 1.1, 16_000) - 1100.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_factor() {
        let w = Waveform::zeros(4096, 16_000);
        assert!(matches!(
            vtlp(&w, 1.3, StftParams::default()),
            Err(DspError::FactorOutOfRange(_))
        ));
        assert!(vtlp(&w, 0.79, StftParams::default()).is_err());
    }

    #[test]
    fn preserves_length() {
        let w = Waveform::new((0..5000).map(|i| (i as f64 * 0.1).sin() * 0.3).collect(), 16_000)
            .unwrap();
        let out = vtlp(&w, 1.07, StftParams::default()).unwrap();
        assert_eq!(out.len(), w.len());
    }
}
