use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{DspError, Result, Waveform};

const RESAMPLE_TAPS: usize = 64;
const KAISER_BETA: f64 = 8.6;

/// Reads a PCM (8/16/24-bit) or float32 WAV, downmixing stereo by averaging.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let read_err = |source| DspError::Read { path: path.to_path_buf(), source };
    let mut reader = WavReader::open(path).map_err(read_err)?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if !(1..=2).contains(&channels) {
        return Err(DspError::UnsupportedEncoding(format!("{channels} channels")));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (8 | 16 | 24)) => {
            let scale = f64::from(1u32 << (bits - 1));
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(read_err)?
        }
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(read_err)?,
        (format, bits) => {
            return Err(DspError::UnsupportedEncoding(format!("{format:?} {bits}-bit")));
        }
    };
    if interleaved.is_empty() {
        return Err(DspError::Empty);
    }
    let mono: Vec<f64> = interleaved
        .chunks(channels)
        .map(|frame| (frame.iter().sum::<f64>() / channels as f64).clamp(-1.0, 1.0))
        .collect();
    Waveform::new(mono, spec.sample_rate)
}

/// Reads a WAV file and brings it to `target_rate` mono.
pub fn load_audio(path: &Path, target_rate: u32) -> Result<Waveform> {
    let wave = read_wav(path)?;
    if wave.sample_rate() == target_rate {
        Ok(wave)
    } else {
        resample(&wave, target_rate)
    }
}

/// Writes a mono 16-bit PCM WAV. Samples are clipped to [-1, 1].
pub fn write_wav_pcm16(path: &Path, wave: &Waveform) -> Result<()> {
    let write_err = |source| DspError::Write { path: path.to_path_buf(), source };
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(write_err)?;
    for &s in wave.samples() {
        let v = (s.clamp(-1.0, 1.0) * f64::from(i16::MAX)).round() as i16;
        writer.write_sample(v).map_err(write_err)?;
    }
    writer.finalize().map_err(write_err)
}

fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= half / k as f64;
        let t2 = term * term;
        sum += t2;
        if t2 < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Band-limited resampling with a Kaiser-windowed sinc kernel of 64 taps at
/// the output rate.
pub fn resample(wave: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(DspError::InvalidWaveform("target rate must be positive".into()));
    }
    if wave.is_empty() {
        return Err(DspError::Empty);
    }
    let in_rate = f64::from(wave.sample_rate());
    let out_rate = f64::from(target_rate);
    let step = in_rate / out_rate;
    let cutoff = (out_rate / in_rate).min(1.0);
    let half_width = (RESAMPLE_TAPS / 2) as f64 / cutoff;
    let norm = bessel_i0(KAISER_BETA);
    let x = wave.samples();
    let out_len = ((x.len() as f64) * out_rate / in_rate).round().max(1.0) as usize;

    let out: Vec<f64> = (0..out_len)
        .map(|n| {
            let t = n as f64 * step;
            let first = (t - half_width).ceil().max(0.0) as usize;
            let last = ((t + half_width).floor() as usize).min(x.len() - 1);
            let mut acc = 0.0;
            for (k, &xk) in x.iter().enumerate().take(last + 1).skip(first) {
                let d = t - k as f64;
                let u = d / half_width;
                let window = bessel_i0(KAISER_BETA * (1.0 - u * u).max(0.0).sqrt()) / norm;
                acc += xk * cutoff * sinc(cutoff * d) * window;
            }
            acc
        })
        .collect();
    Waveform::new(out, target_rate)
}
