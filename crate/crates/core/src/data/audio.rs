//! Waveform IO and log-Mel spectrogram extraction.
//!
//! STFT parameters: 2048-point FFT, 60 ms (960-sample) periodic Hann window,
//! 30 ms (480-sample) hop, reflection center padding. 128 triangular mel
//! filters (Slaney scale and normalization) span 0-8000 Hz. The output is
//! `ln(mel energy + 1e-10)`, which for a 21,333-sample clip is exactly
//! `[45 x 128]`.

use std::path::Path;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::data::{CLIP_SAMPLES, N_MELS, SAMPLE_RATE, SPEECH_LEN};
use crate::error::Error;
use crate::Result;

pub const N_FFT: usize = 2048;
pub const WIN_LENGTH: usize = 960;
pub const HOP_LENGTH: usize = 480;
pub const MEL_FMIN: f64 = 0.0;
pub const MEL_FMAX: f64 = 8_000.0;
/// Floor added to mel energies before the natural log.
pub const LOG_MEL_EPS: f64 = 1e-10;

/// Log-mel features for one clip, `[45 x 128]`.
#[derive(Clone, Debug)]
pub struct SpeechFeatures {
    pub log_mel: Array2<f64>,
}

/// Hz -> mel (Slaney scale: linear below 1 kHz, log above).
fn hz_to_mel(f: f64) -> f64 {
    let f_sp = 200.0 / 3.0;
    let min_log_hz = 1000.0;
    let min_log_mel = min_log_hz / f_sp;
    let logstep = (6.4f64).ln() / 27.0;
    if f >= min_log_hz {
        min_log_mel + (f / min_log_hz).ln() / logstep
    } else {
        f / f_sp
    }
}

fn mel_to_hz(m: f64) -> f64 {
    let f_sp = 200.0 / 3.0;
    let min_log_hz = 1000.0;
    let min_log_mel = min_log_hz / f_sp;
    let logstep = (6.4f64).ln() / 27.0;
    if m >= min_log_mel {
        min_log_hz * (logstep * (m - min_log_mel)).exp()
    } else {
        m * f_sp
    }
}

/// Triangular mel filterbank `[n_mels x (n_fft/2 + 1)]` with Slaney area
/// normalization.
pub fn mel_filterbank(sample_rate: u32, n_fft: usize, n_mels: usize, fmin: f64, fmax: f64) -> Array2<f64> {
    let n_bins = n_fft / 2 + 1;
    let mel_min = hz_to_mel(fmin);
    let mel_max = hz_to_mel(fmax);
    // n_mels + 2 band edges, evenly spaced in mel.
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_min + (mel_max - mel_min) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_freqs: Vec<f64> = (0..n_bins)
        .map(|k| k as f64 * sample_rate as f64 / n_fft as f64)
        .collect();

    let mut fb = Array2::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let enorm = 2.0 / (hi - lo);
        for (k, &f) in bin_freqs.iter().enumerate() {
            let lower = (f - lo) / (mid - lo);
            let upper = (hi - f) / (hi - mid);
            let w = lower.min(upper).max(0.0);
            fb[[m, k]] = w * enorm;
        }
    }
    fb
}

/// Periodic Hann window of length `n`, zero-padded symmetrically to `n_fft`.
fn padded_hann(n: usize, n_fft: usize) -> Vec<f64> {
    let mut w = vec![0.0; n_fft];
    let offset = (n_fft - n) / 2;
    for (i, slot) in w[offset..offset + n].iter_mut().enumerate() {
        *slot = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
    }
    w
}

/// Reflect-pad `x` by `pad` samples on both sides.
fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    assert!(x.len() > pad, "signal too short for reflection padding");
    let mut out = Vec::with_capacity(x.len() + 2 * pad);
    for i in (1..=pad).rev() {
        out.push(x[i]);
    }
    out.extend_from_slice(x);
    for i in (x.len() - pad - 1..x.len() - 1).rev() {
        out.push(x[i]);
    }
    out
}

/// Log-mel spectrogram of one mono clip. The waveform must be exactly
/// [`CLIP_SAMPLES`] samples at 16 kHz.
pub fn compute_log_mel(waveform: &[f64], sample_rate: u32) -> Result<SpeechFeatures> {
    if sample_rate != SAMPLE_RATE {
        return Err(Error::ClipLengthMismatch(format!(
            "expected {SAMPLE_RATE} Hz, got {sample_rate} Hz"
        )));
    }
    if waveform.len() != CLIP_SAMPLES {
        return Err(Error::ClipLengthMismatch(format!(
            "expected {CLIP_SAMPLES} samples, got {}",
            waveform.len()
        )));
    }
    if waveform.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("waveform"));
    }

    let padded = reflect_pad(waveform, N_FFT / 2);
    let window = padded_hann(WIN_LENGTH, N_FFT);
    let fb = mel_filterbank(sample_rate, N_FFT, N_MELS, MEL_FMIN, MEL_FMAX);
    let n_bins = N_FFT / 2 + 1;

    // Center-padded frame count: 1 + floor(len / hop).
    let n_frames = 1 + waveform.len() / HOP_LENGTH;
    debug_assert_eq!(n_frames, SPEECH_LEN);

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(N_FFT);
    let mut out = Array2::zeros((n_frames, N_MELS));
    let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
    let mut power = vec![0.0f64; n_bins];

    for t in 0..n_frames {
        let start = t * HOP_LENGTH;
        for i in 0..N_FFT {
            buf[i] = Complex::new(padded[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in power.iter_mut().enumerate() {
            *p = buf[k].norm_sqr();
        }
        for m in 0..N_MELS {
            let mut e = 0.0;
            for k in 0..n_bins {
                e += fb[[m, k]] * power[k];
            }
            out[[t, m]] = (e + LOG_MEL_EPS).ln();
        }
    }

    Ok(SpeechFeatures { log_mel: out })
}

/// Read a 16 kHz mono PCM16 wav into `[-1, 1]` samples.
pub fn read_wav_mono_16k(path: &Path) -> Result<Vec<f64>> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.sample_rate != SAMPLE_RATE || spec.bits_per_sample != 16 {
        return Err(Error::ClipLengthMismatch(format!(
            "{}: expected 16 kHz mono PCM16, got {} ch / {} Hz / {} bit",
            path.display(),
            spec.channels,
            spec.sample_rate,
            spec.bits_per_sample
        )));
    }
    let samples: std::result::Result<Vec<i16>, _> = reader.samples::<i16>().collect();
    Ok(samples?.into_iter().map(|s| s as f64 / 32768.0).collect())
}

/// Write `[-1, 1]` samples as 16 kHz mono PCM16.
pub fn write_wav_mono_16k(path: &Path, samples: &[f64]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        // Same 32768 scale as the reader so a round trip only loses the
        // half-step quantization error.
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q)?;
    }
    writer.finalize()?;
    Ok(())
}
