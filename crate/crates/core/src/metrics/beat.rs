//! Audio-motion beat consistency.
//!
//! Audio beats are peaks of a spectral-flux onset envelope (Hann window of
//! 512 samples, hop 256, peak = strict local maximum at least one standard
//! deviation above the envelope mean, timestamped at the window center).
//! Kinematic beats are frames whose mean absolute angular velocity is a
//! local minimum — moments where the motion pauses. Each audio beat
//! contributes `exp(-(t_audio - t_nearest_kinematic)^2 / (2 sigma^2))` with
//! `sigma` = 0.1 s; a clip with no audio beats or no kinematic beats
//! contributes 0 and still counts toward the mean.

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::data::{FPS, SAMPLE_RATE};
use crate::metrics::GestureSet;
use crate::{Error, Result};

/// Gaussian kernel width in seconds.
pub const BC_SIGMA_S: f64 = 0.1;

const ONSET_WIN: usize = 512;
const ONSET_HOP: usize = 256;

/// Spectral-flux onset envelope, one value per analysis frame.
fn spectral_flux(samples: &[f64]) -> Vec<f64> {
    if samples.len() < ONSET_WIN {
        return Vec::new();
    }
    let n_frames = (samples.len() - ONSET_WIN) / ONSET_HOP + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(ONSET_WIN);
    let hann: Vec<f64> = (0..ONSET_WIN)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / ONSET_WIN as f64).cos()))
        .collect();

    let mut prev = vec![0.0; ONSET_WIN / 2 + 1];
    let mut flux = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); ONSET_WIN];
    for k in 0..n_frames {
        let start = k * ONSET_HOP;
        for i in 0..ONSET_WIN {
            buf[i] = Complex::new(samples[start + i] * hann[i], 0.0);
        }
        fft.process(&mut buf);
        let mag: Vec<f64> = buf[..ONSET_WIN / 2 + 1].iter().map(|c| c.norm()).collect();
        let rise: f64 = mag
            .iter()
            .zip(&prev)
            .map(|(m, p)| (m - p).max(0.0))
            .sum();
        flux.push(rise);
        prev = mag;
    }
    // The first frame compares against silence and would always spike.
    if let Some(first) = flux.first_mut() {
        *first = 0.0;
    }
    flux
}

/// Detected audio-beat times in seconds.
pub fn onset_times(samples: &[f64], sample_rate: u32) -> Vec<f64> {
    let flux = spectral_flux(samples);
    if flux.len() < 3 {
        return Vec::new();
    }
    let mean = flux.iter().sum::<f64>() / flux.len() as f64;
    let var = flux.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / flux.len() as f64;
    let threshold = mean + var.sqrt();
    let mut times = Vec::new();
    for k in 1..flux.len() - 1 {
        if flux[k] > flux[k - 1] && flux[k] >= flux[k + 1] && flux[k] >= threshold && flux[k] > 0.0
        {
            times.push((k * ONSET_HOP + ONSET_WIN / 2) as f64 / sample_rate as f64);
        }
    }
    times
}

/// Kinematic-beat times: frames (2..=37) whose arrival speed is a local
/// minimum, at `frame / fps` seconds. Speed into frame `t` is the mean
/// absolute channel difference from frame `t-1`.
pub fn kinematic_beat_times(clip: &Array2<f64>) -> Vec<f64> {
    let n = clip.nrows();
    let speed: Vec<f64> = (1..n)
        .map(|t| {
            let mut s = 0.0;
            for j in 0..clip.ncols() {
                s += (clip[[t, j]] - clip[[t - 1, j]]).abs();
            }
            s / clip.ncols() as f64
        })
        .collect();
    let mut times = Vec::new();
    for i in 1..speed.len() - 1 {
        if speed[i] < speed[i - 1] && speed[i] <= speed[i + 1] {
            // speed[i] is the transition into frame i+1
            times.push((i + 1) as f64 / FPS as f64);
        }
    }
    times
}

/// Beat consistency of one clip given its waveform.
pub fn clip_beat_consistency(clip: &Array2<f64>, samples: &[f64]) -> f64 {
    let audio_beats = onset_times(samples, SAMPLE_RATE);
    if audio_beats.is_empty() {
        return 0.0;
    }
    let motion_beats = kinematic_beat_times(clip);
    if motion_beats.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for tb in &audio_beats {
        let nearest = motion_beats
            .iter()
            .map(|tk| (tb - tk) * (tb - tk))
            .fold(f64::INFINITY, f64::min);
        total += (-nearest / (2.0 * BC_SIGMA_S * BC_SIGMA_S)).exp();
    }
    total / audio_beats.len() as f64
}

/// Mean clip beat consistency over a set with paired waveforms.
pub fn beat_consistency(gestures: &GestureSet, audio: &[Vec<f64>]) -> Result<f64> {
    if gestures.len() != audio.len() {
        return Err(Error::Metric(format!(
            "{} gestures but {} waveforms",
            gestures.len(),
            audio.len()
        )));
    }
    let total: f64 = gestures
        .clips()
        .iter()
        .zip(audio)
        .map(|(clip, wav)| clip_beat_consistency(clip, wav))
        .sum();
    Ok(total / gestures.len() as f64)
}
