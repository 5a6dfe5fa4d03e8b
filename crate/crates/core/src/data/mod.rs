//! Dataset types, on-disk format, feature extraction, and synthetic corpus
//! generation.
//!
//! A training sample is a [`Clip`]: one 1.333 s window of time-aligned text,
//! speech, and pose. On disk a dataset is a directory with `manifest.json`,
//! `vocab.json`, and per-clip `<id>.words.json` / `<id>.wav` (16 kHz mono
//! PCM16) / `<id>.pose.f32` (raw little-endian f32, row-major `[40 x 165]`,
//! radians).

pub mod audio;
pub mod dataset;
pub mod pose;
pub mod synthetic;
pub mod vocab;

pub use audio::{compute_log_mel, read_wav_mono_16k, write_wav_mono_16k, SpeechFeatures};
pub use dataset::{ClipRecord, Dataset, DatasetManifest, LoadedClip};
pub use pose::{denormalize_pose, normalize_pose, read_pose_file, write_pose_file, PoseSequence};
pub use synthetic::generate_synthetic_corpus;
pub use vocab::{
    build_vocabulary, detokenize, tokenize, TextSequence, Vocabulary, MASK_ID, PAD_ID,
    RESERVED_IDS, UNK_ID,
};

use crate::error::Error;
use crate::Result;

/// Tokens per clip.
pub const TEXT_LEN: usize = 32;
/// Log-mel frames per clip.
pub const SPEECH_LEN: usize = 45;
/// Pose frames per clip.
pub const POSE_LEN: usize = 40;
/// Mel filterbank size.
pub const N_MELS: usize = 128;
/// Joint rotation channels: 55 joints x 3 axis-angle components.
pub const POSE_DIM: usize = 165;
/// Audio sample rate. The hop below is 30 ms = 480 samples, which yields
/// exactly 45 center-padded STFT frames over one clip.
pub const SAMPLE_RATE: u32 = 16_000;
/// Pose frame rate.
pub const FPS: u32 = 30;
/// Clip duration: 40 pose frames at 30 fps.
pub const CLIP_SECONDS: f64 = 40.0 / 30.0;
/// Audio samples per clip: round(40/30 * 16000).
pub const CLIP_SAMPLES: usize = 21_333;

/// One time-aligned (text, speech, pose) training sample.
#[derive(Clone, Debug)]
pub struct Clip {
    pub clip_id: String,
    pub text: TextSequence,
    pub speech: SpeechFeatures,
    pub pose: PoseSequence,
}

/// A word with its wall-clock span inside a recording.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TimedWord {
    pub word: String,
    pub start_s: f64,
    pub end_s: f64,
}

/// A long aligned recording from which clips are cropped.
#[derive(Clone, Debug)]
pub struct AlignedRecording {
    pub words: Vec<TimedWord>,
    /// Mono waveform in [-1, 1].
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    /// Raw joint rotations in radians, `[n_frames x 165]`.
    pub pose: ndarray::Array2<f64>,
    pub fps: u32,
}

impl AlignedRecording {
    /// Duration covered by both the audio and the pose stream, in seconds.
    pub fn duration_s(&self) -> f64 {
        let audio = self.samples.len() as f64 / self.sample_rate as f64;
        let pose = self.pose.nrows() as f64 / self.fps as f64;
        audio.min(pose)
    }
}

/// Crop a 1.333 s window starting at `start_s` into a [`Clip`].
///
/// The audio window is [`CLIP_SAMPLES`] samples, the pose window 40 frames
/// starting at `round(start_s * 30)`, and the text is every word whose start
/// time falls inside the window (truncated to 32 tokens).
pub fn crop_aligned_clip(
    rec: &AlignedRecording,
    start_s: f64,
    vocab: &Vocabulary,
    clip_id: &str,
) -> Result<Clip> {
    if rec.sample_rate != SAMPLE_RATE || rec.fps != FPS {
        return Err(Error::ClipLengthMismatch(format!(
            "expected {SAMPLE_RATE} Hz / {FPS} fps, got {} Hz / {} fps",
            rec.sample_rate, rec.fps
        )));
    }
    // One-sample slack: a recording trimmed to exactly CLIP_SAMPLES audio
    // samples is 1/3 sample shorter than the nominal 40/30 s window. The
    // integer window checks below are exact.
    if start_s < 0.0 || start_s + CLIP_SECONDS > rec.duration_s() + 1.0 / SAMPLE_RATE as f64 {
        return Err(Error::WindowOutOfRange(format!(
            "start {start_s:.3} s + {CLIP_SECONDS:.3} s > recording duration {:.3} s",
            rec.duration_s()
        )));
    }

    let audio_start = (start_s * SAMPLE_RATE as f64).round() as usize;
    if audio_start + CLIP_SAMPLES > rec.samples.len() {
        return Err(Error::WindowOutOfRange(format!(
            "audio window {audio_start}..{} exceeds {} samples",
            audio_start + CLIP_SAMPLES,
            rec.samples.len()
        )));
    }
    let pose_start = (start_s * FPS as f64).round() as usize;
    if pose_start + POSE_LEN > rec.pose.nrows() {
        return Err(Error::WindowOutOfRange(format!(
            "pose window {pose_start}..{} exceeds {} frames",
            pose_start + POSE_LEN,
            rec.pose.nrows()
        )));
    }

    let window = &rec.samples[audio_start..audio_start + CLIP_SAMPLES];
    let speech = compute_log_mel(window, rec.sample_rate)?;

    let raw_pose = rec
        .pose
        .slice(ndarray::s![pose_start..pose_start + POSE_LEN, ..])
        .to_owned();
    let pose = normalize_pose(&raw_pose)?;

    let end_s = start_s + CLIP_SECONDS;
    let words: Vec<String> = rec
        .words
        .iter()
        .filter(|w| w.start_s >= start_s - 1e-9 && w.start_s < end_s)
        .map(|w| w.word.clone())
        .collect();
    let text = tokenize(&words, vocab);

    Ok(Clip {
        clip_id: clip_id.to_string(),
        text,
        speech,
        pose,
    })
}
