//! On-disk dataset directory layout and the loader that turns it into
//! model-ready clips.
//!
//! A dataset directory contains `manifest.json`, `vocab.json`, and for each
//! clip `<id>.words.json` (timed words), `<id>.wav` (16 kHz mono PCM16), and
//! `<id>.pose.f32` (little-endian f32 frames x 165 joint angles in radians).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    crop_aligned_clip, read_pose_file, read_wav_mono_16k, AlignedRecording, Clip, TimedWord,
    Vocabulary, CLIP_SAMPLES, FPS, SAMPLE_RATE,
};
use crate::{Error, Result};

/// One clip entry in the manifest. File names are relative to the dataset
/// directory; `start_s` selects the crop window inside the recording.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipRecord {
    pub id: String,
    pub words_file: String,
    pub wav_file: String,
    pub pose_file: String,
    #[serde(default)]
    pub start_s: f64,
}

/// Top-level dataset description stored as `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sample_rate: u32,
    pub fps: u32,
    pub split: String,
    pub clips: Vec<ClipRecord>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let manifest: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if manifest.sample_rate != SAMPLE_RATE {
            return Err(Error::Dataset(format!(
                "manifest sample_rate {} is not {SAMPLE_RATE}",
                manifest.sample_rate
            )));
        }
        if manifest.fps != FPS {
            return Err(Error::Dataset(format!(
                "manifest fps {} is not {FPS}",
                manifest.fps
            )));
        }
        Ok(manifest)
    }
}

/// A model-ready clip plus the raw audio window it was computed from. The
/// waveform is kept because the beat-consistency metric needs audio onsets,
/// not mel features.
#[derive(Debug, Clone)]
pub struct LoadedClip {
    pub clip: Clip,
    pub samples: Vec<f64>,
}

/// A fully loaded dataset: vocabulary plus preprocessed clips.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub clips: Vec<LoadedClip>,
}

impl Dataset {
    /// Load and preprocess every clip listed in `dir/manifest.json`.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = DatasetManifest::load(&dir.join("manifest.json"))?;
        let vocab = Vocabulary::load(&dir.join("vocab.json"))?;
        if manifest.clips.is_empty() {
            return Err(Error::EmptyCorpus);
        }

        let mut clips = Vec::with_capacity(manifest.clips.len());
        for rec in &manifest.clips {
            let words: Vec<TimedWord> =
                serde_json::from_str(&std::fs::read_to_string(dir.join(&rec.words_file))?)?;
            let samples = read_wav_mono_16k(&dir.join(&rec.wav_file))?;
            let pose = read_pose_file(&dir.join(&rec.pose_file))?;
            let recording = AlignedRecording {
                words,
                samples,
                sample_rate: SAMPLE_RATE,
                pose,
                fps: FPS,
            };
            let clip = crop_aligned_clip(&recording, rec.start_s, &vocab, &rec.id)?;
            let audio_start = (rec.start_s * SAMPLE_RATE as f64).round() as usize;
            let window = recording.samples[audio_start..audio_start + CLIP_SAMPLES].to_vec();
            clips.push(LoadedClip {
                clip,
                samples: window,
            });
        }
        Ok(Self { vocab, clips })
    }

    /// Stable digest of the dataset contents (ids plus pose bytes), used to
    /// key caches such as the evaluation autoencoder.
    pub fn content_hash(dir: &Path) -> Result<String> {
        let manifest = DatasetManifest::load(&dir.join("manifest.json"))?;
        let mut hasher = Sha256::new();
        for rec in &manifest.clips {
            hasher.update(rec.id.as_bytes());
            hasher.update(std::fs::read(dir.join(&rec.pose_file))?);
        }
        Ok(format!("{:x}", hasher.finalize()))
    }
}
