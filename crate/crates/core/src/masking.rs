//! Input corruption for masked multimodal pre-training.
//!
//! Each clip gets an independently sampled per-modality plan. Discrete text
//! positions are replaced by the `<mask>` token; continuous speech/pose
//! frames are replaced by a sentinel value ([`MASK_SENTINEL`], outside both
//! features' valid ranges) that the embedder later swaps for a learned mask
//! vector. Random corruption draws i.i.d. uniform values over the feature's
//! working range.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::data::{Clip, Vocabulary, MASK_ID, POSE_LEN, SPEECH_LEN, TEXT_LEN};

/// Sentinel written into masked speech/pose frames before embedding. Both
/// features live well inside (-24, 6), so a full row of -10 is unambiguous.
pub const MASK_SENTINEL: f64 = -10.0;

/// Masked-span length for speech and pose span modes.
pub const SPAN_LEN: usize = 5;

/// Pose frames kept as context when the tail is masked for next-frame
/// prediction; frames `PRE_POSES..` are hidden.
pub const PRE_POSES: usize = 10;

/// Range for random speech-frame corruption. Log-mel values lie in
/// [ln(1e-10), ~ln(max power)]; this band covers the energetic part.
pub const SPEECH_RANDOM_RANGE: (f64, f64) = (-15.0, 5.0);

/// Range for random pose-frame corruption (normalized angles).
pub const POSE_RANDOM_RANGE: (f64, f64) = (-1.0, 1.0);

/// Corruption mode for the token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextMaskMode {
    /// Every valid token becomes `<mask>`.
    FullIgnore,
    /// One token becomes `<mask>`.
    MaskOneWord { pos: usize },
    /// One token becomes a uniformly random non-reserved word.
    RandomOneWord { pos: usize },
    None,
}

/// Corruption mode for the speech feature rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeechMaskMode {
    FullIgnore,
    /// `SPAN_LEN` consecutive frames become the sentinel.
    MaskSpan { start: usize },
    /// `SPAN_LEN` consecutive frames become uniform noise.
    RandomSpan { start: usize },
    None,
}

/// Corruption mode for the pose rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseMaskMode {
    FullIgnore,
    MaskSpan { start: usize },
    RandomSpan { start: usize },
    /// Frames `PRE_POSES..POSE_LEN` become the sentinel: the next-frame
    /// prediction setup used later by autoregressive generation.
    MaskLast30,
    None,
}

impl TextMaskMode {
    /// Stable name for frequency logging.
    pub fn label(&self) -> &'static str {
        match self {
            TextMaskMode::FullIgnore => "text.full_ignore",
            TextMaskMode::MaskOneWord { .. } => "text.mask_one_word",
            TextMaskMode::RandomOneWord { .. } => "text.random_one_word",
            TextMaskMode::None => "text.none",
        }
    }
}

impl SpeechMaskMode {
    pub fn label(&self) -> &'static str {
        match self {
            SpeechMaskMode::FullIgnore => "speech.full_ignore",
            SpeechMaskMode::MaskSpan { .. } => "speech.mask_span",
            SpeechMaskMode::RandomSpan { .. } => "speech.random_span",
            SpeechMaskMode::None => "speech.none",
        }
    }
}

impl PoseMaskMode {
    pub fn label(&self) -> &'static str {
        match self {
            PoseMaskMode::FullIgnore => "pose.full_ignore",
            PoseMaskMode::MaskSpan { .. } => "pose.mask_span",
            PoseMaskMode::RandomSpan { .. } => "pose.random_span",
            PoseMaskMode::MaskLast30 => "pose.mask_last_30",
            PoseMaskMode::None => "pose.none",
        }
    }
}

/// One sampled corruption plan plus the seed that fixes its random values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskPlan {
    pub text: TextMaskMode,
    pub speech: SpeechMaskMode,
    pub pose: PoseMaskMode,
    /// Seed consumed by [`apply_mask_plan`] for random-word / random-frame
    /// draws, so (clip, plan) fully determines the corrupted clip.
    pub seed: u64,
}

/// A corrupted clip plus per-modality flags marking which positions were
/// touched. Reconstruction is scored over all positions; the flags exist for
/// diagnostics.
#[derive(Debug, Clone)]
pub struct MaskedClip {
    pub clip: Clip,
    pub text_targets: [bool; TEXT_LEN],
    pub speech_targets: [bool; SPEECH_LEN],
    pub pose_targets: [bool; POSE_LEN],
}

/// Draw one plan. Mode probabilities: text and speech
/// (full-ignore, mask, random, none) = (0.10, 0.72, 0.09, 0.09); pose
/// (full-ignore, mask-span, random-span, mask-last-30, none) =
/// (0.10, 0.09, 0.09, 0.63, 0.09). Positions and span starts are uniform
/// over their valid ranges; modalities are drawn independently.
pub fn sample_mask_plan<R: Rng>(rng: &mut R, valid_len: usize) -> MaskPlan {
    let text = {
        let r: f64 = rng.random();
        if r < 0.10 {
            TextMaskMode::FullIgnore
        } else if valid_len == 0 {
            // Positional modes have nowhere to land on an empty sequence.
            TextMaskMode::None
        } else if r < 0.82 {
            TextMaskMode::MaskOneWord {
                pos: rng.random_range(0..valid_len),
            }
        } else if r < 0.91 {
            TextMaskMode::RandomOneWord {
                pos: rng.random_range(0..valid_len),
            }
        } else {
            TextMaskMode::None
        }
    };

    let speech = {
        let r: f64 = rng.random();
        if r < 0.10 {
            SpeechMaskMode::FullIgnore
        } else if r < 0.82 {
            SpeechMaskMode::MaskSpan {
                start: rng.random_range(0..=SPEECH_LEN - SPAN_LEN),
            }
        } else if r < 0.91 {
            SpeechMaskMode::RandomSpan {
                start: rng.random_range(0..=SPEECH_LEN - SPAN_LEN),
            }
        } else {
            SpeechMaskMode::None
        }
    };

    let pose = {
        let r: f64 = rng.random();
        if r < 0.10 {
            PoseMaskMode::FullIgnore
        } else if r < 0.19 {
            PoseMaskMode::MaskSpan {
                start: rng.random_range(0..=POSE_LEN - SPAN_LEN),
            }
        } else if r < 0.28 {
            PoseMaskMode::RandomSpan {
                start: rng.random_range(0..=POSE_LEN - SPAN_LEN),
            }
        } else if r < 0.91 {
            PoseMaskMode::MaskLast30
        } else {
            PoseMaskMode::None
        }
    };

    MaskPlan {
        text,
        speech,
        pose,
        seed: rng.random(),
    }
}

fn fill_rows(m: &mut Array2<f64>, start: usize, end: usize, value: f64) {
    for t in start..end {
        for v in m.row_mut(t) {
            *v = value;
        }
    }
}

fn randomize_rows<R: Rng>(
    m: &mut Array2<f64>,
    start: usize,
    end: usize,
    range: (f64, f64),
    rng: &mut R,
) {
    for t in start..end {
        for v in m.row_mut(t) {
            *v = rng.random_range(range.0..range.1);
        }
    }
}

/// Corrupt a clip according to `plan`. The input clip is never mutated.
pub fn apply_mask_plan(clip: &Clip, plan: &MaskPlan, vocab: &Vocabulary) -> MaskedClip {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut out = clip.clone();
    let mut text_targets = [false; TEXT_LEN];
    let mut speech_targets = [false; SPEECH_LEN];
    let mut pose_targets = [false; POSE_LEN];

    let valid_len = clip.text.valid_len;
    match plan.text {
        TextMaskMode::FullIgnore => {
            for pos in 0..valid_len {
                out.text.token_ids[pos] = MASK_ID;
                text_targets[pos] = true;
            }
        }
        TextMaskMode::MaskOneWord { pos } if pos < valid_len => {
            out.text.token_ids[pos] = MASK_ID;
            text_targets[pos] = true;
        }
        TextMaskMode::RandomOneWord { pos } if pos < valid_len => {
            out.text.token_ids[pos] = vocab.random_word_id(&mut rng);
            text_targets[pos] = true;
        }
        _ => {}
    }

    match plan.speech {
        SpeechMaskMode::FullIgnore => {
            fill_rows(&mut out.speech.log_mel, 0, SPEECH_LEN, MASK_SENTINEL);
            speech_targets = [true; SPEECH_LEN];
        }
        SpeechMaskMode::MaskSpan { start } => {
            fill_rows(&mut out.speech.log_mel, start, start + SPAN_LEN, MASK_SENTINEL);
            speech_targets[start..start + SPAN_LEN].fill(true);
        }
        SpeechMaskMode::RandomSpan { start } => {
            randomize_rows(
                &mut out.speech.log_mel,
                start,
                start + SPAN_LEN,
                SPEECH_RANDOM_RANGE,
                &mut rng,
            );
            speech_targets[start..start + SPAN_LEN].fill(true);
        }
        SpeechMaskMode::None => {}
    }

    match plan.pose {
        PoseMaskMode::FullIgnore => {
            fill_rows(&mut out.pose.rotations, 0, POSE_LEN, MASK_SENTINEL);
            pose_targets = [true; POSE_LEN];
        }
        PoseMaskMode::MaskSpan { start } => {
            fill_rows(&mut out.pose.rotations, start, start + SPAN_LEN, MASK_SENTINEL);
            pose_targets[start..start + SPAN_LEN].fill(true);
        }
        PoseMaskMode::RandomSpan { start } => {
            randomize_rows(
                &mut out.pose.rotations,
                start,
                start + SPAN_LEN,
                POSE_RANDOM_RANGE,
                &mut rng,
            );
            pose_targets[start..start + SPAN_LEN].fill(true);
        }
        PoseMaskMode::MaskLast30 => {
            fill_rows(&mut out.pose.rotations, PRE_POSES, POSE_LEN, MASK_SENTINEL);
            pose_targets[PRE_POSES..POSE_LEN].fill(true);
        }
        PoseMaskMode::None => {}
    }

    MaskedClip {
        clip: out,
        text_targets,
        speech_targets,
        pose_targets,
    }
}

/// True if a feature row consists entirely of the mask sentinel.
pub fn is_sentinel_row(row: ndarray::ArrayView1<'_, f64>) -> bool {
    row.iter().all(|&v| v == MASK_SENTINEL)
}

/// Sentinel-row flags for a whole feature matrix, used by the embedder to
/// substitute the learned mask vector.
pub fn sentinel_rows(m: &Array2<f64>) -> Vec<bool> {
    (0..m.nrows()).map(|t| is_sentinel_row(m.row(t))).collect()
}
