//! Model definition: configuration, positional encoding, the four
//! sub-networks, and end-to-end gesture generation.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::data::{PoseSequence, SpeechFeatures, TextSequence, POSE_DIM, POSE_LEN, TEXT_LEN};
use crate::masking::MASK_SENTINEL;
use crate::{Error, Result};

pub mod net;
pub mod params;

pub use net::{
    autoregressive_decode, decode_rows, decode_step, embed_pose, embed_pose_rows, embed_speech,
    embed_text, encode, generate_pose, generate_speech, generate_text_logits, split_segments,
    Embedded, LN_EPS, POSE_ROWS, SEQ_LEN, SPEECH_ROWS, TEXT_ROWS,
};
pub use params::{BoundParams, ParamStore};

/// Architecture hyper-parameters. Sequence lengths are fixed by the data
/// module; widths are configurable with the defaults below.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_blocks: usize,
    pub n_decoder_blocks: usize,
    pub d_ff: usize,
    pub word_embed_dim: usize,
    pub n_pre_poses: usize,
}

impl ModelConfig {
    /// Default widths: d_model 128, 4 heads, 4 encoder blocks, 1 decoder
    /// block, feed-forward 256, word embedding 64, 10 pre-poses.
    pub fn with_vocab(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: 128,
            n_heads: 4,
            n_encoder_blocks: 4,
            n_decoder_blocks: 1,
            d_ff: 256,
            word_embed_dim: 64,
            n_pre_poses: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.d_model % 2 != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be even for sinusoidal positions",
                self.d_model
            )));
        }
        if self.vocab_size < crate::data::RESERVED_IDS as usize {
            return Err(Error::Config(format!(
                "vocab_size {} smaller than the reserved id range",
                self.vocab_size
            )));
        }
        if self.n_pre_poses == 0 || self.n_pre_poses >= POSE_LEN {
            return Err(Error::Config(format!(
                "n_pre_poses {} outside 1..{POSE_LEN}",
                self.n_pre_poses
            )));
        }
        Ok(())
    }
}

/// Sinusoidal positional encoding rows for arbitrary positions:
/// `PE[pos, 2i] = sin(pos / 10000^(2i/dim))`, `PE[pos, 2i+1] = cos(same)`.
pub fn positional_rows(positions: &[usize], dim: usize) -> Array2<f64> {
    assert!(dim % 2 == 0, "positional dim must be even");
    let mut pe = Array2::zeros((positions.len(), dim));
    for (row, &pos) in positions.iter().enumerate() {
        for i in 0..dim / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            pe[[row, 2 * i]] = angle.sin();
            pe[[row, 2 * i + 1]] = angle.cos();
        }
    }
    pe
}

/// Positional encoding for positions `0..length`.
pub fn sinusoidal_positional_encoding(length: usize, dim: usize) -> Array2<f64> {
    let positions: Vec<usize> = (0..length).collect();
    positional_rows(&positions, dim)
}

/// Token ids representing absent text: every position masked.
pub fn missing_text_ids() -> Vec<usize> {
    vec![crate::data::MASK_ID as usize; TEXT_LEN]
}

/// Log-mel matrix representing absent speech: every frame is the sentinel,
/// which the embedder turns into the learned mask vector (the same
/// representation full-ignore masking produces in pre-training).
pub fn missing_speech_features() -> Array2<f64> {
    Array2::from_elem((crate::data::SPEECH_LEN, crate::data::N_MELS), MASK_SENTINEL)
}

/// Encoder pose stream for generation: the known pre-poses followed by
/// sentinel rows for the frames to be generated.
pub fn generation_pose_stream(pre_poses: &Array2<f64>) -> Array2<f64> {
    let n_pre = pre_poses.nrows();
    let mut stream = Array2::from_elem((POSE_LEN, POSE_DIM), MASK_SENTINEL);
    stream.slice_mut(s![0..n_pre, ..]).assign(pre_poses);
    stream
}

/// Generate a full `[40 x 165]` gesture (normalized units) from any subset
/// of conditioning modalities. Frames `0..n_pre_poses` are the given
/// pre-poses verbatim; later frames are decoded autoregressively and clamped
/// to [-1, 1]. Absent modalities use their full-ignore mask representation.
pub fn generate_gesture(
    store: &ParamStore,
    cfg: &ModelConfig,
    text: Option<&TextSequence>,
    speech: Option<&SpeechFeatures>,
    pre_poses: &Array2<f64>,
) -> Result<PoseSequence> {
    if text.is_none() && speech.is_none() {
        return Err(Error::NoConditioningModality);
    }
    cfg.validate()?;
    if pre_poses.dim() != (cfg.n_pre_poses, POSE_DIM) {
        return Err(Error::ShapeMismatch(format!(
            "pre_poses {:?}, expected ({}, {POSE_DIM})",
            pre_poses.dim(),
            cfg.n_pre_poses
        )));
    }

    let g = Graph::new();
    let p = store.bind(&g);
    let ids = match text {
        Some(t) => t.ids_usize(),
        None => missing_text_ids(),
    };
    let log_mel = match speech {
        Some(s) => s.log_mel.clone(),
        None => missing_speech_features(),
    };
    let emb = Embedded {
        text: embed_text(&g, &p, &ids)?,
        speech: embed_speech(&g, &p, &log_mel),
        pose: embed_pose(&g, &p, &generation_pose_stream(pre_poses)),
    };
    let memory = encode(&g, &p, cfg, &emb);
    let frames = autoregressive_decode(&g, &p, cfg, memory, g.constant(pre_poses.clone()));

    let mut out = Array2::zeros((POSE_LEN, POSE_DIM));
    out.slice_mut(s![0..cfg.n_pre_poses, ..]).assign(pre_poses);
    for (i, f) in frames.iter().enumerate() {
        out.row_mut(cfg.n_pre_poses + i).assign(&g.value(*f).row(0));
    }
    Ok(PoseSequence { rotations: out })
}
