//! Training objectives: joint-embedding alignment, multimodal
//! reconstruction, and the autoregressive pose loss with a maximized
//! (subtracted) velocity term.
//!
//! All losses are built on the autodiff tape so one backward call covers any
//! stage total. Reductions: reconstruction and pose terms are means (scale
//! stability); the joint-embedding losses sum over tokens with a mean over
//! channels, which keeps the documented hand-computable values.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor};
use crate::data::PAD_ID;

/// Weight on the joint-embedding terms in the embedder/generator
/// pre-training total: `L = 0.01 * (L_JS + L_JP) + L_recon`.
pub const JOINT_EMBEDDING_WEIGHT: f64 = 0.01;

/// Pose-loss weights `(alpha, beta, gamma)` and the velocity cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseLossWeights {
    /// On mean |pred - gt|.
    pub alpha: f64,
    /// On mean |frame-difference velocity| of the prediction, subtracted so
    /// the optimizer *maximizes* motion.
    pub beta: f64,
    /// On the mean per-dimension gap between temporal variances.
    pub gamma: f64,
    /// Upper clip on the velocity term so maximization cannot diverge.
    pub velocity_cap: f64,
}

impl Default for PoseLossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.01,
            gamma: 0.01,
            velocity_cap: 1.0,
        }
    }
}

/// Scalar loss readouts for one step or epoch, in one flat record. Terms a
/// stage does not produce stay zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub l_js: f64,
    pub l_jp: f64,
    pub ce_text: f64,
    pub l1_speech: f64,
    pub l1_pose: f64,
    pub pose_l1: f64,
    pub velocity: f64,
    pub variance_gap: f64,
    pub total: f64,
}

impl LossValues {
    pub fn add_assign(&mut self, o: &LossValues) {
        self.l_js += o.l_js;
        self.l_jp += o.l_jp;
        self.ce_text += o.ce_text;
        self.l1_speech += o.l1_speech;
        self.l1_pose += o.l1_pose;
        self.pose_l1 += o.pose_l1;
        self.velocity += o.velocity;
        self.variance_gap += o.variance_gap;
        self.total += o.total;
    }

    pub fn scaled(&self, f: f64) -> LossValues {
        LossValues {
            l_js: self.l_js * f,
            l_jp: self.l_jp * f,
            ce_text: self.ce_text * f,
            l1_speech: self.l1_speech * f,
            l1_pose: self.l1_pose * f,
            pose_l1: self.pose_l1 * f,
            velocity: self.velocity * f,
            variance_gap: self.variance_gap * f,
            total: self.total * f,
        }
    }
}

/// Alignment loss between token embeddings and windowed means of a
/// frame-embedding sequence. Token `i` (0-based, `i < valid_len`) is paired
/// with frame window `[floor(i*n/valid_len), floor((i+1)*n/valid_len))`,
/// which partitions all `n` frames; the per-token cost is the channel-mean
/// absolute difference, summed over tokens. Zero when `valid_len` is 0.
fn windowed_alignment(g: &Graph, tokens: Tensor, frames: Tensor, valid_len: usize) -> Tensor {
    if valid_len == 0 {
        return g.scalar_constant(0.0);
    }
    let (n_tokens, _) = g.shape(tokens);
    let (n_frames, _) = g.shape(frames);
    assert!(valid_len <= n_tokens, "valid_len exceeds token rows");

    let mut total = g.scalar_constant(0.0);
    for i in 0..valid_len {
        let w0 = i * n_frames / valid_len;
        let w1 = (i + 1) * n_frames / valid_len;
        let window_mean = g.mean_rows(g.slice_rows(frames, w0, w1));
        let token = g.slice_rows(tokens, i, i + 1);
        let cost = g.mean_all(g.abs(g.sub(token, window_mean)));
        total = g.add(total, cost);
    }
    total
}

/// Joint-embedding losses `(L_JS, L_JP)`: text rows against windowed speech
/// means and against windowed pose means. Padded token rows never
/// contribute.
pub fn joint_embedding_loss(
    g: &Graph,
    e_text: Tensor,
    e_speech: Tensor,
    e_pose: Tensor,
    valid_len: usize,
) -> (Tensor, Tensor) {
    (
        windowed_alignment(g, e_text, e_speech, valid_len),
        windowed_alignment(g, e_text, e_pose, valid_len),
    )
}

/// The three reconstruction terms and their sum.
pub struct ReconLoss {
    /// Mean cross-entropy over non-padding token positions.
    pub ce_text: Tensor,
    /// Element-mean L1 over the speech features.
    pub l1_speech: Tensor,
    /// Element-mean L1 over the pose features.
    pub l1_pose: Tensor,
    /// `ce_text + l1_speech + l1_pose`.
    pub total: Tensor,
}

/// Multimodal reconstruction loss against the uncorrupted targets.
pub fn reconstruction_loss(
    g: &Graph,
    text_logits: Tensor,
    speech_pred: Tensor,
    pose_pred: Tensor,
    target_ids: &[usize],
    target_speech: &Array2<f64>,
    target_pose: &Array2<f64>,
) -> ReconLoss {
    let active: Vec<bool> = target_ids.iter().map(|&id| id != PAD_ID as usize).collect();
    let ce_text = g.cross_entropy_mean(text_logits, target_ids, &active);
    let l1_speech = g.mean_all(g.abs(g.sub(speech_pred, g.constant(target_speech.clone()))));
    let l1_pose = g.mean_all(g.abs(g.sub(pose_pred, g.constant(target_pose.clone()))));
    let total = g.add(g.add(ce_text, l1_speech), l1_pose);
    ReconLoss {
        ce_text,
        l1_speech,
        l1_pose,
        total,
    }
}

/// The pose-loss terms and their weighted total.
pub struct PoseLoss {
    /// Element-mean L1 against ground truth.
    pub l1: Tensor,
    /// Mean |frame difference| of the prediction, clipped at the cap.
    pub velocity: Tensor,
    /// Mean per-dimension |var(pred) - var(gt)| (temporal variance).
    pub variance_gap: Tensor,
    /// `alpha * l1 - beta * velocity + gamma * variance_gap`.
    pub total: Tensor,
}

/// Per-dimension temporal variance (population form), `[1 x d]`.
fn temporal_variance(g: &Graph, x: Tensor) -> Tensor {
    let centered = g.sub_row(x, g.mean_rows(x));
    g.mean_rows(g.mul(centered, centered))
}

/// Loss on the generated region of a pose sequence. `pred` and `gt` carry
/// only the generated frames (same shape). The velocity term is subtracted
/// so optimization *increases* motion, clipped at `weights.velocity_cap`.
pub fn pose_loss(g: &Graph, pred: Tensor, gt: Tensor, weights: &PoseLossWeights) -> PoseLoss {
    let (n, _) = g.shape(pred);
    assert!(n >= 2, "pose loss needs at least two frames");
    assert_eq!(g.shape(pred), g.shape(gt));

    let l1 = g.mean_all(g.abs(g.sub(pred, gt)));
    let delta = g.sub(g.slice_rows(pred, 1, n), g.slice_rows(pred, 0, n - 1));
    let velocity = g.clamp(
        g.mean_all(g.abs(delta)),
        f64::NEG_INFINITY,
        weights.velocity_cap,
    );
    let variance_gap = g.mean_all(g.abs(g.sub(temporal_variance(g, pred), temporal_variance(g, gt))));

    let total = g.add(
        g.sub(
            g.scale(l1, weights.alpha),
            g.scale(velocity, weights.beta),
        ),
        g.scale(variance_gap, weights.gamma),
    );
    PoseLoss {
        l1,
        velocity,
        variance_gap,
        total,
    }
}

/// Embedder/generator pre-training total:
/// `joint_weight * (l_js + l_jp) + recon_total`.
pub fn stage1_total(
    g: &Graph,
    l_js: Tensor,
    l_jp: Tensor,
    recon_total: Tensor,
    joint_weight: f64,
) -> Tensor {
    g.add(g.scale(g.add(l_js, l_jp), joint_weight), recon_total)
}
