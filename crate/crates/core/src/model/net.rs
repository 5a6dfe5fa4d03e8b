//! Forward passes for the four sub-networks: frame-wise embedder,
//! self-attention encoder, cross-attention decoder, and frame-wise generator.
//!
//! Everything operates on one autodiff [`Graph`] so a single backward call
//! differentiates any composite loss, including autoregressive chains where
//! generated frames are fed back in as queries.

use ndarray::Array2;

use crate::autodiff::{Graph, Tensor};
use crate::data::{POSE_LEN, SPEECH_LEN, TEXT_LEN};
use crate::masking::sentinel_rows;
use crate::model::{positional_rows, BoundParams, ModelConfig};
use crate::{Error, Result};

/// Layer-norm stabilizer.
pub const LN_EPS: f64 = 1e-5;

/// Total encoder sequence length: text then speech then pose rows.
pub const SEQ_LEN: usize = TEXT_LEN + SPEECH_LEN + POSE_LEN;

/// Row ranges of each modality inside the concatenated encoder sequence.
pub const TEXT_ROWS: (usize, usize) = (0, TEXT_LEN);
pub const SPEECH_ROWS: (usize, usize) = (TEXT_LEN, TEXT_LEN + SPEECH_LEN);
pub const POSE_ROWS: (usize, usize) = (TEXT_LEN + SPEECH_LEN, SEQ_LEN);

/// Per-modality embedder outputs, each `[len x d_model]`.
pub struct Embedded {
    pub text: Tensor,
    pub speech: Tensor,
    pub pose: Tensor,
}

/// Three fully-connected layers with GELU between them; the last is linear.
fn fc3(g: &Graph, p: &BoundParams, prefix: &str, x: Tensor) -> Tensor {
    let mut h = x;
    for i in 0..3 {
        h = g.add_row(
            g.matmul(h, p.t(&format!("{prefix}.fc{i}.w"))),
            p.t(&format!("{prefix}.fc{i}.b")),
        );
        if i < 2 {
            h = g.gelu(h);
        }
    }
    h
}

/// Replace rows flagged in `masked` by the learned mask vector `name`.
fn substitute_mask_rows(
    g: &Graph,
    p: &BoundParams,
    name: &str,
    e: Tensor,
    masked: &[bool],
) -> Tensor {
    if masked.iter().any(|&m| m) {
        let mv = g.repeat_rows(p.t(name), masked.len());
        g.select_rows(e, mv, masked)
    } else {
        e
    }
}

/// Embed a token sequence: table lookup then the 3-layer projection.
pub fn embed_text(g: &Graph, p: &BoundParams, ids: &[usize]) -> Result<Tensor> {
    let (vocab_size, _) = g.shape(p.t("embedder.text.table"));
    for &id in ids {
        if id >= vocab_size {
            return Err(Error::TokenOutOfRange { id, vocab_size });
        }
    }
    let e = g.embedding(p.t("embedder.text.table"), ids);
    Ok(fc3(g, p, "embedder.text", e))
}

/// Embed speech rows; sentinel rows come out as the learned mask vector.
pub fn embed_speech(g: &Graph, p: &BoundParams, log_mel: &Array2<f64>) -> Tensor {
    let masked = sentinel_rows(log_mel);
    let e = fc3(g, p, "embedder.speech", g.constant(log_mel.clone()));
    substitute_mask_rows(g, p, "embedder.speech.mask_vec", e, &masked)
}

/// Embed pose rows given as a raw array; sentinel rows come out as the
/// learned mask vector.
pub fn embed_pose(g: &Graph, p: &BoundParams, rotations: &Array2<f64>) -> Tensor {
    let masked = sentinel_rows(rotations);
    embed_pose_rows(g, p, g.constant(rotations.clone()), &masked)
}

/// Embed pose rows already on the tape (e.g. generated frames); `masked`
/// flags rows to replace with the mask vector.
pub fn embed_pose_rows(g: &Graph, p: &BoundParams, rows: Tensor, masked: &[bool]) -> Tensor {
    let e = fc3(g, p, "embedder.pose", rows);
    substitute_mask_rows(g, p, "embedder.pose.mask_vec", e, masked)
}

/// Multi-head attention with queries from `q_in` and keys/values from
/// `kv_in` (same tensor for self-attention).
fn multi_head_attention(
    g: &Graph,
    p: &BoundParams,
    prefix: &str,
    q_in: Tensor,
    kv_in: Tensor,
    n_heads: usize,
) -> Tensor {
    let t = |s: &str| p.t(&format!("{prefix}.{s}"));
    let q = g.add_row(g.matmul(q_in, t("wq")), t("bq"));
    let k = g.add_row(g.matmul(kv_in, t("wk")), t("bk"));
    let v = g.add_row(g.matmul(kv_in, t("wv")), t("bv"));
    let (_, d) = g.shape(q);
    let dh = d / n_heads;
    let heads: Vec<Tensor> = (0..n_heads)
        .map(|h| {
            let qh = g.slice_cols(q, h * dh, (h + 1) * dh);
            let kh = g.slice_cols(k, h * dh, (h + 1) * dh);
            let vh = g.slice_cols(v, h * dh, (h + 1) * dh);
            let scores = g.scale(g.matmul_nt(qh, kh), 1.0 / (dh as f64).sqrt());
            g.matmul(g.softmax_rows(scores), vh)
        })
        .collect();
    g.add_row(g.matmul(g.concat_cols(&heads), t("wo")), t("bo"))
}

/// One pre-norm transformer block: attention and feed-forward sub-layers,
/// each wrapped as `x + sublayer(layer_norm(x))`. With every block weight at
/// zero the block is exactly the identity, which keeps the untrained encoder
/// well-behaved and testable.
fn transformer_block(
    g: &Graph,
    p: &BoundParams,
    prefix: &str,
    cfg: &ModelConfig,
    x: Tensor,
    cross_kv: Option<Tensor>,
) -> Tensor {
    let t = |s: &str| p.t(&format!("{prefix}.{s}"));
    let h = g.layer_norm(x, t("ln1.gamma"), t("ln1.beta"), LN_EPS);
    let kv = cross_kv.unwrap_or(h);
    let attn = multi_head_attention(g, p, &format!("{prefix}.attn"), h, kv, cfg.n_heads);
    let x = g.add(x, attn);

    let h2 = g.layer_norm(x, t("ln2.gamma"), t("ln2.beta"), LN_EPS);
    let f = g.gelu(g.add_row(g.matmul(h2, t("ff.w1")), t("ff.b1")));
    let f = g.add_row(g.matmul(f, t("ff.w2")), t("ff.b2"));
    g.add(x, f)
}

/// Encode an embedded triple into hidden states `[117 x d_model]`:
/// concatenate text/speech/pose rows, add the sinusoidal positional
/// encoding, then run the self-attention blocks (no causal mask).
pub fn encode(g: &Graph, p: &BoundParams, cfg: &ModelConfig, emb: &Embedded) -> Tensor {
    let x = g.concat_rows(&[emb.text, emb.speech, emb.pose]);
    let positions: Vec<usize> = (0..SEQ_LEN).collect();
    let pe = g.constant(positional_rows(&positions, cfg.d_model));
    let mut x = g.add(x, pe);
    for i in 0..cfg.n_encoder_blocks {
        x = transformer_block(g, p, &format!("encoder.block{i}"), cfg, x, None);
    }
    x
}

/// Decode query rows against encoder memory. `positions[i]` is the pose
/// frame index of query row `i`, used for the query positional encoding.
///
/// The decoder block has no query self-attention, so each output row depends
/// only on its own query row and the memory; callers may decode any subset
/// of rows and get bit-identical results.
pub fn decode_rows(
    g: &Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    queries: Tensor,
    positions: &[usize],
    memory: Tensor,
) -> Tensor {
    let q = g.add(queries, g.constant(positional_rows(positions, cfg.d_model)));
    let out = transformer_block(g, p, "decoder.block0", cfg, q, Some(memory));
    // Final norm keeps the decoder's residual stream bounded before it feeds
    // the pose head; a freshly re-initialized decoder can otherwise emit rows
    // large enough to saturate the head's GELUs permanently.
    g.layer_norm(out, p.t("decoder.ln_f.gamma"), p.t("decoder.ln_f.beta"), LN_EPS)
}

/// One autoregressive step: cross-attend embeddings of frames `0..k` against
/// memory and return the representation at the last query position, `[1 x
/// d_model]`.
pub fn decode_step(
    g: &Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    memory: Tensor,
    prev_pose_embeds: Tensor,
) -> Result<Tensor> {
    let (k, _) = g.shape(prev_pose_embeds);
    if k == 0 {
        return Err(Error::EmptyDecoderQuery);
    }
    let positions: Vec<usize> = (0..k).collect();
    let out = decode_rows(g, p, cfg, prev_pose_embeds, &positions, memory);
    Ok(g.slice_rows(out, k - 1, k))
}

/// Frame-wise text head: vocabulary logits per row.
pub fn generate_text_logits(g: &Graph, p: &BoundParams, x: Tensor) -> Tensor {
    fc3(g, p, "generator.text", x)
}

/// Frame-wise speech head: log-mel features per row.
pub fn generate_speech(g: &Graph, p: &BoundParams, x: Tensor) -> Tensor {
    fc3(g, p, "generator.speech", x)
}

/// Frame-wise pose head: normalized joint angles per row.
pub fn generate_pose(g: &Graph, p: &BoundParams, x: Tensor) -> Tensor {
    fc3(g, p, "generator.pose", x)
}

/// Split hidden states `[117 x d]` into the three modality segments.
pub fn split_segments(g: &Graph, h: Tensor) -> (Tensor, Tensor, Tensor) {
    (
        g.slice_rows(h, TEXT_ROWS.0, TEXT_ROWS.1),
        g.slice_rows(h, SPEECH_ROWS.0, SPEECH_ROWS.1),
        g.slice_rows(h, POSE_ROWS.0, POSE_ROWS.1),
    )
}

/// Autoregressively generate frames `n_pre_poses..POSE_LEN`. `pre_poses` is
/// `[n_pre_poses x 165]` on the tape; returns one `[1 x 165]` tensor per
/// generated frame, each clamped to [-1, 1] before being fed back as the
/// next query. Gradients flow through the whole chain.
pub fn autoregressive_decode(
    g: &Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    memory: Tensor,
    pre_poses: Tensor,
) -> Vec<Tensor> {
    let n_pre = cfg.n_pre_poses;
    assert_eq!(g.shape(pre_poses).0, n_pre);
    let mut prev = g.slice_rows(pre_poses, n_pre - 1, n_pre);
    let mut frames = Vec::with_capacity(POSE_LEN - n_pre);
    for n in n_pre..POSE_LEN {
        // Frame n attends with the embedding of frame n-1 at query position
        // n-1; earlier frames influence it through the generation chain.
        let q = embed_pose_rows(g, p, prev, &[false]);
        let dec = decode_rows(g, p, cfg, q, &[n - 1], memory);
        let frame = g.clamp(generate_pose(g, p, dec), -1.0, 1.0);
        frames.push(frame);
        prev = frame;
    }
    frames
}
