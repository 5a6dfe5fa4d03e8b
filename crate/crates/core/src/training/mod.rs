//! Three-stage training: (1) frame-wise embedder + generator with joint
//! embedding and reconstruction losses, (2) masked multimodal encoder
//! pre-training with the embedder and generator frozen, (3) joint
//! autoregressive fine-tuning of all four sub-networks with the pose loss.

mod adam;
pub(crate) mod checkpoint;
pub mod config;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CheckpointMeta, OptimizerMeta, CHECKPOINT_VERSION};
pub use config::{ModelOverride, StageOverride, TrainFileConfig};

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor};
use crate::data::{Dataset, LoadedClip, PAD_ID};
use crate::losses::{
    joint_embedding_loss, pose_loss, reconstruction_loss, stage1_total, LossValues,
    PoseLossWeights, JOINT_EMBEDDING_WEIGHT,
};
use crate::masking::{apply_mask_plan, sample_mask_plan};
use crate::model::net::{
    autoregressive_decode, embed_pose, embed_speech, embed_text, encode, generate_pose,
    generate_speech, generate_text_logits, split_segments, Embedded,
};
use crate::model::{generation_pose_stream, BoundParams, ModelConfig, ParamStore};
use crate::{Error, Result};

/// Hyper-parameters for one training stage. Defaults: Adam at learning
/// rate 0.005 with batch size 64 and 50 epochs (stage 1), 100 epochs
/// (stage 2), batch size 32 and 360 epochs (stage 3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage: u8,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub pose_weights: PoseLossWeights,
    pub joint_embedding_weight: f64,
    /// Global gradient-norm clip; `None` (the default) disables clipping.
    pub grad_clip_norm: Option<f64>,
    /// Stage-2 override: also update the embedder and generator.
    pub unfreeze_all: bool,
    /// Accept a checkpoint from the wrong predecessor stage.
    pub allow_stage_skip: bool,
}

impl StageConfig {
    pub fn stage1(seed: u64) -> Self {
        Self {
            stage: 1,
            learning_rate: 0.005,
            batch_size: 64,
            epochs: 50,
            seed,
            pose_weights: PoseLossWeights::default(),
            joint_embedding_weight: JOINT_EMBEDDING_WEIGHT,
            grad_clip_norm: None,
            unfreeze_all: false,
            allow_stage_skip: false,
        }
    }

    pub fn stage2(seed: u64) -> Self {
        Self {
            stage: 2,
            epochs: 100,
            ..Self::stage1(seed)
        }
    }

    pub fn stage3(seed: u64) -> Self {
        Self {
            stage: 3,
            batch_size: 32,
            epochs: 360,
            ..Self::stage1(seed)
        }
    }
}

/// One training-log record; the log file holds one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub stage: u8,
    /// 1-based epoch index.
    pub epoch: usize,
    pub seed: u64,
    pub loss: LossValues,
    /// Corruption-mode counts for the epoch (stage 2 only).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub mask_modes: BTreeMap<String, u64>,
    pub wall_clock_s: f64,
}

/// Append-only per-epoch training log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochLog>,
}

impl TrainLog {
    /// Write as line-delimited JSON, one epoch per line.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for rec in &self.records {
            out.push_str(&serde_json::to_string(rec)?);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut records = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(line)?);
        }
        Ok(Self { records })
    }
}

/// A finished stage: the checkpoint to carry forward plus its log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
}

fn frozen_prefixes(cfg: &StageConfig) -> Vec<&'static str> {
    match cfg.stage {
        // The encoder and decoder are not on the stage-1 graph at all;
        // freezing them as well makes the contract explicit.
        1 => vec!["encoder.", "decoder."],
        2 if cfg.unfreeze_all => vec!["decoder."],
        2 => vec!["embedder.", "generator.", "decoder."],
        _ => vec![],
    }
}

fn require_stage(ckpt: &Checkpoint, expected: u8, allow_skip: bool) -> Result<()> {
    if ckpt.meta.stage != expected && !allow_skip {
        return Err(Error::StageMismatch {
            expected,
            actual: ckpt.meta.stage,
        });
    }
    Ok(())
}

fn check_vocab(dataset: &Dataset, ckpt: &Checkpoint) -> Result<()> {
    if dataset.vocab != ckpt.meta.vocab {
        return Err(Error::Config(
            "dataset vocabulary differs from checkpoint vocabulary".into(),
        ));
    }
    Ok(())
}

fn clip_global_norm(grads: &mut BTreeMap<String, Array2<f64>>, max_norm: f64) {
    let sq: f64 = grads.values().map(|g| g.iter().map(|v| v * v).sum::<f64>()).sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            *g *= scale;
        }
    }
}

fn make_meta(model: &ModelConfig, dataset: &Dataset, cfg: &StageConfig) -> CheckpointMeta {
    CheckpointMeta {
        version: CHECKPOINT_VERSION,
        stage: cfg.stage,
        epoch: cfg.epochs,
        seed: cfg.seed,
        model: model.clone(),
        vocab: dataset.vocab.clone(),
        optimizer: OptimizerMeta {
            name: "adam".into(),
            learning_rate: cfg.learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        },
    }
}

/// Shared epoch/batch driver. Per clip, `forward` builds a fresh graph and
/// returns the scalar loss tensor plus readouts; gradients are averaged over
/// the batch, frozen prefixes are dropped, and Adam steps once per batch.
/// The per-epoch logged loss is the mean over batches.
fn run_stage<F>(
    dataset: &Dataset,
    store: &mut ParamStore,
    cfg: &StageConfig,
    mut forward: F,
) -> Result<TrainLog>
where
    F: FnMut(
        &Graph,
        &BoundParams,
        &LoadedClip,
        &mut ChaCha8Rng,
        &mut BTreeMap<String, u64>,
    ) -> Result<(Tensor, LossValues)>,
{
    if dataset.clips.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let frozen = frozen_prefixes(cfg);
    let mut opt = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        let mut order: Vec<usize> = (0..dataset.clips.len()).collect();
        order.shuffle(&mut rng);
        let mut mode_counts = BTreeMap::new();
        let mut epoch_loss = LossValues::default();
        let mut n_batches = 0usize;

        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut grad_acc: BTreeMap<String, Array2<f64>> = BTreeMap::new();
            let mut batch_loss = LossValues::default();
            for &ci in batch {
                let g = Graph::new();
                let bound = store.bind(&g);
                let (loss_t, vals) =
                    forward(&g, &bound, &dataset.clips[ci], &mut rng, &mut mode_counts)?;
                let grads = g.backward(loss_t);
                for (name, tensor) in bound.iter() {
                    if frozen.iter().any(|p| name.starts_with(p)) {
                        continue;
                    }
                    if let Some(gr) = grads.get(*tensor) {
                        grad_acc
                            .entry(name.clone())
                            .and_modify(|a| *a += gr)
                            .or_insert_with(|| gr.clone());
                    }
                }
                batch_loss.add_assign(&vals);
            }
            let inv = 1.0 / batch.len() as f64;
            for gr in grad_acc.values_mut() {
                *gr *= inv;
            }
            if let Some(limit) = cfg.grad_clip_norm {
                clip_global_norm(&mut grad_acc, limit);
            }
            opt.step(store, &grad_acc);
            epoch_loss.add_assign(&batch_loss.scaled(inv));
            n_batches += 1;
        }

        let mean = epoch_loss.scaled(1.0 / n_batches as f64);
        if !mean.total.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        log.records.push(EpochLog {
            stage: cfg.stage,
            epoch,
            seed: cfg.seed,
            loss: mean,
            mask_modes: mode_counts,
            wall_clock_s: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(log)
}

fn active_text(ids: &[usize]) -> Vec<bool> {
    ids.iter().map(|&id| id != PAD_ID as usize).collect()
}

fn stage1_clip_loss(
    g: &Graph,
    p: &BoundParams,
    loaded: &LoadedClip,
    joint_weight: f64,
) -> Result<(Tensor, LossValues)> {
    let clip = &loaded.clip;
    let ids = clip.text.ids_usize();
    let e_t = embed_text(g, p, &ids)?;
    let e_s = embed_speech(g, p, &clip.speech.log_mel);
    let e_p = embed_pose(g, p, &clip.pose.rotations);

    let (js, jp) = joint_embedding_loss(g, e_t, e_s, e_p, clip.text.valid_len);
    let recon = reconstruction_loss(
        g,
        generate_text_logits(g, p, e_t),
        generate_speech(g, p, e_s),
        generate_pose(g, p, e_p),
        &ids,
        &clip.speech.log_mel,
        &clip.pose.rotations,
    );
    let total = stage1_total(g, js, jp, recon.total, joint_weight);
    let vals = LossValues {
        l_js: g.scalar(js),
        l_jp: g.scalar(jp),
        ce_text: g.scalar(recon.ce_text),
        l1_speech: g.scalar(recon.l1_speech),
        l1_pose: g.scalar(recon.l1_pose),
        total: g.scalar(total),
        ..Default::default()
    };
    Ok((total, vals))
}

/// Stage 1: train the frame-wise embedder and generator (encoder and
/// decoder untouched) with `joint_weight * (L_JS + L_JP) + L_recon`.
pub fn train_stage1(
    dataset: &Dataset,
    model: &ModelConfig,
    cfg: &StageConfig,
) -> Result<TrainOutcome> {
    model.validate()?;
    if model.vocab_size != dataset.vocab.size() {
        return Err(Error::Config(format!(
            "model vocab_size {} != dataset vocabulary size {}",
            model.vocab_size,
            dataset.vocab.size()
        )));
    }
    let mut store = ParamStore::init(model, cfg.seed);
    let jw = cfg.joint_embedding_weight;
    let log = run_stage(dataset, &mut store, cfg, |g, p, loaded, _rng, _modes| {
        stage1_clip_loss(g, p, loaded, jw)
    })?;
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(make_meta(model, dataset, cfg), &store),
        log,
    })
}

fn stage2_clip_loss(
    g: &Graph,
    p: &BoundParams,
    loaded: &LoadedClip,
    dataset: &Dataset,
    model: &ModelConfig,
    rng: &mut ChaCha8Rng,
    modes: &mut BTreeMap<String, u64>,
) -> Result<(Tensor, LossValues)> {
    let clip = &loaded.clip;
    let plan = sample_mask_plan(rng, clip.text.valid_len);
    for label in [plan.text.label(), plan.speech.label(), plan.pose.label()] {
        *modes.entry(label.to_string()).or_insert(0) += 1;
    }
    let masked = apply_mask_plan(clip, &plan, &dataset.vocab);

    let emb = Embedded {
        text: embed_text(g, p, &masked.clip.text.ids_usize())?,
        speech: embed_speech(g, p, &masked.clip.speech.log_mel),
        pose: embed_pose(g, p, &masked.clip.pose.rotations),
    };
    let h = encode(g, p, model, &emb);
    let (h_t, h_s, h_p) = split_segments(g, h);

    // Reconstruction is scored against the clean clip over every position.
    let ids = clip.text.ids_usize();
    let recon = reconstruction_loss(
        g,
        generate_text_logits(g, p, h_t),
        generate_speech(g, p, h_s),
        generate_pose(g, p, h_p),
        &ids,
        &clip.speech.log_mel,
        &clip.pose.rotations,
    );
    let vals = LossValues {
        ce_text: g.scalar(recon.ce_text),
        l1_speech: g.scalar(recon.l1_speech),
        l1_pose: g.scalar(recon.l1_pose),
        total: g.scalar(recon.total),
        ..Default::default()
    };
    Ok((recon.total, vals))
}

/// Stage 2: masked multimodal pre-training of the encoder. A fresh
/// corruption plan is drawn per clip per step; the embedder and generator
/// stay bitwise frozen unless `unfreeze_all` is set.
pub fn train_stage2(
    dataset: &Dataset,
    ckpt: &Checkpoint,
    cfg: &StageConfig,
) -> Result<TrainOutcome> {
    require_stage(ckpt, 1, cfg.allow_stage_skip)?;
    check_vocab(dataset, ckpt)?;
    let model = ckpt.meta.model.clone();
    let mut store = ckpt.params.clone();
    let log = run_stage(dataset, &mut store, cfg, |g, p, loaded, rng, modes| {
        stage2_clip_loss(g, p, loaded, dataset, &model, rng, modes)
    })?;
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(make_meta(&model, dataset, cfg), &store),
        log,
    })
}

fn stage3_clip_loss(
    g: &Graph,
    p: &BoundParams,
    loaded: &LoadedClip,
    model: &ModelConfig,
    weights: &PoseLossWeights,
) -> Result<(Tensor, LossValues)> {
    let clip = &loaded.clip;
    let n_pre = model.n_pre_poses;
    let ids = clip.text.ids_usize();
    let pre = clip.pose.rotations.slice(s![0..n_pre, ..]).to_owned();

    let emb = Embedded {
        text: embed_text(g, p, &ids)?,
        speech: embed_speech(g, p, &clip.speech.log_mel),
        pose: embed_pose(g, p, &generation_pose_stream(&pre)),
    };
    let memory = encode(g, p, model, &emb);

    // Autoregressive rollout of the generated frames — the model consumes
    // its own outputs, not ground truth.
    let frames = autoregressive_decode(g, p, model, memory, g.constant(pre));
    let pred = g.concat_rows(&frames);
    let gt = g.constant(clip.pose.rotations.slice(s![n_pre.., ..]).to_owned());
    let pl = pose_loss(g, pred, gt, weights);

    // Text/speech reconstruction terms, read from the encoder memory as in
    // stage 2.
    let (h_t, h_s, _) = split_segments(g, memory);
    let ce = g.cross_entropy_mean(generate_text_logits(g, p, h_t), &ids, &active_text(&ids));
    let l1_speech = g.mean_all(g.abs(g.sub(
        generate_speech(g, p, h_s),
        g.constant(clip.speech.log_mel.clone()),
    )));

    let total = g.add(g.add(ce, l1_speech), pl.total);
    let vals = LossValues {
        ce_text: g.scalar(ce),
        l1_speech: g.scalar(l1_speech),
        pose_l1: g.scalar(pl.l1),
        velocity: g.scalar(pl.velocity),
        variance_gap: g.scalar(pl.variance_gap),
        total: g.scalar(total),
        ..Default::default()
    };
    Ok((total, vals))
}

/// Stage 3: joint autoregressive fine-tuning of embedder, encoder, decoder,
/// and generator. The decoder is freshly initialized here; frames beyond
/// the pre-poses are rolled out without teacher forcing and scored with the
/// pose loss plus the stage-2 text/speech reconstruction terms.
pub fn train_stage3(
    dataset: &Dataset,
    ckpt: &Checkpoint,
    cfg: &StageConfig,
) -> Result<TrainOutcome> {
    require_stage(ckpt, 2, cfg.allow_stage_skip)?;
    check_vocab(dataset, ckpt)?;
    let model = ckpt.meta.model.clone();
    let mut store = ckpt.params.clone();
    store.reinit_prefix(&model, cfg.seed, "decoder.");
    let weights = cfg.pose_weights;
    let log = run_stage(dataset, &mut store, cfg, |g, p, loaded, _rng, _modes| {
        stage3_clip_loss(g, p, loaded, &model, &weights)
    })?;
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(make_meta(&model, dataset, cfg), &store),
        log,
    })
}

/// Draw `n` corruption plans the way a stage-2 epoch would and count mode
/// labels. `valid_len = 0` draws a fresh random sentence length per plan.
pub fn mask_mode_frequencies(n: usize, seed: u64, valid_len: usize) -> BTreeMap<String, u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = BTreeMap::new();
    for _ in 0..n {
        let len = if valid_len == 0 {
            rng.random_range(1..=32)
        } else {
            valid_len
        };
        let plan = sample_mask_plan(&mut rng, len);
        for label in [plan.text.label(), plan.speech.label(), plan.pose.label()] {
            *counts.entry(label.to_string()).or_insert(0) += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic_corpus;
    use tempfile::TempDir;

    fn tiny_dataset(n_clips: usize, seed: u64) -> (TempDir, Dataset) {
        let dir = TempDir::new().unwrap();
        generate_synthetic_corpus(dir.path(), n_clips, seed, 12).unwrap();
        let ds = Dataset::load(dir.path()).unwrap();
        (dir, ds)
    }

    fn tiny_model(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            word_embed_dim: 8,
            ..ModelConfig::with_vocab(vocab_size)
        }
    }

    fn quick_cfg(stage: u8, epochs: usize) -> StageConfig {
        let base = match stage {
            1 => StageConfig::stage1(41),
            2 => StageConfig::stage2(41),
            _ => StageConfig::stage3(41),
        };
        StageConfig {
            epochs,
            batch_size: 2,
            ..base
        }
    }

    #[test]
    fn stage1_trains_only_embedder_and_generator() {
        let (_dir, ds) = tiny_dataset(3, 5);
        let model = tiny_model(ds.vocab.size());
        let out = train_stage1(&ds, &model, &quick_cfg(1, 2)).unwrap();
        assert_eq!(out.checkpoint.meta.stage, 1);
        assert_eq!(out.log.records.len(), 2);
        assert!(out.log.records.iter().all(|r| r.loss.total.is_finite()));

        // Frozen groups must match a fresh init bitwise (after the same f32
        // quantization a checkpoint applies).
        let fresh = ParamStore::init(&model, 41);
        let trained = &out.checkpoint.params;
        let mut changed = 0;
        for name in trained.names() {
            let base = fresh.get(&name).mapv(|x| x as f32 as f64);
            let now = trained.get(&name);
            let same = base
                .iter()
                .zip(now.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            if name.starts_with("encoder.") || name.starts_with("decoder.") {
                assert!(same, "{name} should be untouched");
            } else if !same {
                changed += 1;
            }
        }
        assert!(changed > 0, "embedder/generator must receive updates");
    }

    #[test]
    fn stage1_loss_improves_and_is_deterministic() {
        let (_dir, ds) = tiny_dataset(2, 9);
        let model = tiny_model(ds.vocab.size());
        let cfg = quick_cfg(1, 8);
        let a = train_stage1(&ds, &model, &cfg).unwrap();
        let b = train_stage1(&ds, &model, &cfg).unwrap();
        for (ra, rb) in a.log.records.iter().zip(&b.log.records) {
            assert_eq!(ra.loss.total.to_bits(), rb.loss.total.to_bits());
        }
        assert_eq!(
            a.checkpoint.to_bytes().unwrap(),
            b.checkpoint.to_bytes().unwrap()
        );
        let first = a.log.records.first().unwrap().loss.total;
        let best = a
            .log
            .records
            .iter()
            .map(|r| r.loss.total)
            .fold(f64::INFINITY, f64::min);
        assert!(best < first, "best {best} should beat first {first}");
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let (_dir, ds) = tiny_dataset(1, 3);
        let empty = Dataset {
            vocab: ds.vocab.clone(),
            clips: vec![],
        };
        let model = tiny_model(ds.vocab.size());
        assert!(matches!(
            train_stage1(&empty, &model, &quick_cfg(1, 1)),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn stage2_freezes_embedder_and_generator_bitwise() {
        let (_dir, ds) = tiny_dataset(3, 7);
        let model = tiny_model(ds.vocab.size());
        let s1 = train_stage1(&ds, &model, &quick_cfg(1, 1)).unwrap();
        let s2 = train_stage2(&ds, &s1.checkpoint, &quick_cfg(2, 2)).unwrap();
        assert_eq!(s2.checkpoint.meta.stage, 2);

        let mut encoder_changed = false;
        for name in s1.checkpoint.params.names() {
            let before = s1.checkpoint.params.get(&name);
            let after = s2.checkpoint.params.get(&name);
            let same = before
                .iter()
                .zip(after.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            if name.starts_with("embedder.") || name.starts_with("generator.") {
                assert!(same, "{name} must stay frozen");
            }
            if name.starts_with("encoder.") && !same {
                encoder_changed = true;
            }
        }
        assert!(encoder_changed);

        // Every modality draws one mode per clip per step.
        let rec = &s2.log.records[0];
        for modality in ["text.", "speech.", "pose."] {
            let total: u64 = rec
                .mask_modes
                .iter()
                .filter(|(k, _)| k.starts_with(modality))
                .map(|(_, v)| *v)
                .sum();
            assert_eq!(total, ds.clips.len() as u64);
        }
    }

    #[test]
    fn stage_order_is_enforced_with_explicit_override() {
        let (_dir, ds) = tiny_dataset(2, 8);
        let model = tiny_model(ds.vocab.size());
        let s1 = train_stage1(&ds, &model, &quick_cfg(1, 1)).unwrap();

        match train_stage3(&ds, &s1.checkpoint, &quick_cfg(3, 1)) {
            Err(Error::StageMismatch { expected, actual }) => {
                assert_eq!((expected, actual), (2, 1));
            }
            other => panic!("expected stage mismatch, got {other:?}"),
        }
        match train_stage2(&ds, &s1.checkpoint, &quick_cfg(2, 1)) {
            Ok(_) => {}
            other => panic!("stage 1 -> 2 should work, got {other:?}"),
        }
        let skip = StageConfig {
            allow_stage_skip: true,
            ..quick_cfg(3, 1)
        };
        train_stage3(&ds, &s1.checkpoint, &skip).expect("override should permit the skip");
    }

    #[test]
    fn stage3_updates_all_networks_and_logs_finite_terms() {
        let (_dir, ds) = tiny_dataset(2, 10);
        let model = tiny_model(ds.vocab.size());
        let s1 = train_stage1(&ds, &model, &quick_cfg(1, 1)).unwrap();
        let s2 = train_stage2(&ds, &s1.checkpoint, &quick_cfg(2, 1)).unwrap();
        let s3 = train_stage3(&ds, &s2.checkpoint, &quick_cfg(3, 2)).unwrap();
        assert_eq!(s3.checkpoint.meta.stage, 3);
        assert_eq!(s3.checkpoint.meta.epoch, 2);

        for group in ["embedder.", "encoder.", "decoder.", "generator."] {
            let moved = s2
                .checkpoint
                .params
                .names()
                .iter()
                .filter(|n| n.starts_with(group))
                .any(|n| {
                    let a = s2.checkpoint.params.get(n);
                    let b = s3.checkpoint.params.get(n);
                    a.iter().zip(b.iter()).any(|(x, y)| x.to_bits() != y.to_bits())
                });
            assert!(moved, "{group} should be updated in the joint stage");
        }
        for rec in &s3.log.records {
            assert!(rec.loss.ce_text.is_finite());
            assert!(rec.loss.l1_speech.is_finite());
            assert!(rec.loss.pose_l1.is_finite());
            assert!(rec.loss.velocity >= 0.0);
        }
    }

    #[test]
    fn train_log_round_trips_as_jsonl() {
        let (_dir, ds) = tiny_dataset(2, 11);
        let model = tiny_model(ds.vocab.size());
        let out = train_stage1(&ds, &model, &quick_cfg(1, 2)).unwrap();
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("train.jsonl");
        out.log.write_jsonl(&path).unwrap();
        let back = TrainLog::read_jsonl(&path).unwrap();
        assert_eq!(back, out.log);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn vocab_mismatch_is_rejected() {
        let (_dir, ds) = tiny_dataset(2, 12);
        let (_dir2, other) = tiny_dataset(2, 987);
        assert_ne!(ds.vocab, other.vocab);
        let model = tiny_model(ds.vocab.size());
        let s1 = train_stage1(&ds, &model, &quick_cfg(1, 1)).unwrap();
        assert!(matches!(
            train_stage2(&other, &s1.checkpoint, &quick_cfg(2, 1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gradient_clipping_bounds_the_global_norm() {
        let mut grads = BTreeMap::new();
        grads.insert("a".to_string(), Array2::from_elem((2, 2), 3.0));
        grads.insert("b".to_string(), Array2::from_elem((1, 2), 4.0));
        clip_global_norm(&mut grads, 1.0);
        let sq: f64 = grads
            .values()
            .map(|g| g.iter().map(|v| v * v).sum::<f64>())
            .sum();
        assert!((sq.sqrt() - 1.0).abs() < 1e-12);
    }
}
