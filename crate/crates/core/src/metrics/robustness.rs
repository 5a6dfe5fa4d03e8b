//! Modality-dropout evaluation: generate gestures under text-only,
//! speech-only, both, and noisy-speech conditions, then score each
//! condition with the full metric suite against the ground-truth clips.

use ndarray::s;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{compute_log_mel, Dataset, SAMPLE_RATE};
use crate::metrics::{full_report, FgdAutoencoder, GestureSet, MetricReport};
use crate::model::generate_gesture;
use crate::training::Checkpoint;
use crate::{Error, Result};

/// Input-availability condition for one evaluation pass. Noisy speech is
/// evaluated speech-only, with Gaussian noise added to the waveform before
/// feature extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Condition {
    TextOnly,
    SpeechOnly,
    TextSpeech,
    NoisySpeech,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::TextOnly,
        Condition::SpeechOnly,
        Condition::TextSpeech,
        Condition::NoisySpeech,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Condition::TextOnly => "text-only",
            Condition::SpeechOnly => "speech-only",
            Condition::TextSpeech => "text+speech",
            Condition::NoisySpeech => "noisy-speech",
        }
    }
}

/// One condition's metric row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    /// Set for the noisy-speech condition only.
    pub snr_db: Option<f64>,
    pub metrics: MetricReport,
}

/// Full dropout-evaluation result, one row per requested condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub checkpoint_hash: String,
    pub seed: u64,
    pub conditions: Vec<ConditionReport>,
}

fn add_noise_at_snr(samples: &[f64], snr_db: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let power = samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64;
    let noise_power = if power > 0.0 {
        power / 10f64.powf(snr_db / 10.0)
    } else {
        1e-6
    };
    let sigma = noise_power.sqrt();
    samples
        .iter()
        .map(|s| s + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Generate gestures for every clip under one condition.
fn generate_condition(
    ckpt: &Checkpoint,
    dataset: &Dataset,
    condition: Condition,
    snr_db: f64,
    seed: u64,
) -> Result<GestureSet> {
    let cfg = &ckpt.meta.model;
    let n_pre = cfg.n_pre_poses;
    let mut clips = Vec::with_capacity(dataset.clips.len());
    for (idx, loaded) in dataset.clips.iter().enumerate() {
        let clip = &loaded.clip;
        let pre = clip.pose.rotations.slice(s![0..n_pre, ..]).to_owned();
        let noisy_features;
        let (text, speech) = match condition {
            Condition::TextOnly => (Some(&clip.text), None),
            Condition::SpeechOnly => (None, Some(&clip.speech)),
            Condition::TextSpeech => (Some(&clip.text), Some(&clip.speech)),
            Condition::NoisySpeech => {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let noisy = add_noise_at_snr(&loaded.samples, snr_db, &mut rng);
                noisy_features = compute_log_mel(&noisy, SAMPLE_RATE)?;
                (None, Some(&noisy_features))
            }
        };
        let generated = generate_gesture(&ckpt.params, cfg, text, speech, &pre)?;
        clips.push(generated.rotations);
    }
    GestureSet::new(clips)
}

/// Evaluate a stage-3 checkpoint under each condition. The same
/// autoencoder, reference set, and paired audio are reused across rows so
/// the columns are comparable.
pub fn evaluate_robustness(
    ckpt: &Checkpoint,
    dataset: &Dataset,
    conditions: &[Condition],
    snr_db: f64,
    ae: &FgdAutoencoder,
    seed: u64,
) -> Result<RobustnessReport> {
    if ckpt.meta.stage != 3 {
        return Err(Error::StageMismatch {
            expected: 3,
            actual: ckpt.meta.stage,
        });
    }
    if dataset.clips.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let reference = GestureSet::new(
        dataset
            .clips
            .iter()
            .map(|c| c.clip.pose.rotations.clone())
            .collect(),
    )?;
    let audio: Vec<Vec<f64>> = dataset.clips.iter().map(|c| c.samples.clone()).collect();

    let mut rows = Vec::with_capacity(conditions.len());
    for &condition in conditions {
        let generated = generate_condition(ckpt, dataset, condition, snr_db, seed)?;
        let metrics = full_report(&generated, &reference, &audio, ae, seed)?;
        rows.push(ConditionReport {
            condition: condition.label().to_string(),
            snr_db: (condition == Condition::NoisySpeech).then_some(snr_db),
            metrics,
        });
    }
    Ok(RobustnessReport {
        checkpoint_hash: ckpt.content_hash()?,
        seed,
        conditions: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic_corpus;
    use crate::metrics::train_fgd_autoencoder;
    use crate::model::ModelConfig;
    use crate::training::{train_stage1, train_stage2, train_stage3, StageConfig};

    fn quick_stage3(dataset: &Dataset, seed: u64) -> Checkpoint {
        let model = ModelConfig {
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            word_embed_dim: 8,
            ..ModelConfig::with_vocab(dataset.vocab.size())
        };
        let quick = |stage: u8| StageConfig {
            epochs: 1,
            batch_size: 4,
            ..match stage {
                1 => StageConfig::stage1(seed),
                2 => StageConfig::stage2(seed),
                _ => StageConfig::stage3(seed),
            }
        };
        let s1 = train_stage1(dataset, &model, &quick(1)).unwrap();
        let s2 = train_stage2(dataset, &s1.checkpoint, &quick(2)).unwrap();
        train_stage3(dataset, &s2.checkpoint, &quick(3)).unwrap().checkpoint
    }

    #[test]
    fn all_conditions_produce_finite_rows() {
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic_corpus(dir.path(), 8, 77, 10).unwrap();
        let dataset = Dataset::load(dir.path()).unwrap();
        let ckpt = quick_stage3(&dataset, 3);
        let reference = GestureSet::new(
            dataset
                .clips
                .iter()
                .map(|c| c.clip.pose.rotations.clone())
                .collect(),
        )
        .unwrap();
        let ae = train_fgd_autoencoder(&reference, 1).unwrap();

        let report =
            evaluate_robustness(&ckpt, &dataset, &Condition::ALL, 10.0, &ae, 5).unwrap();
        assert_eq!(report.conditions.len(), Condition::ALL.len());
        for row in &report.conditions {
            let m = &row.metrics;
            for v in [m.mpjae, m.mmd, m.fgd, m.bc, m.diversity] {
                assert!(v.is_finite(), "{}: {v}", row.condition);
            }
            assert!(m.mpjae >= 0.0);
            assert!(m.mmd >= -1e-6);
            assert!(m.fgd >= -1e-6);
            assert!((0.0..=1.0).contains(&m.bc));
            assert!(m.diversity >= 0.0);
            assert_eq!(m.autoencoder_hash, ae.content_hash().unwrap());
        }
        assert_eq!(
            report.conditions[3].snr_db,
            Some(10.0),
            "noisy row records its SNR"
        );
        assert_eq!(report.conditions[0].snr_db, None);
    }

    #[test]
    fn non_final_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic_corpus(dir.path(), 8, 78, 10).unwrap();
        let dataset = Dataset::load(dir.path()).unwrap();
        let model = ModelConfig {
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            word_embed_dim: 8,
            ..ModelConfig::with_vocab(dataset.vocab.size())
        };
        let cfg = StageConfig {
            epochs: 1,
            batch_size: 4,
            ..StageConfig::stage1(1)
        };
        let s1 = train_stage1(&dataset, &model, &cfg).unwrap();
        let reference = GestureSet::new(
            dataset
                .clips
                .iter()
                .map(|c| c.clip.pose.rotations.clone())
                .collect(),
        )
        .unwrap();
        let ae = train_fgd_autoencoder(&reference, 1).unwrap();
        assert!(matches!(
            evaluate_robustness(&s1.checkpoint, &dataset, &Condition::ALL, 10.0, &ae, 5),
            Err(Error::StageMismatch { .. })
        ));
    }
}
