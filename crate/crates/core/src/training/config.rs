//! TOML config file overriding stage and model defaults, e.g.:
//!
//! ```toml
//! seed = 7
//!
//! [model]
//! d_model = 64
//!
//! [stage3]
//! epochs = 200
//! batch_size = 8
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::model::ModelConfig;
use crate::training::StageConfig;
use crate::{Error, Result};

/// Per-stage overrides; unset keys keep the defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageOverride {
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub grad_clip_norm: Option<f64>,
    pub unfreeze_all: Option<bool>,
    pub joint_embedding_weight: Option<f64>,
    pub pose_alpha: Option<f64>,
    pub pose_beta: Option<f64>,
    pub pose_gamma: Option<f64>,
    pub velocity_cap: Option<f64>,
}

impl StageOverride {
    pub fn apply(&self, cfg: &mut StageConfig) {
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if self.grad_clip_norm.is_some() {
            cfg.grad_clip_norm = self.grad_clip_norm;
        }
        if let Some(v) = self.unfreeze_all {
            cfg.unfreeze_all = v;
        }
        if let Some(v) = self.joint_embedding_weight {
            cfg.joint_embedding_weight = v;
        }
        if let Some(v) = self.pose_alpha {
            cfg.pose_weights.alpha = v;
        }
        if let Some(v) = self.pose_beta {
            cfg.pose_weights.beta = v;
        }
        if let Some(v) = self.pose_gamma {
            cfg.pose_weights.gamma = v;
        }
        if let Some(v) = self.velocity_cap {
            cfg.pose_weights.velocity_cap = v;
        }
    }
}

/// Architecture overrides; vocabulary size always comes from the dataset.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverride {
    pub d_model: Option<usize>,
    pub n_heads: Option<usize>,
    pub n_encoder_blocks: Option<usize>,
    pub d_ff: Option<usize>,
    pub word_embed_dim: Option<usize>,
    pub n_pre_poses: Option<usize>,
}

impl ModelOverride {
    pub fn apply(&self, cfg: &mut ModelConfig) {
        if let Some(v) = self.d_model {
            cfg.d_model = v;
        }
        if let Some(v) = self.n_heads {
            cfg.n_heads = v;
        }
        if let Some(v) = self.n_encoder_blocks {
            cfg.n_encoder_blocks = v;
        }
        if let Some(v) = self.d_ff {
            cfg.d_ff = v;
        }
        if let Some(v) = self.word_embed_dim {
            cfg.word_embed_dim = v;
        }
        if let Some(v) = self.n_pre_poses {
            cfg.n_pre_poses = v;
        }
    }
}

/// Whole override file. Unknown keys are errors so typos cannot silently
/// fall back to defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFileConfig {
    pub seed: Option<u64>,
    pub model: Option<ModelOverride>,
    pub stage1: Option<StageOverride>,
    pub stage2: Option<StageOverride>,
    pub stage3: Option<StageOverride>,
}

impl TrainFileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn stage_override(&self, stage: u8) -> Option<&StageOverride> {
        match stage {
            1 => self.stage1.as_ref(),
            2 => self.stage2.as_ref(),
            3 => self.stage3.as_ref(),
            _ => None,
        }
    }

    /// Build the config for `stage` from defaults plus this file.
    pub fn stage_config(&self, stage: u8, default_seed: u64) -> StageConfig {
        let seed = self.seed.unwrap_or(default_seed);
        let mut cfg = match stage {
            1 => StageConfig::stage1(seed),
            2 => StageConfig::stage2(seed),
            _ => StageConfig::stage3(seed),
        };
        if let Some(ov) = self.stage_override(stage) {
            ov.apply(&mut cfg);
        }
        cfg
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let mut cfg = ModelConfig::with_vocab(vocab_size);
        if let Some(ov) = &self.model {
            ov.apply(&mut cfg);
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_settings() {
        let file = TrainFileConfig::default();
        let s1 = file.stage_config(1, 0);
        let s2 = file.stage_config(2, 0);
        let s3 = file.stage_config(3, 0);
        assert_eq!((s1.batch_size, s1.epochs), (64, 50));
        assert_eq!((s2.batch_size, s2.epochs), (64, 100));
        assert_eq!((s3.batch_size, s3.epochs), (32, 360));
        for s in [&s1, &s2, &s3] {
            assert_eq!(s.learning_rate, 0.005);
            assert_eq!(s.grad_clip_norm, None);
        }
    }

    #[test]
    fn overrides_apply_selectively() {
        let file = TrainFileConfig::parse(
            r#"
            seed = 99
            [model]
            d_model = 16
            n_heads = 2
            [stage3]
            epochs = 200
            batch_size = 4
            pose_beta = 0.0
            "#,
        )
        .unwrap();
        let s3 = file.stage_config(3, 0);
        assert_eq!(s3.seed, 99);
        assert_eq!(s3.epochs, 200);
        assert_eq!(s3.batch_size, 4);
        assert_eq!(s3.pose_weights.beta, 0.0);
        assert_eq!(s3.pose_weights.alpha, 1.0);
        let s1 = file.stage_config(1, 0);
        assert_eq!(s1.epochs, 50);
        let m = file.model_config(100);
        assert_eq!(m.d_model, 16);
        assert_eq!(m.vocab_size, 100);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            TrainFileConfig::parse("[stage1]\nlerning_rate = 0.1\n"),
            Err(Error::Config(_))
        ));
    }
}
