//! Evaluation suite: mean per-joint angle error, average-kernel MMD,
//! Fréchet gesture distance over autoencoder latents, audio-motion beat
//! consistency, latent diversity, and a modality-dropout harness.

mod beat;
mod diversity;
mod fgd;
mod mmd;
mod robustness;

pub use beat::{beat_consistency, clip_beat_consistency, onset_times, BC_SIGMA_S};
pub use diversity::diversity;
pub use fgd::{fgd, frechet_distance, train_fgd_autoencoder, FgdAutoencoder, LATENT_DIM};
pub use mmd::{mmd_avg, MMD_BANDWIDTH_SCALES};
pub use robustness::{evaluate_robustness, Condition, RobustnessReport};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{POSE_DIM, POSE_LEN};
use crate::{Error, Result};

/// A non-empty set of pose matrices, each `[40 x 165]` in normalized units.
#[derive(Debug, Clone)]
pub struct GestureSet {
    clips: Vec<Array2<f64>>,
}

impl GestureSet {
    pub fn new(clips: Vec<Array2<f64>>) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::Metric("gesture set is empty".into()));
        }
        for c in &clips {
            if c.dim() != (POSE_LEN, POSE_DIM) {
                return Err(Error::Metric(format!(
                    "gesture shape {:?}, expected ({POSE_LEN}, {POSE_DIM})",
                    c.dim()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Metric("non-finite gesture value".into()));
            }
        }
        Ok(Self { clips })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn clips(&self) -> &[Array2<f64>] {
        &self.clips
    }

    /// Row-major flattening of each clip to a 6600-vector.
    pub fn flattened(&self) -> Vec<Vec<f64>> {
        self.clips
            .iter()
            .map(|c| c.iter().cloned().collect())
            .collect()
    }
}

/// One row of the evaluation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mpjae: f64,
    pub mmd: f64,
    pub fgd: f64,
    pub bc: f64,
    pub diversity: f64,
    pub n_generated: usize,
    pub n_reference: usize,
    /// Hash of the autoencoder used for FGD/diversity, so scores from
    /// different embedding models are never compared by accident.
    pub autoencoder_hash: String,
    pub diversity_seed: u64,
}

/// Mean per-joint angle error in radians: mean absolute difference over
/// clips, frames, and channels, scaled from normalized units back to
/// radians.
pub fn mpjae(pred: &GestureSet, gt: &GestureSet) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Metric(format!(
            "set sizes differ: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, g) in pred.clips.iter().zip(&gt.clips) {
        for (a, b) in p.iter().zip(g.iter()) {
            sum += (a - b).abs();
            count += 1;
        }
    }
    Ok(sum / count as f64 * std::f64::consts::PI)
}

/// Compute every metric for one generated-vs-reference pair.
pub fn full_report(
    generated: &GestureSet,
    reference: &GestureSet,
    audio: &[Vec<f64>],
    ae: &FgdAutoencoder,
    diversity_seed: u64,
) -> Result<MetricReport> {
    Ok(MetricReport {
        mpjae: mpjae(generated, reference)?,
        mmd: mmd_avg(generated, reference)?,
        fgd: fgd(generated, reference, ae)?,
        bc: beat_consistency(generated, audio)?,
        diversity: diversity(generated, ae, 500, diversity_seed)?,
        n_generated: generated.len(),
        n_reference: reference.len(),
        autoencoder_hash: ae.content_hash()?,
        diversity_seed,
    })
}

#[cfg(test)]
pub(crate) fn random_set(n: usize, seed: u64) -> GestureSet {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let clips = (0..n)
        .map(|_| Array2::from_shape_fn((POSE_LEN, POSE_DIM), |_| rng.random_range(-1.0..1.0)))
        .collect();
    GestureSet::new(clips).unwrap()
}
