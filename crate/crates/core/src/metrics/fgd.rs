//! Fréchet gesture distance: an autoencoder maps each clip to a 32-d latent
//! code; sets of codes are compared with the Gaussian Fréchet distance
//! `||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2})`.
//!
//! Architecture (fixed; any fixed choice is valid as long as the same
//! autoencoder scores every system, which the stored content hash enforces):
//! frame-wise 165 -> 64 -> 64 with GELU, temporal mean-pool, linear 64 -> 32
//! latent; decoder 32 -> 64 (GELU) -> 6600, reshaped to [40 x 165].

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Graph, Tensor};
use crate::metrics::GestureSet;
use crate::model::ParamStore;
use crate::training::checkpoint::{read_array_block, write_array_block, Reader};
use crate::training::Adam;
use crate::{Error, Result};

pub const LATENT_DIM: usize = 32;
const HIDDEN: usize = 64;
const AE_EPOCHS: usize = 200;
const AE_LEARNING_RATE: f64 = 0.005;
const COV_REGULARIZER: f64 = 1e-6;
const AE_MAGIC: &[u8; 8] = b"CSPFGDAE";
const AE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgdAutoencoderMeta {
    pub version: u32,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub n_train_clips: usize,
    pub initial_l1: f64,
    pub final_l1: f64,
}

/// Trained latent-embedding model used by FGD and Diversity.
#[derive(Debug, Clone)]
pub struct FgdAutoencoder {
    pub meta: FgdAutoencoderMeta,
    params: ParamStore,
}

fn ae_param_shapes() -> Vec<(&'static str, usize, usize)> {
    let in_dim = crate::data::POSE_DIM;
    let out_dim = crate::data::POSE_LEN * crate::data::POSE_DIM;
    vec![
        ("ae.enc.w0", in_dim, HIDDEN),
        ("ae.enc.b0", 1, HIDDEN),
        ("ae.enc.w1", HIDDEN, HIDDEN),
        ("ae.enc.b1", 1, HIDDEN),
        ("ae.enc.w2", HIDDEN, LATENT_DIM),
        ("ae.enc.b2", 1, LATENT_DIM),
        ("ae.dec.w0", LATENT_DIM, HIDDEN),
        ("ae.dec.b0", 1, HIDDEN),
        ("ae.dec.w1", HIDDEN, out_dim),
        ("ae.dec.b1", 1, out_dim),
    ]
}

fn ae_init(seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = BTreeMap::new();
    // Fixed declaration order keeps the draw sequence stable.
    for (name, rows, cols) in ae_param_shapes() {
        let arr = if rows == 1 {
            Array2::zeros((rows, cols))
        } else {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
        };
        map.insert(name.to_string(), arr);
    }
    ParamStore::from_arrays(map)
}

fn flatten_clip(clip: &Array2<f64>) -> Array2<f64> {
    Array2::from_shape_vec((1, clip.len()), clip.iter().cloned().collect()).unwrap()
}

/// Forward pass on the tape; returns (latent, reconstruction-L1).
fn ae_forward(g: &Graph, p: &crate::model::BoundParams, clip: &Array2<f64>) -> (Tensor, Tensor) {
    let x = g.constant(clip.clone());
    let h = g.gelu(g.add_row(g.matmul(x, p.t("ae.enc.w0")), p.t("ae.enc.b0")));
    let h = g.gelu(g.add_row(g.matmul(h, p.t("ae.enc.w1")), p.t("ae.enc.b1")));
    let z = g.add_row(g.matmul(g.mean_rows(h), p.t("ae.enc.w2")), p.t("ae.enc.b2"));
    let d = g.gelu(g.add_row(g.matmul(z, p.t("ae.dec.w0")), p.t("ae.dec.b0")));
    let out = g.add_row(g.matmul(d, p.t("ae.dec.w1")), p.t("ae.dec.b1"));
    let loss = g.mean_all(g.abs(g.sub(out, g.constant(flatten_clip(clip)))));
    (z, loss)
}

fn mean_recon_l1(store: &ParamStore, set: &GestureSet) -> f64 {
    let mut total = 0.0;
    for clip in set.clips() {
        let g = Graph::new();
        let bound = store.bind(&g);
        let (_, loss) = ae_forward(&g, &bound, clip);
        total += g.scalar(loss);
    }
    total / set.len() as f64
}

/// Train the latent autoencoder on `set` (full-batch Adam, L1 objective).
/// Deterministic from the seed.
pub fn train_fgd_autoencoder(set: &GestureSet, seed: u64) -> Result<FgdAutoencoder> {
    if set.len() < 8 {
        return Err(Error::Metric(format!(
            "autoencoder training needs at least 8 clips, got {}",
            set.len()
        )));
    }
    let mut store = ae_init(seed);
    let initial_l1 = mean_recon_l1(&store, set);
    let mut opt = Adam::new(AE_LEARNING_RATE);
    for _ in 0..AE_EPOCHS {
        let mut acc: BTreeMap<String, Array2<f64>> = BTreeMap::new();
        for clip in set.clips() {
            let g = Graph::new();
            let bound = store.bind(&g);
            let (_, loss) = ae_forward(&g, &bound, clip);
            let grads = g.backward(loss);
            for (name, tensor) in bound.iter() {
                if let Some(gr) = grads.get(*tensor) {
                    acc.entry(name.clone())
                        .and_modify(|a| *a += gr)
                        .or_insert_with(|| gr.clone());
                }
            }
        }
        let inv = 1.0 / set.len() as f64;
        for gr in acc.values_mut() {
            *gr *= inv;
        }
        opt.step(&mut store, &acc);
    }
    let final_l1 = mean_recon_l1(&store, set);

    // f32 quantization so the saved archive reproduces this model exactly.
    let quantized: BTreeMap<String, Array2<f64>> = store
        .arrays()
        .iter()
        .map(|(k, v)| (k.clone(), v.mapv(|x| x as f32 as f64)))
        .collect();
    Ok(FgdAutoencoder {
        meta: FgdAutoencoderMeta {
            version: AE_VERSION,
            seed,
            epochs: AE_EPOCHS,
            learning_rate: AE_LEARNING_RATE,
            n_train_clips: set.len(),
            initial_l1,
            final_l1,
        },
        params: ParamStore::from_arrays(quantized),
    })
}

impl FgdAutoencoder {
    /// Latent code of one clip, length [`LATENT_DIM`].
    pub fn latent(&self, clip: &Array2<f64>) -> Array1<f64> {
        let g = Graph::new();
        let bound = self.params.bind(&g);
        let (z, _) = ae_forward(&g, &bound, clip);
        g.value(z).row(0).to_owned()
    }

    /// Latent codes for a whole set, `[n x 32]`.
    pub fn latents(&self, set: &GestureSet) -> Array2<f64> {
        let mut out = Array2::zeros((set.len(), LATENT_DIM));
        for (i, clip) in set.clips().iter().enumerate() {
            out.row_mut(i).assign(&self.latent(clip));
        }
        out
    }

    /// Mean reconstruction L1 over a set.
    pub fn reconstruction_l1(&self, set: &GestureSet) -> f64 {
        mean_recon_l1(&self.params, set)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta_json = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::new();
        out.extend_from_slice(AE_MAGIC);
        out.extend_from_slice(&(meta_json.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta_json);
        write_array_block(&mut out, self.params.arrays());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != AE_MAGIC {
            return Err(Error::CheckpointFormat("bad autoencoder magic".into()));
        }
        let meta_len = r.u64()? as usize;
        let meta_value: serde_json::Value = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| Error::CheckpointFormat(format!("metadata not valid JSON: {e}")))?;
        let found = meta_value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::CheckpointFormat("metadata missing version field".into()))?
            as u32;
        if found != AE_VERSION {
            return Err(Error::CheckpointVersion {
                supported: AE_VERSION,
                found,
            });
        }
        let meta: FgdAutoencoderMeta = serde_json::from_value(meta_value)
            .map_err(|e| Error::CheckpointFormat(format!("bad metadata: {e}")))?;
        let map = read_array_block(&mut r)?;
        if r.at != bytes.len() {
            return Err(Error::CheckpointFormat("trailing bytes".into()));
        }
        Ok(Self {
            meta,
            params: ParamStore::from_arrays(map),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Hex SHA-256 of the archive bytes; recorded in every MetricReport.
    pub fn content_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.to_bytes()?);
        Ok(format!("{:x}", h.finalize()))
    }
}

fn moments(latents: &Array2<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = latents.nrows();
    let d = latents.ncols();
    if n < 2 {
        return Err(Error::Metric(
            "covariance needs at least 2 latent codes".into(),
        ));
    }
    let mut mu = DVector::zeros(d);
    for row in latents.rows() {
        for (k, v) in row.iter().enumerate() {
            mu[k] += v;
        }
    }
    mu /= n as f64;
    // Unbiased covariance plus a small ridge so degenerate sets stay
    // well-conditioned.
    let mut cov = DMatrix::zeros(d, d);
    for row in latents.rows() {
        let x = DVector::from_iterator(d, row.iter().cloned()) - &mu;
        cov += &x * x.transpose();
    }
    cov /= (n - 1) as f64;
    for k in 0..d {
        cov[(k, k)] += COV_REGULARIZER;
    }
    Ok((mu, cov))
}

/// Symmetric PSD square root via eigendecomposition; negative eigenvalues
/// (numerical noise) are clipped to zero.
fn sqrtm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let se = m.clone().symmetric_eigen();
    let roots = se.eigenvalues.map(|v| v.max(0.0).sqrt());
    &se.eigenvectors * DMatrix::from_diagonal(&roots) * se.eigenvectors.transpose()
}

/// Gaussian Fréchet distance between two latent-code sets `[n x d]`.
pub fn frechet_distance(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.ncols() != b.ncols() {
        return Err(Error::Metric("latent dimensions differ".into()));
    }
    let (mu_a, cov_a) = moments(a)?;
    let (mu_b, cov_b) = moments(b)?;
    // Tr((S_a S_b)^{1/2}) equals the singular-value sum of
    // sqrt(S_a) sqrt(S_b): squaring that product gives a matrix similar to
    // S_a S_b. Reading the square roots off an SVD keeps the many
    // near-zero eigenvalues of desk-scale covariances accurate, where an
    // eigensolve on the squared product loses half the digits.
    let c = sqrtm(&cov_a) * sqrtm(&cov_b);
    let tr_sqrt: f64 = c.svd(false, false).singular_values.iter().sum();
    let mean_term = (&mu_a - &mu_b).norm_squared();
    Ok(mean_term + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt)
}

/// FGD between two gesture sets under a shared autoencoder. Small sets give
/// a noisy covariance; a warning is printed when a set is not larger than
/// the latent dimension.
pub fn fgd(a: &GestureSet, b: &GestureSet, ae: &FgdAutoencoder) -> Result<f64> {
    if a.len() <= LATENT_DIM || b.len() <= LATENT_DIM {
        eprintln!(
            "warning: fgd on sets of {} and {} clips; fewer than {} makes the \
             covariance estimate unreliable",
            a.len(),
            b.len(),
            LATENT_DIM + 1
        );
    }
    frechet_distance(&ae.latents(a), &ae.latents(b))
}
