//! Named parameter storage, deterministic initialization, and per-graph
//! binding.
//!
//! Every trainable array has a stable dotted name (`encoder.block2.attn.wq`,
//! `embedder.pose.mask_vec`, ...). Initialization draws each array from its
//! own rng stream keyed by (seed, name), so adding or removing parameters
//! never shifts the values of the others.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::{Graph, Tensor};
use crate::data::{N_MELS, POSE_DIM};
use crate::model::ModelConfig;

/// How an array is filled at initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    /// Uniform(-0.05, 0.05): embedding tables and mask vectors.
    SmallUniform,
    /// Uniform Xavier/Glorot: weight matrices.
    Xavier,
    Zeros,
    Ones,
}

/// (name, rows, cols, init) for every parameter of the model.
fn param_specs(cfg: &ModelConfig) -> Vec<(String, usize, usize, Init)> {
    let d = cfg.d_model;
    let mut specs = Vec::new();

    let fc_stack = |specs: &mut Vec<(String, usize, usize, Init)>,
                        prefix: &str,
                        dims: [usize; 4]| {
        for i in 0..3 {
            specs.push((format!("{prefix}.fc{i}.w"), dims[i], dims[i + 1], Init::Xavier));
            specs.push((format!("{prefix}.fc{i}.b"), 1, dims[i + 1], Init::Zeros));
        }
    };

    specs.push((
        "embedder.text.table".into(),
        cfg.vocab_size,
        cfg.word_embed_dim,
        Init::SmallUniform,
    ));
    fc_stack(&mut specs, "embedder.text", [cfg.word_embed_dim, d, d, d]);
    fc_stack(&mut specs, "embedder.speech", [N_MELS, d, d, d]);
    specs.push(("embedder.speech.mask_vec".into(), 1, d, Init::SmallUniform));
    fc_stack(&mut specs, "embedder.pose", [POSE_DIM, d, d, d]);
    specs.push(("embedder.pose.mask_vec".into(), 1, d, Init::SmallUniform));

    let block = |specs: &mut Vec<(String, usize, usize, Init)>, prefix: &str| {
        for ln in ["ln1", "ln2"] {
            specs.push((format!("{prefix}.{ln}.gamma"), 1, d, Init::Ones));
            specs.push((format!("{prefix}.{ln}.beta"), 1, d, Init::Zeros));
        }
        for w in ["wq", "wk", "wv", "wo"] {
            specs.push((format!("{prefix}.attn.{w}"), d, d, Init::Xavier));
        }
        for b in ["bq", "bk", "bv", "bo"] {
            specs.push((format!("{prefix}.attn.{b}"), 1, d, Init::Zeros));
        }
        specs.push((format!("{prefix}.ff.w1"), d, cfg.d_ff, Init::Xavier));
        specs.push((format!("{prefix}.ff.b1"), 1, cfg.d_ff, Init::Zeros));
        specs.push((format!("{prefix}.ff.w2"), cfg.d_ff, d, Init::Xavier));
        specs.push((format!("{prefix}.ff.b2"), 1, d, Init::Zeros));
    };
    for i in 0..cfg.n_encoder_blocks {
        block(&mut specs, &format!("encoder.block{i}"));
    }
    for i in 0..cfg.n_decoder_blocks {
        block(&mut specs, &format!("decoder.block{i}"));
    }
    // Final norm on the decoder output. The decoder is re-initialized for
    // fine-tuning, and without this the un-normalized residual stream can
    // drive the pose head's GELUs into exact-zero saturation (dead gradients).
    specs.push(("decoder.ln_f.gamma".into(), 1, d, Init::Ones));
    specs.push(("decoder.ln_f.beta".into(), 1, d, Init::Zeros));

    fc_stack(&mut specs, "generator.text", [d, d, d, cfg.vocab_size]);
    fc_stack(&mut specs, "generator.speech", [d, d, d, N_MELS]);
    fc_stack(&mut specs, "generator.pose", [d, d, d, POSE_DIM]);
    specs
}

fn name_seed(seed: u64, name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn init_array(name: &str, rows: usize, cols: usize, init: Init, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(name_seed(seed, name));
    match init {
        Init::SmallUniform => {
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-0.05..0.05))
        }
        Init::Xavier => {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
        }
        Init::Zeros => Array2::zeros((rows, cols)),
        Init::Ones => Array2::from_elem((rows, cols), 1.0),
    }
}

/// All model parameters, keyed by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    values: BTreeMap<String, Array2<f64>>,
}

impl ParamStore {
    /// Deterministically initialize every parameter for `cfg`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let values = param_specs(cfg)
            .into_iter()
            .map(|(name, r, c, init)| {
                let a = init_array(&name, r, c, init, seed);
                (name, a)
            })
            .collect();
        Self { values }
    }

    /// Rebuild from explicit arrays (checkpoint load).
    pub fn from_arrays(values: BTreeMap<String, Array2<f64>>) -> Self {
        Self { values }
    }

    /// Re-draw every parameter under `prefix` from its init distribution.
    pub fn reinit_prefix(&mut self, cfg: &ModelConfig, seed: u64, prefix: &str) {
        for (name, r, c, init) in param_specs(cfg) {
            if name.starts_with(prefix) {
                self.values.insert(name.clone(), init_array(&name, r, c, init, seed));
            }
        }
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        self.values
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Array2<f64> {
        self.values
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn names(&self) -> Vec<String> {
        self.values.keys().cloned().collect()
    }

    /// Names under any of the given dotted prefixes, in sorted order.
    pub fn names_under(&self, prefixes: &[&str]) -> Vec<String> {
        self.values
            .keys()
            .filter(|n| prefixes.iter().any(|p| n.starts_with(p)))
            .cloned()
            .collect()
    }

    pub fn arrays(&self) -> &BTreeMap<String, Array2<f64>> {
        &self.values
    }

    /// Bind every parameter into `g` as a leaf node.
    pub fn bind(&self, g: &Graph) -> BoundParams {
        let map = self
            .values
            .iter()
            .map(|(name, value)| (name.clone(), g.param(value.clone())))
            .collect();
        BoundParams { map }
    }

    /// Total scalar count, for reporting.
    pub fn n_scalars(&self) -> usize {
        self.values.values().map(|a| a.len()).sum()
    }
}

/// Tape handles for one forward pass, keyed by parameter name.
pub struct BoundParams {
    map: BTreeMap<String, Tensor>,
}

impl BoundParams {
    /// Handle for a parameter; panics on unknown names (an internal bug, not
    /// an input error).
    pub fn t(&self, name: &str) -> Tensor {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }
}
