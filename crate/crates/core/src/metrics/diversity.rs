//! Latent diversity: mean Euclidean distance between the autoencoder codes
//! of seeded-random distinct clip pairs.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::metrics::{FgdAutoencoder, GestureSet};
use crate::{Error, Result};

/// Mean latent distance over `n_pairs` distinct pairs drawn with the seed.
pub fn diversity(
    set: &GestureSet,
    ae: &FgdAutoencoder,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    let n = set.len();
    if n < 2 {
        return Err(Error::Metric(
            "diversity needs at least 2 clips".into(),
        ));
    }
    let latents = ae.latents(set);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..n_pairs {
        let i = rng.random_range(0..n);
        let j = loop {
            let j = rng.random_range(0..n);
            if j != i {
                break j;
            }
        };
        let d: f64 = latents
            .row(i)
            .iter()
            .zip(latents.row(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += d.sqrt();
    }
    Ok(total / n_pairs as f64)
}
