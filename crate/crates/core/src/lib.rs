//! Co-speech gesture generation from text and speech.
//!
//! The pipeline turns time-aligned (text, speech, pose) clips into fixed-shape
//! features, trains a four-part network (frame-wise embedder, self-attention
//! encoder, cross-attention autoregressive decoder, frame-wise generator) in
//! three stages, and scores generated gesture sets with five metrics (MPJAE,
//! MMD, FGD, beat consistency, diversity).
//!
//! All numerical work runs in `f64` on a small reverse-mode autodiff tape
//! ([`autodiff`]); checkpoints and pose files are stored as little-endian
//! `f32` on disk.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod losses;
pub mod masking;
pub mod metrics;
pub mod model;
pub mod render;
pub mod training;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
