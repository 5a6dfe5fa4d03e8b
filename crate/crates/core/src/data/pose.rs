//! Pose normalization and the raw `.pose.f32` file format.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::data::{POSE_DIM, POSE_LEN};
use crate::error::Error;
use crate::Result;

/// Normalized joint rotations for one clip, `[40 x 165]`, entries in [-1, 1]
/// (raw radians divided by pi).
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSequence {
    pub rotations: Array2<f64>,
}

/// Wrap into [-pi, pi]. Values already inside are returned unchanged so the
/// normalize/denormalize round trip is exact on conforming input.
fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::PI;
    if (-PI..=PI).contains(&x) {
        x
    } else {
        (x + PI).rem_euclid(2.0 * PI) - PI
    }
}

/// Wrap raw radians into [-pi, pi] and divide by pi.
pub fn normalize_pose(raw: &Array2<f64>) -> Result<PoseSequence> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pose rotations"));
    }
    let rotations = raw.mapv(|x| wrap_angle(x) / std::f64::consts::PI);
    Ok(PoseSequence { rotations })
}

/// Inverse of [`normalize_pose`]: multiply by pi back to radians.
pub fn denormalize_pose(pose: &Array2<f64>) -> Array2<f64> {
    pose.mapv(|x| x * std::f64::consts::PI)
}

/// Read a raw little-endian f32 pose file (radians). The row count is
/// inferred from the file size, which must be a multiple of 165 * 4 bytes.
pub fn read_pose_file(path: &Path) -> Result<Array2<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let row_bytes = POSE_DIM * 4;
    if bytes.is_empty() || bytes.len() % row_bytes != 0 {
        return Err(Error::Dataset(format!(
            "{}: size {} is not a positive multiple of {row_bytes} bytes per frame",
            path.display(),
            bytes.len()
        )));
    }
    let n_frames = bytes.len() / row_bytes;
    let mut out = Array2::zeros((n_frames, POSE_DIM));
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        out[[i / POSE_DIM, i % POSE_DIM]] =
            f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64;
    }
    Ok(out)
}

/// Write rows of radians as raw little-endian f32.
pub fn write_pose_file(path: &Path, pose: &Array2<f64>) -> Result<()> {
    if pose.ncols() != POSE_DIM {
        return Err(Error::ShapeMismatch(format!(
            "pose has {} columns, expected {POSE_DIM}",
            pose.ncols()
        )));
    }
    let mut bytes = Vec::with_capacity(pose.len() * 4);
    for &v in pose.iter() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Shape and range checks for a normalized pose matrix.
pub fn validate_pose(pose: &Array2<f64>) -> Result<()> {
    if pose.dim() != (POSE_LEN, POSE_DIM) {
        return Err(Error::ShapeMismatch(format!(
            "pose shape {:?}, expected ({POSE_LEN}, {POSE_DIM})",
            pose.dim()
        )));
    }
    if pose.iter().any(|v| !v.is_finite() || v.abs() > 1.0 + 1e-12) {
        return Err(Error::Dataset("pose entries outside [-1, 1]".into()));
    }
    Ok(())
}
