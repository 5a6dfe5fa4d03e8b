//! Diagnostic stick-figure rendering of pose sequences.
//!
//! A pose frame is 165 channels = 55 joints x 3 axis-angle components in
//! radians. The skeleton follows the standard SMPL-X joint ordering (body,
//! jaw, eyes, then 15 joints per hand) with fixed bone lengths, so rendering
//! needs no shape parameters: forward kinematics composes each joint's local
//! rotation with its parent and offsets by a constant bone vector. Frames are
//! drawn with an orthographic front view (x right, y up) as PNG images or a
//! looping GIF at the clip frame rate.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use image::codecs::gif::{GifDecoder, GifEncoder, Repeat};
use image::{AnimationDecoder, Delay, DynamicImage, Frame, Rgb, RgbImage};
use nalgebra::{Rotation3, Vector3};
use ndarray::Array2;

use crate::data::{FPS, POSE_DIM};
use crate::error::Error;
use crate::Result;

/// Joints per frame; `POSE_DIM / 3`.
pub const N_JOINTS: usize = 55;

/// Parent of each joint. The pelvis (index 0) is the root and lists itself;
/// every other entry is strictly smaller than its child, so a single forward
/// pass visits parents before children.
pub const PARENTS: [usize; N_JOINTS] = [
    0, // 0  pelvis (root)
    0, // 1  left hip
    0, // 2  right hip
    0, // 3  spine1
    1, // 4  left knee
    2, // 5  right knee
    3, // 6  spine2
    4, // 7  left ankle
    5, // 8  right ankle
    6, // 9  spine3
    7, // 10 left foot
    8, // 11 right foot
    9, // 12 neck
    9, // 13 left collar
    9, // 14 right collar
    12, // 15 head
    13, // 16 left shoulder
    14, // 17 right shoulder
    16, // 18 left elbow
    17, // 19 right elbow
    18, // 20 left wrist
    19, // 21 right wrist
    15, // 22 jaw
    15, // 23 left eye
    15, // 24 right eye
    20, 25, 26, // 25-27 left index 1..3
    20, 28, 29, // 28-30 left middle 1..3
    20, 31, 32, // 31-33 left pinky 1..3
    20, 34, 35, // 34-36 left ring 1..3
    20, 37, 38, // 37-39 left thumb 1..3
    21, 40, 41, // 40-42 right index 1..3
    21, 43, 44, // 43-45 right middle 1..3
    21, 46, 47, // 46-48 right pinky 1..3
    21, 49, 50, // 49-51 right ring 1..3
    21, 52, 53, // 52-54 right thumb 1..3
];

/// Human-readable joint names, index-aligned with [`PARENTS`].
pub const JOINT_NAMES: [&str; N_JOINTS] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "jaw",
    "left_eye",
    "right_eye",
    "left_index1",
    "left_index2",
    "left_index3",
    "left_middle1",
    "left_middle2",
    "left_middle3",
    "left_pinky1",
    "left_pinky2",
    "left_pinky3",
    "left_ring1",
    "left_ring2",
    "left_ring3",
    "left_thumb1",
    "left_thumb2",
    "left_thumb3",
    "right_index1",
    "right_index2",
    "right_index3",
    "right_middle1",
    "right_middle2",
    "right_middle3",
    "right_pinky1",
    "right_pinky2",
    "right_pinky3",
    "right_ring1",
    "right_ring2",
    "right_ring3",
    "right_thumb1",
    "right_thumb2",
    "right_thumb3",
];

/// Rest-pose offset of each joint from its parent in meters (x right toward
/// the figure's left side, y up, z toward the viewer). The root entry places
/// the pelvis above the ground plane; arms rest in a T pose so gestures read
/// clearly from the front.
pub const OFFSETS: [[f64; 3]; N_JOINTS] = [
    [0.0, 0.95, 0.0],     // pelvis
    [0.09, -0.05, 0.0],   // left hip
    [-0.09, -0.05, 0.0],  // right hip
    [0.0, 0.11, 0.0],     // spine1
    [0.0, -0.38, 0.0],    // left knee
    [0.0, -0.38, 0.0],    // right knee
    [0.0, 0.12, 0.0],     // spine2
    [0.0, -0.40, 0.0],    // left ankle
    [0.0, -0.40, 0.0],    // right ankle
    [0.0, 0.12, 0.0],     // spine3
    [0.0, -0.05, 0.12],   // left foot
    [0.0, -0.05, 0.12],   // right foot
    [0.0, 0.14, 0.0],     // neck
    [0.08, 0.10, 0.0],    // left collar
    [-0.08, 0.10, 0.0],   // right collar
    [0.0, 0.10, 0.0],     // head
    [0.10, 0.0, 0.0],     // left shoulder
    [-0.10, 0.0, 0.0],    // right shoulder
    [0.26, 0.0, 0.0],     // left elbow
    [-0.26, 0.0, 0.0],    // right elbow
    [0.25, 0.0, 0.0],     // left wrist
    [-0.25, 0.0, 0.0],    // right wrist
    [0.0, 0.03, 0.05],    // jaw
    [0.03, 0.09, 0.08],   // left eye
    [-0.03, 0.09, 0.08],  // right eye
    [0.09, 0.0, 0.025],   // left index*
    [0.035, 0.0, 0.0],
    [0.025, 0.0, 0.0],
    [0.095, 0.0, 0.008],  // left middle*
    [0.04, 0.0, 0.0],
    [0.027, 0.0, 0.0],
    [0.08, 0.0, -0.028],  // left pinky*
    [0.03, 0.0, 0.0],
    [0.02, 0.0, 0.0],
    [0.09, 0.0, -0.01],   // left ring*
    [0.035, 0.0, 0.0],
    [0.025, 0.0, 0.0],
    [0.03, 0.0, 0.04],    // left thumb*
    [0.035, 0.0, 0.015],
    [0.025, 0.0, 0.01],
    [-0.09, 0.0, 0.025],  // right index*
    [-0.035, 0.0, 0.0],
    [-0.025, 0.0, 0.0],
    [-0.095, 0.0, 0.008], // right middle*
    [-0.04, 0.0, 0.0],
    [-0.027, 0.0, 0.0],
    [-0.08, 0.0, -0.028], // right pinky*
    [-0.03, 0.0, 0.0],
    [-0.02, 0.0, 0.0],
    [-0.09, 0.0, -0.01],  // right ring*
    [-0.035, 0.0, 0.0],
    [-0.025, 0.0, 0.0],
    [-0.03, 0.0, 0.04],   // right thumb*
    [-0.035, 0.0, 0.015],
    [-0.025, 0.0, 0.01],
];

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const BONE_COLOR: Rgb<u8> = Rgb([40, 60, 130]);
const JOINT_COLOR: Rgb<u8> = Rgb([200, 60, 40]);
const JOINT_RADIUS: i64 = 2;

/// One bone per non-root joint, `(parent, child)`.
pub fn skeleton_edges() -> Vec<(usize, usize)> {
    (1..N_JOINTS).map(|j| (PARENTS[j], j)).collect()
}

/// How to draw a sequence: which bones, canvas size, frame rate, output dir.
#[derive(Clone, Debug)]
pub struct RenderSpec {
    pub edges: Vec<(usize, usize)>,
    pub width: u32,
    pub height: u32,
    pub fps: u32,
    pub out_dir: PathBuf,
}

impl RenderSpec {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RenderSpec {
            edges: skeleton_edges(),
            width: 512,
            height: 512,
            fps: FPS,
            out_dir: out_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for &(a, b) in &self.edges {
            if a >= N_JOINTS || b >= N_JOINTS {
                return Err(Error::Render(format!(
                    "edge ({a}, {b}) references a joint outside 0..{N_JOINTS}"
                )));
            }
        }
        if self.fps != FPS {
            return Err(Error::Render(format!(
                "render fps {} does not match the pose frame rate {FPS}",
                self.fps
            )));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::Render(format!(
                "canvas {}x{} is too small",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// World positions of all 55 joints for one frame of axis-angle rotations
/// (165 values, radians). Parents precede children in [`PARENTS`], so one
/// pass composes rotations root-to-leaf.
pub fn forward_kinematics(frame: &[f64]) -> Result<Vec<Vector3<f64>>> {
    if frame.len() != POSE_DIM {
        return Err(Error::ShapeMismatch(format!(
            "pose frame has {} channels, expected {POSE_DIM}",
            frame.len()
        )));
    }
    if frame.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pose frame"));
    }
    let mut positions = vec![Vector3::zeros(); N_JOINTS];
    let mut rotations = vec![Rotation3::identity(); N_JOINTS];
    for j in 0..N_JOINTS {
        let local = Rotation3::new(Vector3::new(frame[3 * j], frame[3 * j + 1], frame[3 * j + 2]));
        let offset = Vector3::from(OFFSETS[j]);
        if j == 0 {
            positions[j] = offset;
            rotations[j] = local;
        } else {
            let p = PARENTS[j];
            positions[j] = positions[p] + rotations[p] * offset;
            rotations[j] = rotations[p] * local;
        }
    }
    Ok(positions)
}

fn put_pixel(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
    let (mut x0, mut y0) = (a.0.round() as i64, a.1.round() as i64);
    let (x1, y1) = (b.0.round() as i64, b.1.round() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put_pixel(img, x0, y0, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn draw_disc(img: &mut RgbImage, center: (f64, f64), radius: i64, color: Rgb<u8>) {
    let (cx, cy) = (center.0.round() as i64, center.1.round() as i64);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if dx * dx + dy * dy <= radius * radius {
                put_pixel(img, cx + dx, cy + dy, color);
            }
        }
    }
}

/// Draw one frame: orthographic front projection (drop z), figure centered
/// horizontally with the ground near the bottom edge.
pub fn render_frame(spec: &RenderSpec, frame: &[f64]) -> Result<RgbImage> {
    spec.validate()?;
    let positions = forward_kinematics(frame)?;
    let mut img = RgbImage::from_pixel(spec.width, spec.height, BACKGROUND);
    let scale = spec.height as f64 / 2.2;
    let project = |p: &Vector3<f64>| -> (f64, f64) {
        (
            spec.width as f64 / 2.0 + scale * p.x,
            spec.height as f64 * 0.95 - scale * p.y,
        )
    };
    for &(a, b) in &spec.edges {
        draw_line(&mut img, project(&positions[a]), project(&positions[b]), BONE_COLOR);
    }
    for p in &positions {
        draw_disc(&mut img, project(p), JOINT_RADIUS, JOINT_COLOR);
    }
    Ok(img)
}

fn check_pose_matrix(pose: &Array2<f64>) -> Result<()> {
    if pose.ncols() != POSE_DIM || pose.nrows() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "pose matrix {:?}, expected (n >= 1, {POSE_DIM})",
            pose.dim()
        )));
    }
    Ok(())
}

/// Render every row of `pose` (radians) to `frame_NNN.png` in the configured
/// output directory. Returns the written paths in frame order.
pub fn render_frames(spec: &RenderSpec, pose: &Array2<f64>) -> Result<Vec<PathBuf>> {
    check_pose_matrix(pose)?;
    std::fs::create_dir_all(&spec.out_dir)?;
    let mut paths = Vec::with_capacity(pose.nrows());
    for (i, row) in pose.rows().into_iter().enumerate() {
        let img = render_frame(spec, row.as_slice().expect("row-major pose"))?;
        let path = spec.out_dir.join(format!("frame_{i:03}.png"));
        img.save(&path)
            .map_err(|e| Error::Render(format!("{}: {e}", path.display())))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Render the sequence as a looping GIF at the configured frame rate.
/// Returns the path of the written file.
pub fn render_gif(spec: &RenderSpec, pose: &Array2<f64>) -> Result<PathBuf> {
    check_pose_matrix(pose)?;
    std::fs::create_dir_all(&spec.out_dir)?;
    let path = spec.out_dir.join("animation.gif");
    let file = BufWriter::new(File::create(&path)?);
    let mut encoder = GifEncoder::new(file);
    encoder
        .set_repeat(Repeat::Infinite)
        .map_err(|e| Error::Render(e.to_string()))?;
    for row in pose.rows() {
        let rgb = render_frame(spec, row.as_slice().expect("row-major pose"))?;
        let rgba = DynamicImage::ImageRgb8(rgb).to_rgba8();
        let frame = Frame::from_parts(rgba, 0, 0, Delay::from_numer_denom_ms(1000, spec.fps));
        encoder
            .encode_frame(frame)
            .map_err(|e| Error::Render(e.to_string()))?;
    }
    Ok(path)
}

/// Number of frames stored in a GIF written by [`render_gif`].
pub fn gif_frame_count(path: &Path) -> Result<usize> {
    let decoder = GifDecoder::new(BufReader::new(File::open(path)?))
        .map_err(|e| Error::Render(e.to_string()))?;
    let mut n = 0;
    for frame in decoder.into_frames() {
        frame.map_err(|e| Error::Render(e.to_string()))?;
        n += 1;
    }
    Ok(n)
}
