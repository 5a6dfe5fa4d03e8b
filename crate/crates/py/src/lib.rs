//! Python bindings: corpus generation, dataset access, staged training,
//! gesture generation, evaluation, and rendering.
//!
//! Poses cross the boundary as `float64` numpy arrays of shape `[40, 165]`
//! in normalized units (axis-angle radians divided by pi).

use std::collections::BTreeMap;
use std::path::PathBuf;

use ndarray::Array2;
use numpy::{IntoPyArray, PyArray2, PyReadonlyArray2};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cospeech::data::{
    compute_log_mel, detokenize, generate_synthetic_corpus, read_wav_mono_16k, tokenize,
    POSE_DIM, SAMPLE_RATE,
};
use cospeech::metrics::{
    evaluate_robustness, train_fgd_autoencoder, Condition, GestureSet, MetricReport,
};
use cospeech::model::{generate_gesture, ModelConfig};
use cospeech::render::{render_frames, render_gif, RenderSpec};
use cospeech::training::{train_stage1, train_stage2, train_stage3, StageConfig};

fn err(e: cospeech::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Synthetic aligned (text, speech, pose) corpus; returns the clip count.
#[pyfunction]
#[pyo3(signature = (out_dir, clips=8, seed=0, lexicon=12))]
fn make_synthetic(out_dir: PathBuf, clips: usize, seed: u64, lexicon: usize) -> PyResult<usize> {
    let manifest = generate_synthetic_corpus(&out_dir, clips, seed, lexicon).map_err(err)?;
    Ok(manifest.clips.len())
}

/// A preprocessed corpus: fixed-shape clips plus the vocabulary.
#[pyclass]
struct Dataset {
    inner: cospeech::data::Dataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: cospeech::data::Dataset::load(&dir).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.clips.len()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab.size()
    }

    fn clip_id(&self, i: usize) -> PyResult<String> {
        self.clip(i).map(|c| c.clip_id.clone())
    }

    /// Transcript of clip `i` as words.
    fn words(&self, i: usize) -> PyResult<Vec<String>> {
        Ok(detokenize(&self.clip(i)?.text, &self.inner.vocab))
    }

    /// Ground-truth pose of clip `i`, `[40, 165]` normalized.
    fn pose<'py>(&self, py: Python<'py>, i: usize) -> PyResult<Bound<'py, PyArray2<f64>>> {
        Ok(self.clip(i)?.pose.rotations.clone().into_pyarray(py))
    }

    /// Log-mel speech features of clip `i`, `[45, 128]`.
    fn log_mel<'py>(&self, py: Python<'py>, i: usize) -> PyResult<Bound<'py, PyArray2<f64>>> {
        Ok(self.clip(i)?.speech.log_mel.clone().into_pyarray(py))
    }
}

impl Dataset {
    fn clip(&self, i: usize) -> PyResult<&cospeech::data::Clip> {
        self.inner
            .clips
            .get(i)
            .map(|l| &l.clip)
            .ok_or_else(|| PyValueError::new_err(format!("clip index {i} out of range")))
    }
}

/// A trained model state from one of the three stages.
#[pyclass]
struct Checkpoint {
    inner: cospeech::training::Checkpoint,
}

#[pymethods]
impl Checkpoint {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: cospeech::training::Checkpoint::load(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn stage(&self) -> u8 {
        self.inner.meta.stage
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.meta.seed
    }

    #[getter]
    fn content_hash(&self) -> PyResult<String> {
        self.inner.content_hash().map_err(err)
    }

    /// Generate a `[40, 165]` gesture from text and/or a 16 kHz wav file.
    /// Missing pre-poses default to the neutral all-zero pose.
    #[pyo3(signature = (text=None, wav=None, pre_poses=None))]
    fn generate<'py>(
        &self,
        py: Python<'py>,
        text: Option<&str>,
        wav: Option<PathBuf>,
        pre_poses: Option<PyReadonlyArray2<'py, f64>>,
    ) -> PyResult<Bound<'py, PyArray2<f64>>> {
        let model = &self.inner.meta.model;
        let text_seq = text.map(|t| {
            let words: Vec<&str> = t.split_whitespace().collect();
            tokenize(&words, &self.inner.meta.vocab)
        });
        let speech = match wav {
            Some(path) => {
                let samples = read_wav_mono_16k(&path).map_err(err)?;
                Some(compute_log_mel(&samples, SAMPLE_RATE).map_err(err)?)
            }
            None => None,
        };
        let pre = match pre_poses {
            Some(arr) => arr.as_array().to_owned(),
            None => Array2::zeros((model.n_pre_poses, POSE_DIM)),
        };
        let out = generate_gesture(
            &self.inner.params,
            model,
            text_seq.as_ref(),
            speech.as_ref(),
            &pre,
        )
        .map_err(err)?;
        Ok(out.rotations.into_pyarray(py))
    }
}

fn apply_stage_overrides(
    cfg: &mut StageConfig,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
) {
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(b) = batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = learning_rate {
        cfg.learning_rate = lr;
    }
}

/// Run one training stage. Stage 1 accepts width overrides; stages 2 and 3
/// require the previous stage's checkpoint and inherit its architecture.
#[pyfunction]
#[pyo3(signature = (
    dataset, stage, ckpt_in=None, epochs=None, batch_size=None,
    learning_rate=None, seed=0, d_model=None, n_heads=None, d_ff=None,
    word_embed_dim=None
))]
#[allow(clippy::too_many_arguments)]
fn train(
    dataset: &Dataset,
    stage: u8,
    ckpt_in: Option<&Checkpoint>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    seed: u64,
    d_model: Option<usize>,
    n_heads: Option<usize>,
    d_ff: Option<usize>,
    word_embed_dim: Option<usize>,
) -> PyResult<Checkpoint> {
    let outcome = match stage {
        1 => {
            let mut model = ModelConfig::with_vocab(dataset.inner.vocab.size());
            if let Some(d) = d_model {
                model.d_model = d;
            }
            if let Some(h) = n_heads {
                model.n_heads = h;
            }
            if let Some(f) = d_ff {
                model.d_ff = f;
            }
            if let Some(w) = word_embed_dim {
                model.word_embed_dim = w;
            }
            let mut cfg = StageConfig::stage1(seed);
            apply_stage_overrides(&mut cfg, epochs, batch_size, learning_rate);
            train_stage1(&dataset.inner, &model, &cfg).map_err(err)?
        }
        2 | 3 => {
            let prev = ckpt_in.ok_or_else(|| {
                PyValueError::new_err(format!("stage {stage} needs ckpt_in from stage {}", stage - 1))
            })?;
            let mut cfg = if stage == 2 {
                StageConfig::stage2(seed)
            } else {
                StageConfig::stage3(seed)
            };
            apply_stage_overrides(&mut cfg, epochs, batch_size, learning_rate);
            if stage == 2 {
                train_stage2(&dataset.inner, &prev.inner, &cfg).map_err(err)?
            } else {
                train_stage3(&dataset.inner, &prev.inner, &cfg).map_err(err)?
            }
        }
        other => return Err(PyValueError::new_err(format!("stage must be 1-3, got {other}"))),
    };
    Ok(Checkpoint {
        inner: outcome.checkpoint,
    })
}

fn metric_dict<'py>(py: Python<'py>, m: &MetricReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mpjae", m.mpjae)?;
    d.set_item("mmd", m.mmd)?;
    d.set_item("fgd", m.fgd)?;
    d.set_item("diversity", m.diversity)?;
    d.set_item("bc", m.bc)?;
    Ok(d)
}

/// Score a stage-3 checkpoint against its dataset under the four
/// conditioning regimes; returns `{condition: {metric: value}}`.
#[pyfunction]
#[pyo3(signature = (ckpt, dataset, snr_db=10.0, seed=0))]
fn evaluate<'py>(
    py: Python<'py>,
    ckpt: &Checkpoint,
    dataset: &Dataset,
    snr_db: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let reference = GestureSet::new(
        dataset
            .inner
            .clips
            .iter()
            .map(|c| c.clip.pose.rotations.clone())
            .collect(),
    )
    .map_err(err)?;
    let ae = train_fgd_autoencoder(&reference, seed).map_err(err)?;
    let report = evaluate_robustness(
        &ckpt.inner,
        &dataset.inner,
        &Condition::ALL,
        snr_db,
        &ae,
        seed,
    )
    .map_err(err)?;
    let rows = PyDict::new(py);
    for row in &report.conditions {
        rows.set_item(&row.condition, metric_dict(py, &row.metrics)?)?;
    }
    Ok(rows)
}

/// Mean absolute joint-angle error in radians between two pose sets.
#[pyfunction]
fn mpjae(pred: Vec<PyReadonlyArray2<f64>>, gt: Vec<PyReadonlyArray2<f64>>) -> PyResult<f64> {
    let to_set = |clips: Vec<PyReadonlyArray2<f64>>| {
        GestureSet::new(clips.iter().map(|c| c.as_array().to_owned()).collect()).map_err(err)
    };
    cospeech::metrics::mpjae(&to_set(pred)?, &to_set(gt)?).map_err(err)
}

/// Log-mel features `[45, 128]` of a 16 kHz mono wav.
#[pyfunction]
fn log_mel_from_wav(py: Python<'_>, path: PathBuf) -> PyResult<Bound<'_, PyArray2<f64>>> {
    let samples = read_wav_mono_16k(&path).map_err(err)?;
    let feats = compute_log_mel(&samples, SAMPLE_RATE).map_err(err)?;
    Ok(feats.log_mel.into_pyarray(py))
}

/// Corruption-mode counts over `n` sampled plans (see the training docs).
#[pyfunction]
#[pyo3(signature = (n, seed=0))]
fn mask_mode_frequencies(n: usize, seed: u64) -> BTreeMap<String, u64> {
    cospeech::training::mask_mode_frequencies(n, seed, 0)
}

/// Render a `[40, 165]` pose as skeleton PNG frames plus an animated GIF;
/// returns the number of frames written.
#[pyfunction]
#[pyo3(signature = (pose, out_dir, size=256))]
fn render(pose: PyReadonlyArray2<f64>, out_dir: PathBuf, size: u32) -> PyResult<usize> {
    let spec = RenderSpec {
        width: size,
        height: size,
        ..RenderSpec::new(out_dir)
    };
    let rotations = pose.as_array().to_owned();
    let frames = render_frames(&spec, &rotations).map_err(err)?;
    render_gif(&spec, &rotations).map_err(err)?;
    Ok(frames.len())
}

#[pymodule]
fn cospeech_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Checkpoint>()?;
    m.add_function(wrap_pyfunction!(make_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(mpjae, m)?)?;
    m.add_function(wrap_pyfunction!(log_mel_from_wav, m)?)?;
    m.add_function(wrap_pyfunction!(mask_mode_frequencies, m)?)?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add("POSE_SHAPE", (cospeech::data::POSE_LEN, POSE_DIM))?;
    Ok(())
}
