//! Command-line front end: corpus synthesis, staged training, generation,
//! evaluation, and stick-figure rendering.
//!
//! Exit codes are a stable scripting contract: 0 success, 1 usage error
//! (bad flags or flag combinations), 2 data or validation error (unreadable
//! files, shape mismatches, stage-order violations, ...).

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use cospeech::data::{
    compute_log_mel, denormalize_pose, generate_synthetic_corpus, normalize_pose, read_pose_file,
    read_wav_mono_16k, tokenize, write_pose_file, Dataset, SpeechFeatures, TextSequence,
    POSE_DIM, POSE_LEN, SAMPLE_RATE,
};
use cospeech::error::Error;
use cospeech::metrics::{evaluate_robustness, train_fgd_autoencoder, Condition, FgdAutoencoder};
use cospeech::model::generate_gesture;
use cospeech::render::{render_frames, render_gif, RenderSpec};
use cospeech::training::{train_stage1, train_stage2, train_stage3, Checkpoint, TrainFileConfig};

/// Environment variable consulted for a default `--config` path.
const CONFIG_ENV: &str = "COSPEECH_CONFIG";
const DEFAULT_SEED: u64 = 7;
const VALID_METRICS: [&str; 5] = ["mpjae", "mmd", "fgd", "bc", "diversity"];

#[derive(Parser)]
#[command(name = "cospeech", version, about = "Co-speech gesture generation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an aligned synthetic (text, speech, pose) corpus.
    MakeSynthetic {
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of clips to synthesize.
        #[arg(long)]
        clips: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Lexicon size for the synthetic transcripts.
        #[arg(long, default_value_t = 50)]
        lexicon: usize,
        /// Write into a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Run one training stage and write a checkpoint plus a JSONL log.
    Train {
        /// Training stage: 1, 2, or 3.
        #[arg(long)]
        stage: u8,
        /// Dataset directory (from make-synthetic or compatible).
        #[arg(long)]
        data: PathBuf,
        /// TOML config with optional per-stage overrides (falls back to
        /// the COSPEECH_CONFIG environment variable, then to defaults).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint of the previous stage (required for stages 2 and 3).
        #[arg(long)]
        ckpt_in: Option<PathBuf>,
        /// Where to write the resulting checkpoint.
        #[arg(long)]
        ckpt_out: PathBuf,
        /// Training log path (default: ckpt-out with a .log extension).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a gesture from text and/or audio conditioning.
    Generate {
        /// Trained checkpoint.
        #[arg(long)]
        ckpt: PathBuf,
        /// Whitespace-separated transcript (at least one of --text/--audio).
        #[arg(long)]
        text: Option<String>,
        /// Mono 16 kHz WAV of exactly one clip length (1.333 s).
        #[arg(long)]
        audio: Option<PathBuf>,
        /// Pose file holding the pre-pose frames (default: neutral zeros).
        #[arg(long)]
        pre_pose: Option<PathBuf>,
        /// Output pose file (raw little-endian f32 radians, 40 x 165).
        #[arg(long)]
        out: PathBuf,
        /// Recorded in the sidecar; generation itself is deterministic.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a stage-3 checkpoint under modality-dropout conditions.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated subset of: mpjae, mmd, fgd, bc, diversity.
        #[arg(long, default_value = "mpjae,mmd,fgd,bc,diversity")]
        metrics: String,
        /// Comma-separated subset of: text-only, speech-only, text+speech,
        /// noisy-speech.
        #[arg(long, default_value = "text-only,speech-only,text+speech,noisy-speech")]
        conditions: String,
        /// Where to write the JSON report.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Signal-to-noise ratio for the noisy-speech condition, in dB.
        #[arg(long, default_value_t = 10.0)]
        snr_db: f64,
        /// Autoencoder cache directory (default: the dataset directory).
        #[arg(long)]
        ae_cache: Option<PathBuf>,
    },
    /// Draw a pose file as stick-figure frames or an animated GIF.
    Render {
        /// Pose file of shape [40 x 165] (raw little-endian f32 radians).
        #[arg(long)]
        poses: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = RenderFormat::Frames)]
        format: RenderFormat,
        /// Square canvas size in pixels.
        #[arg(long, default_value_t = 512)]
        size: u32,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum RenderFormat {
    /// One PNG per frame.
    Frames,
    /// A looping animated GIF.
    Video,
}

/// Failures split by exit code: flag problems (1) vs data problems (2).
enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            1
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::MakeSynthetic {
            out,
            clips,
            seed,
            lexicon,
            force,
        } => cmd_make_synthetic(&out, clips, seed, lexicon, force),
        Command::Train {
            stage,
            data,
            config,
            ckpt_in,
            ckpt_out,
            log,
            seed,
        } => cmd_train(stage, &data, config, ckpt_in, &ckpt_out, log, seed),
        Command::Generate {
            ckpt,
            text,
            audio,
            pre_pose,
            out,
            seed,
        } => cmd_generate(&ckpt, text, audio, pre_pose, &out, seed),
        Command::Evaluate {
            ckpt,
            data,
            metrics,
            conditions,
            out,
            seed,
            snr_db,
            ae_cache,
        } => cmd_evaluate(&ckpt, &data, &metrics, &conditions, &out, seed, snr_db, ae_cache),
        Command::Render {
            poses,
            out,
            format,
            size,
        } => cmd_render(&poses, &out, format, size),
    }
}

fn cmd_make_synthetic(
    out: &Path,
    clips: usize,
    seed: u64,
    lexicon: usize,
    force: bool,
) -> Result<(), CliError> {
    if clips == 0 {
        return Err(usage("--clips must be at least 1"));
    }
    if lexicon == 0 {
        return Err(usage("--lexicon must be at least 1"));
    }
    if !force && out.exists() {
        let non_empty = std::fs::read_dir(out)
            .map(|mut d| d.next().is_some())
            .unwrap_or(false);
        if non_empty {
            return Err(CliError::Run(Error::Dataset(format!(
                "{} is not empty; pass --force to write anyway",
                out.display()
            ))));
        }
    }
    let manifest = generate_synthetic_corpus(out, clips, seed, lexicon)?;
    println!(
        "wrote {} clips to {} (seed {seed}, lexicon {lexicon})",
        manifest.clips.len(),
        out.display()
    );
    Ok(())
}

fn config_file(flag: Option<PathBuf>) -> Result<TrainFileConfig, CliError> {
    let path = flag.or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    match path {
        Some(p) => Ok(TrainFileConfig::load(&p)?),
        None => Ok(TrainFileConfig::default()),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    stage: u8,
    data: &Path,
    config: Option<PathBuf>,
    ckpt_in: Option<PathBuf>,
    ckpt_out: &Path,
    log: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    if !(1..=3).contains(&stage) {
        return Err(usage(format!("--stage must be 1, 2, or 3, got {stage}")));
    }
    if stage == 1 && ckpt_in.is_some() {
        return Err(usage("--ckpt-in only applies to stages 2 and 3"));
    }
    if stage > 1 && ckpt_in.is_none() {
        return Err(usage(format!(
            "--stage {stage} requires --ckpt-in pointing to the stage-{} checkpoint",
            stage - 1
        )));
    }

    let file_cfg = config_file(config)?;
    let mut stage_cfg = file_cfg.stage_config(stage, DEFAULT_SEED);
    if let Some(s) = seed {
        stage_cfg.seed = s;
    }

    let dataset = Dataset::load(data)?;
    println!(
        "stage {stage}: {} clips | {} epochs | batch {} | lr {} | seed {}",
        dataset.clips.len(),
        stage_cfg.epochs,
        stage_cfg.batch_size,
        stage_cfg.learning_rate,
        stage_cfg.seed
    );

    let outcome = match stage {
        1 => {
            let model = file_cfg.model_config(dataset.vocab.size());
            train_stage1(&dataset, &model, &stage_cfg)?
        }
        2 => {
            let prev = Checkpoint::load(ckpt_in.as_deref().expect("checked above"))?;
            train_stage2(&dataset, &prev, &stage_cfg)?
        }
        _ => {
            let prev = Checkpoint::load(ckpt_in.as_deref().expect("checked above"))?;
            train_stage3(&dataset, &prev, &stage_cfg)?
        }
    };

    if let Some(parent) = ckpt_out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(Error::Io)?;
        }
    }
    outcome.checkpoint.save(ckpt_out)?;
    let log_path = log.unwrap_or_else(|| ckpt_out.with_extension("log"));
    outcome.log.write_jsonl(&log_path)?;

    let last = outcome.log.records.last().expect("at least one epoch");
    println!(
        "stage {stage} done: final loss {:.6} after {} epochs",
        last.loss.total,
        outcome.log.records.len()
    );
    println!("checkpoint {} -> {}", outcome.checkpoint.content_hash()?, ckpt_out.display());
    println!("log -> {}", log_path.display());
    Ok(())
}

fn load_pre_poses(path: Option<&Path>, n_pre: usize) -> Result<Array2<f64>, CliError> {
    match path {
        None => Ok(Array2::zeros((n_pre, POSE_DIM))),
        Some(p) => {
            let radians = read_pose_file(p)?;
            if radians.nrows() != n_pre {
                return Err(CliError::Run(Error::ShapeMismatch(format!(
                    "{}: {} pre-pose frames, expected {n_pre}",
                    p.display(),
                    radians.nrows()
                ))));
            }
            Ok(normalize_pose(&radians)?.rotations)
        }
    }
}

fn cmd_generate(
    ckpt_path: &Path,
    text: Option<String>,
    audio: Option<PathBuf>,
    pre_pose: Option<PathBuf>,
    out: &Path,
    seed: u64,
) -> Result<(), CliError> {
    if text.is_none() && audio.is_none() {
        return Err(usage("at least one of --text or --audio is required"));
    }
    let ckpt = Checkpoint::load(ckpt_path)?;
    let cfg = ckpt.meta.model.clone();

    let text_seq: Option<TextSequence> = text.as_deref().map(|t| {
        let words: Vec<&str> = t.split_whitespace().collect();
        tokenize(&words, &ckpt.meta.vocab)
    });
    let speech: Option<SpeechFeatures> = match &audio {
        Some(p) => {
            let samples = read_wav_mono_16k(p)?;
            Some(compute_log_mel(&samples, SAMPLE_RATE)?)
        }
        None => None,
    };
    let pre = load_pre_poses(pre_pose.as_deref(), cfg.n_pre_poses)?;

    let pose = generate_gesture(&ckpt.params, &cfg, text_seq.as_ref(), speech.as_ref(), &pre)?;
    let radians = denormalize_pose(&pose.rotations);
    write_pose_file(out, &radians)?;

    let sidecar = PathBuf::from(format!("{}.json", out.display()));
    let meta = serde_json::json!({
        "checkpoint": ckpt_path.display().to_string(),
        "checkpoint_hash": ckpt.content_hash()?,
        "stage": ckpt.meta.stage,
        "text": text,
        "audio": audio.map(|p| p.display().to_string()),
        "pre_pose": pre_pose.map(|p| p.display().to_string()),
        "seed": seed,
        "frames": POSE_LEN,
        "channels": POSE_DIM,
        "format": "f32-le radians, row-major",
    });
    std::fs::write(&sidecar, serde_json::to_string_pretty(&meta).map_err(Error::Json)?)
        .map_err(Error::Io)?;

    println!(
        "wrote {} bytes to {} (+ sidecar {})",
        POSE_LEN * POSE_DIM * 4,
        out.display(),
        sidecar.display()
    );
    Ok(())
}

fn parse_metrics(list: &str) -> Result<Vec<String>, CliError> {
    let mut chosen = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if !VALID_METRICS.contains(&name) {
            return Err(usage(format!(
                "unknown metric `{name}`; valid names: {}",
                VALID_METRICS.join(", ")
            )));
        }
        if !chosen.iter().any(|c| c == name) {
            chosen.push(name.to_string());
        }
    }
    if chosen.is_empty() {
        return Err(usage("--metrics selected nothing"));
    }
    Ok(chosen)
}

fn parse_conditions(list: &str) -> Result<Vec<Condition>, CliError> {
    let mut chosen = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let cond = Condition::ALL
            .iter()
            .copied()
            .find(|c| c.label() == name)
            .ok_or_else(|| {
                let valid: Vec<&str> = Condition::ALL.iter().map(|c| c.label()).collect();
                usage(format!(
                    "unknown condition `{name}`; valid names: {}",
                    valid.join(", ")
                ))
            })?;
        if !chosen.contains(&cond) {
            chosen.push(cond);
        }
    }
    if chosen.is_empty() {
        return Err(usage("--conditions selected nothing"));
    }
    Ok(chosen)
}

/// Load the cached scoring autoencoder for (dataset hash, seed), training
/// and caching it on first use so repeated evaluations share one scorer.
fn cached_autoencoder(
    data: &Path,
    dataset: &Dataset,
    cache_dir: Option<&Path>,
    seed: u64,
) -> Result<FgdAutoencoder, CliError> {
    let hash = Dataset::content_hash(data)?;
    let dir = cache_dir.unwrap_or(data);
    std::fs::create_dir_all(dir).map_err(Error::Io)?;
    let path = dir.join(format!("fgd-ae-{}-s{seed}.bin", &hash[..16]));
    if path.exists() {
        let ae = FgdAutoencoder::load(&path)?;
        eprintln!("loaded cached autoencoder {}", path.display());
        return Ok(ae);
    }
    let clips: Vec<Array2<f64>> = dataset
        .clips
        .iter()
        .map(|c| c.clip.pose.rotations.clone())
        .collect();
    let set = cospeech::metrics::GestureSet::new(clips)?;
    eprintln!("training scoring autoencoder ({} clips, seed {seed})...", set.len());
    let ae = train_fgd_autoencoder(&set, seed)?;
    ae.save(&path)?;
    eprintln!("cached autoencoder -> {}", path.display());
    Ok(ae)
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    ckpt_path: &Path,
    data: &Path,
    metrics: &str,
    conditions: &str,
    out: &Path,
    seed: u64,
    snr_db: f64,
    ae_cache: Option<PathBuf>,
) -> Result<(), CliError> {
    let chosen_metrics = parse_metrics(metrics)?;
    let chosen_conditions = parse_conditions(conditions)?;
    let ckpt = Checkpoint::load(ckpt_path)?;
    let dataset = Dataset::load(data)?;
    let ae = cached_autoencoder(data, &dataset, ae_cache.as_deref(), seed)?;

    let report = evaluate_robustness(&ckpt, &dataset, &chosen_conditions, snr_db, &ae, seed)?;

    // JSON rows carry exactly the requested metric keys.
    let rows: Vec<serde_json::Value> = report
        .conditions
        .iter()
        .map(|row| {
            let mut metrics_obj = serde_json::Map::new();
            for name in &chosen_metrics {
                let value = match name.as_str() {
                    "mpjae" => row.metrics.mpjae,
                    "mmd" => row.metrics.mmd,
                    "fgd" => row.metrics.fgd,
                    "bc" => row.metrics.bc,
                    _ => row.metrics.diversity,
                };
                metrics_obj.insert(name.clone(), serde_json::json!(value));
            }
            serde_json::json!({
                "condition": row.condition,
                "snr_db": row.snr_db,
                "metrics": metrics_obj,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "checkpoint_hash": report.checkpoint_hash,
        "seed": report.seed,
        "autoencoder_hash": ae.content_hash()?,
        "n_clips": dataset.clips.len(),
        "conditions": rows,
    });
    std::fs::write(out, serde_json::to_string_pretty(&doc).map_err(Error::Json)?)
        .map_err(Error::Io)?;

    print_table(&report, &chosen_metrics);
    println!("report -> {}", out.display());
    Ok(())
}

/// Fixed-column table, one condition per row, metric columns in the fixed
/// order MPJAE, MMD, FGD, Diversity, BC (filtered to the requested subset).
fn print_table(report: &cospeech::metrics::RobustnessReport, chosen: &[String]) {
    let columns: Vec<(&str, &str)> = [
        ("mpjae", "MPJAE"),
        ("mmd", "MMD"),
        ("fgd", "FGD"),
        ("diversity", "Diversity"),
        ("bc", "BC"),
    ]
    .into_iter()
    .filter(|(key, _)| chosen.iter().any(|c| c == key))
    .collect();

    let mut header = format!("{:<14}", "condition");
    for (_, title) in &columns {
        header.push_str(&format!(" {title:>11}"));
    }
    println!("{header}");
    for row in &report.conditions {
        let mut line = format!("{:<14}", row.condition);
        for (key, _) in &columns {
            let value = match *key {
                "mpjae" => row.metrics.mpjae,
                "mmd" => row.metrics.mmd,
                "fgd" => row.metrics.fgd,
                "diversity" => row.metrics.diversity,
                _ => row.metrics.bc,
            };
            line.push_str(&format!(" {value:>11.6}"));
        }
        println!("{line}");
    }
}

fn cmd_render(poses: &Path, out: &Path, format: RenderFormat, size: u32) -> Result<(), CliError> {
    let radians = read_pose_file(poses)?;
    if radians.nrows() != POSE_LEN {
        return Err(CliError::Run(Error::ShapeMismatch(format!(
            "{}: {} frames, expected {POSE_LEN}",
            poses.display(),
            radians.nrows()
        ))));
    }
    let mut spec = RenderSpec::new(out);
    spec.width = size;
    spec.height = size;
    spec.validate()?;
    match format {
        RenderFormat::Frames => {
            let paths = render_frames(&spec, &radians)?;
            println!("wrote {} frames to {}", paths.len(), out.display());
        }
        RenderFormat::Video => {
            let path = render_gif(&spec, &radians)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
