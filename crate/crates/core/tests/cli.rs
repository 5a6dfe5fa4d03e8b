//! End-to-end tests of the `cospeech` binary: flag handling, exit codes,
//! file outputs, and rerun determinism.
//!
//! Exit-code contract: 0 success, 1 usage error, 2 data/validation error.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

const BIN: &str = env!("CARGO_BIN_EXE_cospeech");

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn cospeech")
}

fn assert_code(out: &Output, want: i32, ctx: &str) {
    assert_eq!(
        out.status.code(),
        Some(want),
        "{ctx}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Shared corpus + three staged checkpoints, built once per test binary.
struct Fixture {
    root: PathBuf,
}

impl Fixture {
    fn data(&self) -> PathBuf {
        self.root.join("ds")
    }
    fn ckpt(&self, stage: u8) -> PathBuf {
        self.root.join(format!("s{stage}.ckpt"))
    }
    fn config(&self) -> PathBuf {
        self.root.join("tiny.toml")
    }
    fn first_wav(&self) -> PathBuf {
        let mut wavs: Vec<PathBuf> = std::fs::read_dir(self.data())
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "wav"))
            .collect();
        wavs.sort();
        wavs.remove(0)
    }
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let root = tempfile::tempdir().unwrap().keep();
        std::fs::write(
            root.join("tiny.toml"),
            "seed = 5\n\
             [model]\n\
             d_model = 16\n\
             n_heads = 2\n\
             d_ff = 32\n\
             word_embed_dim = 16\n\
             [stage1]\n\
             epochs = 2\n\
             batch_size = 4\n\
             [stage2]\n\
             epochs = 2\n\
             batch_size = 4\n\
             [stage3]\n\
             epochs = 2\n\
             batch_size = 4\n",
        )
        .unwrap();
        let fx = Fixture { root };
        let out = run_in(
            &fx.root,
            &["make-synthetic", "--out", "ds", "--clips", "8", "--seed", "3", "--lexicon", "12"],
        );
        assert_code(&out, 0, "make-synthetic fixture");
        for stage in 1..=3u8 {
            let ckpt_out = format!("s{stage}.ckpt");
            let mut args = vec![
                "train".to_string(),
                "--stage".into(),
                stage.to_string(),
                "--data".into(),
                "ds".into(),
                "--config".into(),
                "tiny.toml".into(),
                "--ckpt-out".into(),
                ckpt_out,
            ];
            if stage > 1 {
                args.push("--ckpt-in".into());
                args.push(format!("s{}.ckpt", stage - 1));
            }
            let argrefs: Vec<&str> = args.iter().map(String::as_str).collect();
            let out = run_in(&fx.root, &argrefs);
            assert_code(&out, 0, &format!("train stage {stage} fixture"));
        }
        fx
    })
}

#[test]
fn make_synthetic_respects_force_and_validates_clips() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["make-synthetic", "--out", "c", "--clips", "2", "--seed", "1", "--lexicon", "6"],
    );
    assert_code(&out, 0, "fresh corpus");
    assert!(dir.path().join("c/manifest.json").exists());
    assert!(dir.path().join("c/vocab.json").exists());

    let before: Vec<String> = {
        let mut v: Vec<String> = std::fs::read_dir(dir.path().join("c"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    };
    let out = run_in(
        dir.path(),
        &["make-synthetic", "--out", "c", "--clips", "2", "--seed", "1", "--lexicon", "6"],
    );
    assert_code(&out, 2, "rerun without --force");
    let after: Vec<String> = {
        let mut v: Vec<String> = std::fs::read_dir(dir.path().join("c"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    };
    assert_eq!(before, after, "failed rerun must not touch files");

    let out = run_in(
        dir.path(),
        &["make-synthetic", "--out", "c", "--clips", "2", "--seed", "1", "--lexicon", "6", "--force"],
    );
    assert_code(&out, 0, "rerun with --force");

    let out = run_in(dir.path(), &["make-synthetic", "--out", "c2", "--clips", "0"]);
    assert_code(&out, 1, "--clips 0 is a usage error");
}

#[test]
fn train_flag_and_stage_order_errors() {
    let fx = fixture();
    let out = run_in(
        &fx.root,
        &["train", "--stage", "2", "--data", "ds", "--ckpt-out", "x.ckpt"],
    );
    assert_code(&out, 1, "stage 2 without --ckpt-in");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stage-1"), "error names the missing prerequisite: {stderr}");

    let out = run_in(
        &fx.root,
        &["train", "--stage", "7", "--data", "ds", "--ckpt-out", "x.ckpt"],
    );
    assert_code(&out, 1, "stage out of range");

    // A stage-1 checkpoint fed to stage 3 violates the stage order.
    let s1 = fx.ckpt(1).display().to_string();
    let out = run_in(
        &fx.root,
        &["train", "--stage", "3", "--data", "ds", "--ckpt-in", &s1, "--ckpt-out", "x.ckpt"],
    );
    assert_code(&out, 2, "stage-order violation");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stage"), "stage mismatch message: {stderr}");
}

#[test]
fn train_writes_checkpoint_and_log_with_config_epochs() {
    let fx = fixture();
    for stage in 1..=3u8 {
        assert!(fx.ckpt(stage).exists(), "stage {stage} checkpoint written");
        let log = fx.root.join(format!("s{stage}.log"));
        assert!(log.exists(), "stage {stage} log written");
        let lines = std::fs::read_to_string(&log).unwrap().lines().count();
        assert_eq!(lines, 2, "configured epoch count shows up in the log");
    }
    assert!(fx.config().exists());
}

#[test]
fn generate_writes_pose_and_sidecar() {
    let fx = fixture();
    let s3 = fx.ckpt(3).display().to_string();
    let out = run_in(
        &fx.root,
        &["generate", "--ckpt", &s3, "--text", "a b c", "--out", "gen.pose.f32"],
    );
    assert_code(&out, 0, "text-only generation");
    let bytes = std::fs::read(fx.root.join("gen.pose.f32")).unwrap();
    assert_eq!(bytes.len(), 40 * 165 * 4, "26,400-byte pose file");
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fx.root.join("gen.pose.f32.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["frames"], 40);
    assert_eq!(sidecar["text"], "a b c");
    assert!(sidecar["checkpoint_hash"].as_str().unwrap().len() == 64);

    // Rerun with identical flags: byte-identical output.
    let out = run_in(
        &fx.root,
        &["generate", "--ckpt", &s3, "--text", "a b c", "--out", "gen_rerun.pose.f32"],
    );
    assert_code(&out, 0, "rerun");
    assert_eq!(bytes, std::fs::read(fx.root.join("gen_rerun.pose.f32")).unwrap());

    // Audio-only conditioning on a clip-length wav from the corpus.
    let wav = fx.first_wav().display().to_string();
    let out = run_in(
        &fx.root,
        &["generate", "--ckpt", &s3, "--audio", &wav, "--out", "gen_audio.pose.f32"],
    );
    assert_code(&out, 0, "audio-only generation");
}

#[test]
fn generate_rejects_bad_inputs() {
    let fx = fixture();
    let s3 = fx.ckpt(3).display().to_string();
    let out = run_in(&fx.root, &["generate", "--ckpt", &s3, "--out", "x.pose.f32"]);
    assert_code(&out, 1, "neither --text nor --audio");

    // A valid wav of the wrong duration gets an explicit length error.
    let short = fx.root.join("short.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&short, spec).unwrap();
    for i in 0..8000 {
        w.write_sample(((i % 100) * 300 - 15000) as i16).unwrap();
    }
    w.finalize().unwrap();
    let short = short.display().to_string();
    let out = run_in(
        &fx.root,
        &["generate", "--ckpt", &s3, "--audio", &short, "--out", "x.pose.f32"],
    );
    assert_code(&out, 2, "wrong-duration wav");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("21333"), "length mismatch is explicit: {stderr}");
}

#[test]
fn evaluate_filters_metrics_and_reuses_cached_autoencoder() {
    let fx = fixture();
    let s3 = fx.ckpt(3).display().to_string();
    let cache = fx.root.join("ae-cache").display().to_string();
    let args = [
        "evaluate",
        "--ckpt",
        &s3,
        "--data",
        "ds",
        "--metrics",
        "mpjae,fgd",
        "--conditions",
        "text-only,text+speech",
        "--out",
        "r1.json",
        "--seed",
        "11",
        "--ae-cache",
        &cache,
    ];
    let out = run_in(&fx.root, &args);
    assert_code(&out, 0, "evaluate");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("MPJAE") && stdout.contains("FGD"), "table header: {stdout}");
    assert!(!stdout.contains("Diversity"), "unrequested column omitted: {stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fx.root.join("r1.json")).unwrap()).unwrap();
    let rows = report["conditions"].as_array().unwrap();
    assert_eq!(rows.len(), 2, "one row per condition");
    for row in rows {
        let keys: Vec<&String> = row["metrics"].as_object().unwrap().keys().collect();
        assert_eq!(keys, ["fgd", "mpjae"], "exactly the requested metric keys");
    }

    // Second run hits the cache and reproduces the report byte-for-byte.
    let mut args2 = args;
    args2[10] = "r2.json";
    let out = run_in(&fx.root, &args2);
    assert_code(&out, 0, "evaluate rerun");
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("cached"),
        "autoencoder came from the cache"
    );
    assert_eq!(
        std::fs::read(fx.root.join("r1.json")).unwrap(),
        std::fs::read(fx.root.join("r2.json")).unwrap()
    );
}

#[test]
fn evaluate_rejects_unknown_names() {
    let fx = fixture();
    let s3 = fx.ckpt(3).display().to_string();
    let out = run_in(
        &fx.root,
        &["evaluate", "--ckpt", &s3, "--data", "ds", "--metrics", "bogus", "--out", "r.json"],
    );
    assert_code(&out, 1, "unknown metric");
    let stderr = String::from_utf8_lossy(&out.stderr);
    for name in ["mpjae", "mmd", "fgd", "bc", "diversity"] {
        assert!(stderr.contains(name), "valid names listed: {stderr}");
    }
    let out = run_in(
        &fx.root,
        &["evaluate", "--ckpt", &s3, "--data", "ds", "--conditions", "sideways", "--out", "r.json"],
    );
    assert_code(&out, 1, "unknown condition");
}

#[test]
fn render_writes_frames_and_video_deterministically() {
    let fx = fixture();
    let s3 = fx.ckpt(3).display().to_string();
    let out = run_in(
        &fx.root,
        &["generate", "--ckpt", &s3, "--text", "x y", "--out", "r.pose.f32"],
    );
    assert_code(&out, 0, "pose for rendering");

    for (dir, flags) in [("fr1", "frames"), ("fr2", "frames")] {
        let out = run_in(
            &fx.root,
            &["render", "--poses", "r.pose.f32", "--out", dir, "--format", flags, "--size", "192"],
        );
        assert_code(&out, 0, "render frames");
    }
    let count = std::fs::read_dir(fx.root.join("fr1")).unwrap().count();
    assert_eq!(count, 40, "40 frames at 30 fps timestamps");
    assert_eq!(
        std::fs::read(fx.root.join("fr1/frame_000.png")).unwrap(),
        std::fs::read(fx.root.join("fr2/frame_000.png")).unwrap(),
        "identical input gives byte-identical frames"
    );

    let out = run_in(
        &fx.root,
        &["render", "--poses", "r.pose.f32", "--out", "vid", "--format", "video", "--size", "96"],
    );
    assert_code(&out, 0, "render video");
    assert!(fx.root.join("vid/animation.gif").exists());
}

#[test]
fn render_rejects_malformed_pose_files() {
    let fx = fixture();
    std::fs::write(fx.root.join("trunc.pose.f32"), vec![0u8; 100]).unwrap();
    let out = run_in(
        &fx.root,
        &["render", "--poses", "trunc.pose.f32", "--out", "never", "--format", "frames"],
    );
    assert_code(&out, 2, "truncated pose file");
    assert!(!fx.root.join("never").exists(), "no partial output");

    let out = run_in(
        &fx.root,
        &["render", "--poses", "r_missing.pose.f32", "--out", "never2", "--format", "bogus"],
    );
    assert_code(&out, 1, "unknown format is a usage error");
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["--help"]);
    assert_code(&out, 0, "--help");
    let out = run_in(dir.path(), &["definitely-not-a-command"]);
    assert_code(&out, 1, "unknown subcommand");
}
