#!/usr/bin/env python3
"""End-to-end smoke test of the cospeech_py extension module.

Builds the extension with cargo if needed, generates a tiny corpus, trains
all three stages at a narrow width, generates gestures, and sanity-checks
metrics and rendering. Finishes in about a minute on one core.
"""

import pathlib
import shutil
import subprocess
import sys
import tempfile

import numpy as np

REPO = pathlib.Path(__file__).resolve().parent.parent


def ensure_module() -> None:
    """Import cospeech_py, building the cdylib first if necessary."""
    names = ["cospeech_py.so", "libcospeech_py.so"]
    candidates = [REPO / "target" / p / n for p in ("release", "debug") for n in names]
    if not any(c.exists() for c in candidates):
        subprocess.run(
            ["cargo", "build", "--release", "-p", "cospeech-py"],
            cwd=REPO,
            check=True,
        )
    for cand in candidates:
        if cand.exists():
            stage_dir = pathlib.Path(tempfile.mkdtemp(prefix="cospeech-py-"))
            shutil.copy2(cand, stage_dir / "cospeech_py.so")
            sys.path.insert(0, str(stage_dir))
            return
    raise FileNotFoundError("cospeech_py cdylib not found after build")


def main() -> None:
    ensure_module()
    import cospeech_py as cp

    work = pathlib.Path(tempfile.mkdtemp(prefix="cospeech-smoke-"))
    data = work / "ds"

    n = cp.make_synthetic(data, clips=8, seed=3, lexicon=12)
    assert n == 8, n
    ds = cp.Dataset.load(data)
    assert len(ds) == 8
    assert ds.pose(0).shape == cp.POSE_SHAPE
    assert ds.log_mel(0).shape == (45, 128)
    assert len(ds.words(0)) >= 1
    print(f"corpus: {len(ds)} clips, vocab {ds.vocab_size}, id0 {ds.clip_id(0)}")

    # Corruption-mode statistics from the pre-training sampler.
    freq = cp.mask_mode_frequencies(20_000, seed=1)
    mask_share = freq["text.mask_one_word"] / 20_000
    assert 0.69 < mask_share < 0.75, mask_share
    print(f"mask sampler: text.mask_one_word at {mask_share:.3f}")

    # Three training stages at a narrow width.
    kw = dict(epochs=2, batch_size=4, seed=5)
    ck1 = cp.train(ds, 1, d_model=16, n_heads=2, d_ff=32, word_embed_dim=16, **kw)
    ck2 = cp.train(ds, 2, ckpt_in=ck1, **kw)
    ck3 = cp.train(ds, 3, ckpt_in=ck2, **kw)
    assert (ck1.stage, ck2.stage, ck3.stage) == (1, 2, 3)

    ckpt_path = work / "s3.ckpt"
    ck3.save(ckpt_path)
    reloaded = cp.Checkpoint.load(ckpt_path)
    assert reloaded.content_hash == ck3.content_hash
    print(f"stage-3 checkpoint {ck3.content_hash[:12]} round-trips")

    # Generation: same seed twice is identical; pre-poses are kept verbatim.
    pre = np.asarray(ds.pose(0))[:10]
    g1 = ck3.generate(text="the quick brown fox", pre_poses=pre)
    g2 = ck3.generate(text="the quick brown fox", pre_poses=pre)
    assert g1.shape == cp.POSE_SHAPE
    assert np.array_equal(g1, g2)
    assert np.array_equal(g1[:10], pre)
    assert np.isfinite(g1).all() and np.abs(g1).max() <= 1.0
    g3 = ck3.generate(text="a different sentence")
    assert not np.array_equal(g1, g3)
    print(f"generation: shape {g1.shape}, max |v| {np.abs(g1).max():.3f}")

    # Speech conditioning straight from a wav file.
    wav = next(iter(sorted(data.glob("*.wav"))))
    mel = cp.log_mel_from_wav(wav)
    assert mel.shape == (45, 128)
    g4 = ck3.generate(wav=wav)
    assert np.isfinite(g4).all()

    # Metrics: self-distance is zero; the report covers all four regimes.
    gt = [np.asarray(ds.pose(i)) for i in range(len(ds))]
    assert cp.mpjae(gt, gt) == 0.0
    report = cp.evaluate(ck3, ds, seed=7)
    assert set(report) == {"text-only", "speech-only", "text+speech", "noisy-speech"}
    for condition, metrics in report.items():
        assert set(metrics) == {"mpjae", "mmd", "fgd", "diversity", "bc"}
        assert all(np.isfinite(v) for v in metrics.values()), condition
    print(f"evaluate: text+speech mpjae {report['text+speech']['mpjae']:.4f} rad")

    # Rendering: one PNG per frame plus the GIF.
    frames = cp.render(g1, work / "frames", size=128)
    assert frames == 40
    assert (work / "frames" / "animation.gif").exists()
    print("render: 40 frames + animation.gif")

    print("smoke test passed")


if __name__ == "__main__":
    main()
