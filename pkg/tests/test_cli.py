import json

import numpy as np
import pytest
from PIL import Image

from deepfuse.cli import main
from deepfuse.imgcore import GrayImage, save_pgm


def write_png(path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.clip(data, 0, 255).astype(np.uint8), mode="L").save(path)


def stripes(rng, vertical, size=28):
    f = rng.uniform(0.15, 0.35)
    phase = rng.uniform(0, 2 * np.pi)
    t = np.arange(size)
    wave = 127 + 90 * np.sin(2 * np.pi * f * t + phase)
    img = np.tile(wave, (size, 1)) if vertical else np.tile(wave[:, None], (1, size))
    return img + rng.normal(0, 8, (size, size))


@pytest.fixture(scope="module")
def easy_corpus(tmp_path_factory):
    """Real = horizontal stripes, fake = vertical stripes: separable by HOG."""
    root = tmp_path_factory.mktemp("easy")
    rng = np.random.default_rng(0)
    for i in range(30):
        write_png(root / "real" / f"r{i:03d}.png", stripes(rng, False))
        write_png(root / "fake" / f"f{i:03d}.png", stripes(rng, True))
    return root


@pytest.fixture(scope="module")
def toy_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    rng = np.random.default_rng(1)
    for name in ("real/a.png", "real/b.png", "real/c.png", "fake/a.png", "fake/b.png"):
        write_png(root / name, rng.uniform(0, 255, (28, 28)))
    return root


def frames_dir(root, values):
    root.mkdir(parents=True, exist_ok=True)
    for i, v in enumerate(values):
        save_pgm(GrayImage(np.full((16, 16), float(v))), root / f"frame_{i:04d}.pgm")
    return root


def test_usage_errors(capsys):
    assert main(["frobnicate"]) == 2
    assert main(["features", "--corpus", "x"]) == 2
    assert main(["features", "--corpus", "x", "--out", "y", "--scheme", "sift"]) == 2


def test_features_columns_and_determinism(toy_corpus, tmp_path, capsys):
    out = tmp_path / "f.csv"
    assert main(["features", "--corpus", str(toy_corpus), "--out", str(out)]) == 0
    assert "5 rows x 400 columns" in capsys.readouterr().out
    header = out.read_text().splitlines()[1].split(",")
    assert len(header) == 2 + 400
    again = tmp_path / "g.csv"
    assert main(["features", "--corpus", str(toy_corpus), "--out", str(again), "--threads", "4"]) == 0
    assert out.read_bytes() == again.read_bytes()
    cfg = json.loads((tmp_path / "f.csv.config.json").read_text())
    assert cfg["extractor"]["scheme"] == "hog+kaze"


def test_features_missing_class(tmp_path, capsys):
    write_png(tmp_path / "c" / "real" / "a.png", np.zeros((28, 28)))
    assert main(["features", "--corpus", str(tmp_path / "c"), "--out", str(tmp_path / "f.csv")]) == 3
    assert "fake" in capsys.readouterr().err


def test_keyframes_identical_frames(tmp_path):
    src = frames_dir(tmp_path / "frames", [100] * 60)
    out = tmp_path / "kf"
    assert main(["keyframes", "--frames", str(src), "--out", str(out)]) == 0
    assert len(list(out.glob("keyframe_*.pgm"))) == 1
    assert "duplicate" in (out / "selection.tsv").read_text()
    assert (out / "effective_config.json").exists()


def test_keyframes_empty_dir(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["keyframes", "--frames", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == 3
    assert "no frames found" in capsys.readouterr().err


def test_keyframes_tau_monotone(tmp_path):
    values = np.random.default_rng(2).integers(0, 256, 120)
    src = frames_dir(tmp_path / "frames", values)
    counts = {}
    for tau in ("0.05", "0.9"):
        out = tmp_path / f"kf{tau}"
        assert main(["keyframes", "--frames", str(src), "--out", str(out), "--tau", tau]) == 0
        counts[tau] = len(list(out.glob("keyframe_*.pgm")))
    assert counts["0.9"] <= counts["0.05"]


def test_train_eval_easy_corpus(easy_corpus, tmp_path, capsys):
    feats, model, report = tmp_path / "f.csv", tmp_path / "m.dfm", tmp_path / "e.json"
    assert main(["features", "--corpus", str(easy_corpus), "--out", str(feats), "--scheme", "hog"]) == 0
    assert main(["train", "--features", str(feats), "--model", str(model)]) == 0
    assert (tmp_path / "m.dfm.config.json").exists()
    capsys.readouterr()
    assert main(["eval", "--features", str(feats), "--model", str(model), "--out", str(report)]) == 0
    printed = capsys.readouterr().out
    acc = float(printed.split("accuracy")[1].split()[0])
    assert acc >= 0.95
    data = json.loads(report.read_text())
    assert data["accuracy"] == acc and data["n_test"] == 12


def test_eval_fingerprint_mismatch(easy_corpus, tmp_path, capsys):
    hog, hog12 = tmp_path / "hog.csv", tmp_path / "hog12.csv"
    assert main(["features", "--corpus", str(easy_corpus), "--out", str(hog), "--scheme", "hog"]) == 0
    assert main(["features", "--corpus", str(easy_corpus), "--out", str(hog12), "--scheme", "hog",
                 "--hog-bins", "12"]) == 0
    model = tmp_path / "m.dfm"
    assert main(["train", "--features", str(hog), "--model", str(model), "--classifier", "rf",
                 "--hp", "n_trees=5"]) == 0
    capsys.readouterr()
    assert main(["eval", "--features", str(hog12), "--model", str(model)]) == 3
    assert "re-extract" in capsys.readouterr().err


def test_bench_runs(easy_corpus, tmp_path):
    out = tmp_path / "bench.json"
    assert main(["bench", "--corpus", str(easy_corpus), "--scheme", "hog", "--runs", "3",
                 "--out", str(out), "--table"]) == 0
    body = json.loads(out.read_text().split("\n", 1)[1])
    for phase in ("feature_extraction", "training", "inference"):
        assert len(body["phases"][phase]["samples_ns"]) == 3


def test_config_file_with_flag_override(easy_corpus, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"seed": 0, "features": {"scheme": "lbp"}}))
    out = tmp_path / "f.csv"
    assert main(["features", "--config", str(cfg), "--corpus", str(easy_corpus), "--out", str(out)]) == 0
    assert json.loads(out.read_text().splitlines()[0][2:])["scheme"] == "lbp"
    assert main(["features", "--config", str(cfg), "--corpus", str(easy_corpus), "--out", str(out),
                 "--scheme", "hog"]) == 0
    assert json.loads(out.read_text().splitlines()[0][2:])["scheme"] == "hog"
    cfg.write_text(json.dumps({"features": {"bogus": 1}}))
    assert main(["features", "--config", str(cfg), "--corpus", str(easy_corpus), "--out", str(out)]) == 2


def test_pipeline(easy_corpus, tmp_path):
    out = tmp_path / "run"
    assert main(["pipeline", "--corpus", str(easy_corpus), "--out", str(out), "--scheme", "hog",
                 "--classifier", "et", "--hp", "n_trees=10"]) == 0
    for name in ("features.csv", "model.dfm", "eval.json", "effective_config.json"):
        assert (out / name).exists()
    assert json.loads((out / "eval.json").read_text())["accuracy"] >= 0.95
