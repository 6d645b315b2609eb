import json
import subprocess
import sys
from pathlib import Path

import pytest

SRC = Path(__file__).resolve().parents[1] / "src"


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "noisytext.cli", *map(str, args)],
        capture_output=True, text=True, cwd=cwd,
        env={"PYTHONPATH": str(SRC), "PATH": "/usr/bin:/bin"},
    )


@pytest.fixture()
def synth_dir(tmp_path):
    out = tmp_path / "data"
    res = run_cli("--seed", 3, "--out-dir", out, "synth",
                  "--k", 4, "--vocab-size", 80, "--keywords-per-class", 4,
                  "--doc-length", 8, "--signal-rate", 0.8, "--n-docs", 300)
    assert res.returncode == 0, res.stderr
    return out


def test_synth_writes_dataset_and_config(synth_dir):
    assert (synth_dir / "synth.jsonl").exists()
    assert (synth_dir / "synth.jsonl.meta.json").exists()
    resolved = json.loads((synth_dir / "synth.config.json").read_text())
    assert resolved["seed"] == 3 and resolved["n_docs"] == 300


def test_inject_noise_then_train(synth_dir, tmp_path):
    res = run_cli("--seed", 5, "--out-dir", synth_dir, "inject-noise",
                  "--dataset", synth_dir / "synth.jsonl",
                  "--kind", "uniform", "--level", 0.4, "--out", "noisy.jsonl")
    assert res.returncode == 0, res.stderr
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "model": {"arch": "bow_linear", "k": 4, "vocab_size": 83},
        "train": {"epochs": 2},
    }))
    res = run_cli("--seed", 5, "--out-dir", synth_dir, "--config", cfg,
                  "train", "--train", synth_dir / "noisy.jsonl",
                  "--val", synth_dir / "noisy.jsonl",
                  "--test", synth_dir / "synth.jsonl",
                  "--method", "WN", "--arch", "bow_linear")
    assert res.returncode == 0, res.stderr
    result = json.loads((synth_dir / "result.json").read_text())
    assert len(result["test_accuracy"]) == 3
    assert (synth_dir / "result.model.json").exists()
    assert (synth_dir / "train.config.json").exists()


def test_label_weak(synth_dir, tmp_path):
    rules = tmp_path / "rules.json"
    rules.write_text(json.dumps([
        {"class": "class0", "keywords": ["key0_0", "key0_1"], "priority": 1},
        {"class": "class1", "keywords": ["key1_0"], "priority": 2},
    ]))
    res = run_cli("--out-dir", synth_dir, "label-weak",
                  "--dataset", synth_dir / "synth.jsonl",
                  "--rules", rules, "--fallback", 0)
    assert res.returncode == 0, res.stderr
    assert (synth_dir / "weak.jsonl").exists()


def test_tapt_checkpoint(synth_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "model": {"arch": "embed_mlp", "k": 4, "vocab_size": 83,
                  "embed_dim": 8, "hidden_dim": 8}}))
    res = run_cli("--seed", 1, "--out-dir", synth_dir, "--config", cfg, "tapt",
                  "--dataset", synth_dir / "synth.jsonl", "--epochs", 1)
    assert res.returncode == 0, res.stderr
    assert (synth_dir / "pretrained.json").exists()
    assert "masked-token accuracy" in res.stdout


def test_benchmark_and_report(tmp_path):
    spec = {
        "methods": ["WN"],
        "noise": [{"kind": "uniform", "level": 0.4}],
        "trials": 1,
        "synthetic": {"k": 2, "vocab_size": 40, "keywords_per_class": 4,
                      "doc_length": 8, "signal_rate": 0.8, "n_docs": 150,
                      "seed": 2},
        "n_test": 50,
        "model": {"arch": "bow_linear", "k": 2, "vocab_size": 43},
        "train_overrides": {"epochs": 1},
    }
    cfg = tmp_path / "spec.json"
    cfg.write_text(json.dumps(spec))
    out = tmp_path / "bench"
    res = run_cli("--config", cfg, "--out-dir", out, "benchmark")
    assert res.returncode == 0, res.stderr
    for suffix in (".json", ".csv", ".md"):
        assert (out / f"report{suffix}").exists()
    res = run_cli("report", "--report", out / "report.json", "--fmt", "csv")
    assert res.returncode == 0
    assert res.stdout.startswith("method,noise,tapt,")


def test_config_error_exit_code_1(tmp_path):
    res = run_cli("--out-dir", tmp_path, "inject-noise",
                  "--dataset", __file__, "--level", 0.4)
    # dataset file exists but lacks metadata sidecar -> config/format error
    assert res.returncode == 1
    assert "error" in res.stderr.lower()


def test_benchmark_without_spec_is_config_error(tmp_path):
    res = run_cli("--out-dir", tmp_path, "benchmark")
    assert res.returncode == 1
