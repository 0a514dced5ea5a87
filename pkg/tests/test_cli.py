from __future__ import annotations

import csv
import json
import os

import jsonschema
import numpy as np
import pytest

from agentrace.cli import main
from agentrace.detectors import fit_gbt, save_model
from agentrace.evaluation import REPORT_SCHEMA
from agentrace.features import build_model_vocab, extract_features, read_features_csv
from agentrace.labeler import read_labels_csv
from agentrace.trace_model import parse_trace_file

FAST = {
    "benchmark": {
        "grids": {
            "GBT": {"trees": [20], "depth": [3]},
            "RANDOM_FOREST": {"trees": [20], "seed": [0]},
            "ISOLATION_FOREST": {"trees": [30], "subsample_size": [64], "seed": [0]},
            "KMEANS": {"k": [4, 8], "seed": [0]},
        }
    }
}


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _pipeline(root, seed=3):
    root.mkdir(exist_ok=True)
    (root / "fast.json").write_text(json.dumps(FAST))
    d = str(root)
    codes = [
        main(["generate", "--scenario", "research_writing", "--max-traces", "240", "--seed", str(seed),
              "--out", d, "--quiet"]),
        main(["label", "--traces", f"{d}/traces.jsonl", "--ground-truth", f"{d}/ground_truth.json",
              "--out", d, "--quiet"]),
        main(["extract", "--traces", f"{d}/traces.jsonl", "--out", d, "--quiet"]),
        main(["benchmark", "--features", f"{d}/features.csv", "--labels", f"{d}/labels.csv",
              "--config", f"{d}/fast.json", "--seed", str(seed), "--out", d, "--quiet"]),
        main(["analyze", "--report", f"{d}/report.json", "--features", f"{d}/features.csv",
              "--labels", f"{d}/labels.csv", "--out", d, "--quiet"]),
    ]
    return codes


ARTIFACTS = ["traces.jsonl", "ground_truth.json", "injected.json", "labels.csv", "features.csv",
             "report.json", "fn_table.csv", "importance.csv", "projection.csv",
             "projection.png", "importance.png", "model_comparison.png"]


@pytest.fixture(scope="module")
def run_a(tmp_path_factory):
    root = tmp_path_factory.mktemp("a")
    assert _pipeline(root) == [0, 0, 0, 0, 0]
    return root


def test_pipeline_outputs(run_a):
    traces = parse_trace_file(run_a / "traces.jsonl")
    assert len(traces) == 240
    labels = read_labels_csv(run_a / "labels.csv")
    assert [r.trace_id for r in labels] == [t.trace_id for t in traces]
    injected = json.loads((run_a / "injected.json").read_text())
    for r in labels:
        assert r.is_anomaly == any(injected[r.trace_id][m] for m in ("cycle", "error", "drift"))

    feats = _rows(run_a / "features.csv")
    assert all(len(r) == 17 for r in feats) and len(feats) == 241
    X, ids = read_features_csv(run_a / "features.csv")
    vocab = build_model_vocab(traces)
    np.testing.assert_allclose(X[7], extract_features(traces[7], vocab), rtol=1e-8)

    report = json.loads((run_a / "report.json").read_text())
    jsonschema.validate(report, REPORT_SCHEMA)
    assert len(report["models"]) == 8
    assert report["provenance"]["config"]["seed"] == 3

    assert len(_rows(run_a / "importance.csv")) == 17
    assert len(_rows(run_a / "projection.csv")) == 241
    fn_rows = _rows(run_a / "fn_table.csv")
    assert len(fn_rows[0]) == 4 + 32
    for name in ARTIFACTS:
        assert (run_a / name).stat().st_size > 0
    for cmd in ("generate", "label", "extract", "benchmark", "analyze"):
        man = json.loads((run_a / f"{cmd}.manifest.json").read_text())
        assert man["provenance"]["command"] == cmd and man["artifacts"]


def test_pipeline_is_byte_identical(run_a, tmp_path):
    # Relative paths inside manifests differ between directories, so compare data files only.
    assert _pipeline(tmp_path / "b") == [0, 0, 0, 0, 0]
    for name in ARTIFACTS:
        if name == "report.json":
            a = json.loads((run_a / name).read_text())
            b = json.loads((tmp_path / "b" / name).read_text())
            a.pop("provenance"), b.pop("provenance")
            assert a == b
        else:
            assert (run_a / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_manifest_reruns_generate(run_a, tmp_path):
    assert main(["generate", "--config", str(run_a / "generate.manifest.json"), "--out", str(tmp_path),
                 "--quiet"]) == 0
    assert (tmp_path / "traces.jsonl").read_bytes() == (run_a / "traces.jsonl").read_bytes()


def test_seed_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 5, "generate": {"scenario": "research_writing", "max_traces": 20}}))
    outs = {}
    for name, env, flag in (("file", None, None), ("env", "9", None), ("flag", "9", "2")):
        d = tmp_path / name
        d.mkdir()
        if env is None:
            monkeypatch.delenv("AGENTRACE_SEED", raising=False)
        else:
            monkeypatch.setenv("AGENTRACE_SEED", env)
        argv = ["generate", "--config", str(cfg), "--out", str(d), "--quiet"]
        if flag:
            argv += ["--seed", flag]
        assert main(argv) == 0
        outs[name] = json.loads((d / "generate.manifest.json").read_text())["provenance"]["config"]["seed"]
    assert outs == {"file": 5, "env": 9, "flag": 2}


def test_usage_errors_exit_2(tmp_path, monkeypatch, capsys):
    assert main(["generate", "--out", str(tmp_path / "missing")]) == 2
    assert "does not exist" in capsys.readouterr().err
    assert main(["label", "--out", str(tmp_path)]) == 2
    assert main(["bogus"]) == 2
    monkeypatch.setenv("AGENTRACE_SEED", "abc")
    assert main(["generate", "--out", str(tmp_path), "--max-traces", "5"]) == 2


def test_runtime_errors_exit_1(run_a, tmp_path):
    gt = tmp_path / "gt.json"
    gt.write_text("{}")
    assert main(["label", "--traces", str(run_a / "traces.jsonl"), "--ground-truth", str(gt),
                 "--out", str(tmp_path), "--quiet"]) == 1
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    assert main(["extract", "--traces", str(bad), "--out", str(tmp_path), "--quiet"]) == 1


def test_generated_files_respect_umask(run_a):
    mask = os.umask(0)
    os.umask(mask)
    assert (run_a / "labels.csv").stat().st_mode & 0o777 == 0o666 & ~mask


def test_perfect_model_gives_header_only_fn_table(run_a, tmp_path):
    X, _ = read_features_csv(run_a / "features.csv")
    y = np.array([r.is_anomaly for r in read_labels_csv(run_a / "labels.csv")], dtype=int)
    model = fit_gbt(X, y, {"trees": 60, "depth": 6})
    assert np.array_equal(model.predict(X)[0], y)
    save_model(model, tmp_path / "gbt.json")
    assert main(["analyze", "--model", str(tmp_path / "gbt.json"), "--features", str(run_a / "features.csv"),
                 "--labels", str(run_a / "labels.csv"), "--out", str(tmp_path), "--quiet"]) == 0
    assert len(_rows(tmp_path / "fn_table.csv")) == 1
    assert len(_rows(tmp_path / "importance.csv")) == 17
