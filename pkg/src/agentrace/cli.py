"""Command-line pipeline: generate -> label -> extract -> benchmark -> analyze.

Stages talk only through files. Options resolve as flags > environment >
config file > defaults, and the resolved config is written next to every
output (inside JSON artifacts, and in ``<command>.manifest.json`` for every
output), so passing that manifest as ``--config`` reruns a stage exactly.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .detectors import ONE_CLASS, SUPERVISED, DetectorKind, FitError, load_model
from .evaluation import (
    BenchmarkConfig,
    FNAnalysis,
    Importance,
    LabeledDataset,
    SplitError,
    SplitSpec,
    fn_error_analysis,
    format_table,
    permutation_importance,
    project_2d,
    run_benchmark,
)
from .features import FEATURE_NAMES, FeatureError, extract_dataset, features_to_csv, format_float, read_features_csv
from .labeler import GroundTruthRegistry, LabelingError, label_corpus, labels_to_csv, read_labels_csv
from .synth_gen import ConfigError, GenerationConfig, default_paper_profile, generate
from .trace_model import TraceParseError, TraceStructureError, parse_trace_file, serialize_traces

log = logging.getLogger("agentrace")

SEED_ENV = "AGENTRACE_SEED"
MANIFEST_FORMAT = "agentrace-manifest/1"

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

_UMASK = os.umask(0)
os.umask(_UMASK)

# Option defaults per subcommand; flags override these after env and file.
DEFAULTS: dict[str, dict[str, Any]] = {
    "generate": {"scenario": "stock_market", "profile": "paper", "max_traces": None, "generation": None},
    "label": {"traces": None, "ground_truth": None},
    "extract": {"traces": None, "model_vocab": None},
    "benchmark": {"features": None, "labels": None, "models": None, "importance_repeats": 10, "grids": None},
    "analyze": {
        "report": None, "model": None, "features": None, "labels": None, "kind": None, "importance_repeats": 10,
    },
}
REQUIRED = {
    "label": ("traces", "ground_truth"),
    "extract": ("traces",),
    "benchmark": ("features", "labels"),
    "analyze": ("features", "labels"),
}


class UsageError(Exception):
    """Bad flags, config or environment; maps to exit code 2."""


# ---------------------------------------------------------------- file output


def atomic_write(path: Path, data: str | bytes) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        os.chmod(tmp, 0o666 & ~_UMASK)
        kw = {} if mode == "wb" else {"encoding": "utf-8", "newline": ""}
        with os.fdopen(fd, mode, **kw) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Outputs:
    """Collects artifacts of one command and writes the manifest last."""

    def __init__(self, out_dir: Path, provenance: dict[str, Any]):
        self.dir = out_dir
        self.command = provenance["command"]
        self.provenance = provenance
        self.artifacts: dict[str, dict[str, Any]] = {}

    def write(self, name: str, data: str | bytes, rows: int | None = None) -> Path:
        path = self.dir / name
        atomic_write(path, data)
        self.record(path, rows)
        return path

    def record(self, path: Path, rows: int | None = None) -> None:
        entry: dict[str, Any] = {"sha256": _sha256(path)}
        if rows is not None:
            entry["rows"] = rows
        self.artifacts[path.name] = entry

    def finish(self) -> Path:
        manifest = {"format": MANIFEST_FORMAT, "provenance": self.provenance, "artifacts": self.artifacts}
        path = self.dir / f"{self.command}.manifest.json"
        atomic_write(path, _dump_json(manifest))
        return path


# ------------------------------------------------------------- configuration


def _load_config_file(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    # A manifest or report carries the config that produced it.
    if "provenance" in data:
        data = data["provenance"].get("config", {})
    return data


def resolve_seed(flag: int | None, file_cfg: dict[str, Any]) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    if "seed" in file_cfg:
        try:
            return int(file_cfg["seed"])
        except (TypeError, ValueError):
            raise UsageError(f"config seed {file_cfg['seed']!r} is not an integer") from None
    return 0


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    """Merge defaults, config file and flags into ``{"seed", <command>: {...}}``."""
    cmd = args.command
    file_cfg = _load_config_file(getattr(args, "config", None))
    section = file_cfg.get(cmd, {})
    if not isinstance(section, dict):
        raise UsageError(f"config section {cmd!r} must be an object")
    unknown = set(section) - set(DEFAULTS[cmd])
    if unknown:
        raise UsageError(f"unknown {cmd} option(s) in config: {', '.join(sorted(unknown))}")
    opts = {**DEFAULTS[cmd], **section}
    for key in DEFAULTS[cmd]:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    for key in REQUIRED.get(cmd, ()):
        if opts.get(key) is None:
            raise UsageError(f"{cmd}: --{key.replace('_', '-')} is required")
    return {"seed": resolve_seed(getattr(args, "seed", None), file_cfg), cmd: opts}


def _provenance(cfg: dict[str, Any], command: str) -> dict[str, Any]:
    return {"tool": "agentrace", "version": __version__, "command": command, "config": cfg}


# ------------------------------------------------------------------ commands


def _generation_config(opts: dict[str, Any], seed: int) -> GenerationConfig:
    if opts["generation"] is not None:
        cfg = GenerationConfig.from_dict({**opts["generation"], "seed": seed})
    elif opts["profile"] == "paper":
        cfg = default_paper_profile(opts["scenario"], seed=seed)
    else:
        raise ConfigError(f"unknown profile {opts['profile']!r}")
    if opts["max_traces"] is not None:
        cfg = replace(cfg, max_traces=int(opts["max_traces"]))
        cfg.validate()
    return cfg


def cmd_generate(cfg: dict[str, Any], out: Outputs) -> int:
    gen_cfg = _generation_config(cfg["generate"], cfg["seed"])
    corpus = generate(gen_cfg)
    out.provenance["generation"] = gen_cfg.to_dict()
    out.write("traces.jsonl", serialize_traces(corpus.traces), rows=len(corpus.traces))
    out.write("ground_truth.json", corpus.ground_truth_json(), rows=len(corpus.ground_truth))
    out.write("injected.json", corpus.injected_json(), rows=len(corpus.injected))
    log.info("generated %d traces for %s", len(corpus.traces), gen_cfg.scenario.name)
    return EXIT_OK


def cmd_label(cfg: dict[str, Any], out: Outputs) -> int:
    opts = cfg["label"]
    traces = parse_trace_file(opts["traces"])
    registry = GroundTruthRegistry.load(opts["ground_truth"])
    records = label_corpus(traces, registry)
    out.write("labels.csv", labels_to_csv(records), rows=len(records))
    log.info("labeled %d traces, %d anomalous", len(records), sum(r.is_anomaly for r in records))
    return EXIT_OK


def cmd_extract(cfg: dict[str, Any], out: Outputs) -> int:
    opts = cfg["extract"]
    traces = parse_trace_file(opts["traces"])
    vocab = opts["model_vocab"]
    if vocab is None:
        vocab = sorted({t.model_id for t in traces if t.model_id is not None})
    elif isinstance(vocab, str):
        vocab = [v for v in vocab.split(",") if v]
    opts["model_vocab"] = list(vocab)
    X, ids = extract_dataset(traces, vocab)
    out.write("features.csv", features_to_csv(X, ids), rows=len(ids))
    log.info("extracted %d x %d features", *X.shape)
    return EXIT_OK


def load_dataset(features: str, labels: str) -> LabeledDataset:
    """Join a features CSV with a labels CSV on trace_id (features order kept)."""
    X, ids = read_features_csv(features)
    recs = {r.trace_id: r for r in read_labels_csv(labels)}
    missing = [t for t in ids if t not in recs]
    if missing:
        raise LabelingError(f"{len(missing)} feature rows have no label, e.g. {missing[0]!r}", missing)
    extra = sorted(set(recs) - set(ids))
    if extra:
        raise FeatureError(f"{len(extra)} labeled traces have no features, e.g. {extra[0]!r}")
    y = np.array([recs[t].is_anomaly for t in ids], dtype=int)
    modes = np.array([[recs[t].cycle, recs[t].error, recs[t].drift] for t in ids], dtype=int)
    return LabeledDataset(X, y, ids, modes)


def _parse_models(models: Any) -> list[DetectorKind]:
    if models is None:
        return list(DetectorKind)
    items = models.split(",") if isinstance(models, str) else list(models)
    try:
        return [DetectorKind(m.strip().upper()) for m in items if m.strip()]
    except ValueError as exc:
        raise UsageError(f"unknown model kind: {exc}") from None


def cmd_benchmark(cfg: dict[str, Any], out: Outputs, quiet: bool = False) -> int:
    opts = cfg["benchmark"]
    kinds = _parse_models(opts["models"])
    opts["models"] = [k.value for k in kinds]
    data = load_dataset(opts["features"], opts["labels"])
    seed = cfg["seed"]
    bconf = BenchmarkConfig(
        models=kinds,
        grids=opts["grids"],
        split=SplitSpec(seed=seed),
        importance_repeats=int(opts["importance_repeats"]),
        seed=seed,
    )
    report = run_benchmark(data, bconf)
    doc = {**report.to_dict(), "provenance": out.provenance}
    out.write("report.json", _dump_json(doc))
    models_dir = out.dir / "models"
    models_dir.mkdir(exist_ok=True)
    for kind, model in report.models.items():
        path = models_dir / f"{kind.value.lower()}.json"
        atomic_write(path, _dump_json({**model.to_dict(), "provenance": out.provenance}))
        out.artifacts[f"models/{path.name}"] = {"sha256": _sha256(path)}
    ok = [r for r in report.results if r.ok]
    if ok:
        from .plotting import plot_model_comparison

        path = plot_model_comparison(
            [r.kind.value for r in ok], [r.test.accuracy for r in ok], [r.test.macro_f1 for r in ok],
            out.dir / "model_comparison.png",
        )
        out.record(path)
    if not quiet:
        print(format_table(report))
    for r in report.results:
        if not r.ok:
            log.error("%s failed: %s", r.kind.value, r.error)
    return EXIT_OK if report.complete else EXIT_RUNTIME


def _fn_csv(fn: FNAnalysis) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["trace_id", "cycle", "error", "drift", *FEATURE_NAMES, *(f"diff_{n}" for n in FEATURE_NAMES)])
    for r in fn.rows:
        w.writerow([
            r["trace_id"], int(r["cycle"]), int(r["error"]), int(r["drift"]),
            *(format_float(r["features"][n]) for n in FEATURE_NAMES),
            *(format_float(r["diff"][n]) for n in FEATURE_NAMES),
        ])
    return buf.getvalue()


def _importance_csv(imp: Sequence[Importance]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["rank", "feature", "mean_drop", "std_drop"])
    for i, e in enumerate(imp, 1):
        w.writerow([i, e.feature, format_float(e.mean), format_float(e.std)])
    return buf.getvalue()


def _projection_csv(ids: Sequence[str], coords: np.ndarray, y: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["trace_id", "x", "y", "label"])
    for tid, (a, b), lab in zip(ids, coords, y):
        w.writerow([tid, format_float(a), format_float(b), "anomaly" if lab else "normal"])
    return buf.getvalue()


def _from_report(path: str, kind: str | None) -> tuple[str, list[Importance], FNAnalysis]:
    with open(path, encoding="utf-8") as fh:
        rep = json.load(fh)
    if kind is None:
        rows = [m for m in rep["models"] if m["test"] is not None and m["kind"] in rep["importance"]]
        sup = [m for m in rows if DetectorKind(m["kind"]) in SUPERVISED]
        pool = sup or [m for m in rows if DetectorKind(m["kind"]) in ONE_CLASS]
        if not pool:
            raise FitError(f"{path}: report has no analysed model")
        kind = max(pool, key=lambda m: m["val_macro_f1"])["kind"]
    kind = DetectorKind(kind.upper()).value
    if kind not in rep["importance"] or kind not in rep["fn_analysis"]:
        raise FitError(f"{path}: report has no analysis for {kind}")
    imp = [Importance(e["feature"], e["mean"], e["std"]) for e in rep["importance"][kind]]
    return kind, imp, FNAnalysis.from_dict(rep["fn_analysis"][kind])


def cmd_analyze(cfg: dict[str, Any], out: Outputs) -> int:
    opts = cfg["analyze"]
    if (opts["report"] is None) == (opts["model"] is None):
        raise UsageError("analyze: give exactly one of --report or --model")
    data = load_dataset(opts["features"], opts["labels"])
    if opts["report"] is not None:
        kind, imp, fn = _from_report(opts["report"], opts["kind"])
    else:
        model = load_model(opts["model"])
        kind = model.kind.value
        imp = permutation_importance(
            model, data.X, data.y, repeats=int(opts["importance_repeats"]), seed=cfg["seed"]
        )
        fn = fn_error_analysis(data.y, model.predict(data.X)[0], data.X, data.modes, data.trace_ids)
    proj = project_2d(data.X, seed=cfg["seed"])
    out.provenance["analyzed_kind"] = kind
    out.write("fn_table.csv", _fn_csv(fn), rows=fn.n_fn)
    out.write("importance.csv", _importance_csv(imp), rows=len(imp))
    out.write("projection.csv", _projection_csv(data.trace_ids, proj.coords, data.y), rows=len(data))
    from .plotting import plot_importance, plot_projection

    out.record(plot_projection(proj.coords, data.y, out.dir / "projection.png", proj.explained_variance_ratio))
    out.record(plot_importance(
        [e.feature for e in imp], [e.mean for e in imp], [e.std for e in imp],
        out.dir / "importance.png", title=kind,
    ))
    log.info("analyzed %s: %d false negatives", kind, fn.n_fn)
    return EXIT_OK


# -------------------------------------------------------------------- parser


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS defaults let the flags appear before or after the subcommand.
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (env: AGENTRACE_SEED)")
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file or a previous manifest")
    p.add_argument("--out", default=argparse.SUPPRESS, help="existing output directory (default: .)")
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="only print errors")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="agentrace", parents=[common], description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"agentrace {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="synthesize a labeled trace corpus")
    g.add_argument("--scenario", choices=["stock_market", "research_writing"])
    g.add_argument("--profile", choices=["paper"])
    g.add_argument("--max-traces", type=int)

    lab = sub.add_parser("label", parents=[common], help="label traces as normal or anomalous")
    lab.add_argument("--traces")
    lab.add_argument("--ground-truth")

    ex = sub.add_parser("extract", parents=[common], help="compute the 16 trace features")
    ex.add_argument("--traces")
    ex.add_argument("--model-vocab", help="comma-separated model ids (default: models observed, sorted)")

    b = sub.add_parser("benchmark", parents=[common], help="grid-search, fit and evaluate detectors")
    b.add_argument("--features")
    b.add_argument("--labels")
    b.add_argument("--models", help="comma-separated detector kinds (default: all)")
    b.add_argument("--importance-repeats", type=int)

    a = sub.add_parser("analyze", parents=[common], help="importance, FN table and 2-D projection")
    a.add_argument("--report")
    a.add_argument("--model")
    a.add_argument("--features")
    a.add_argument("--labels")
    a.add_argument("--kind", help="model kind to read from --report (default: best supervised)")
    a.add_argument("--importance-repeats", type=int)
    return parser


COMMANDS = {
    "generate": cmd_generate,
    "label": cmd_label,
    "extract": cmd_extract,
    "analyze": cmd_analyze,
}


def _configure_logging(quiet: bool) -> None:
    log.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("agentrace: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.WARNING if quiet else logging.INFO)
    log.propagate = False


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    quiet = getattr(args, "quiet", False)
    _configure_logging(quiet)
    out_dir = Path(getattr(args, "out", "."))
    try:
        if not out_dir.is_dir():
            raise UsageError(f"output directory {out_dir} does not exist")
        cfg = resolve(args)
        out = Outputs(out_dir, _provenance(cfg, args.command))
        if args.command == "benchmark":
            code = cmd_benchmark(cfg, out, quiet=quiet)
        else:
            code = COMMANDS[args.command](cfg, out)
        out.finish()
        return code
    except (UsageError, ConfigError) as exc:
        print(f"agentrace: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, TraceParseError, TraceStructureError, FeatureError, FitError, SplitError, ValueError,
            KeyError) as exc:
        print(f"agentrace: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
