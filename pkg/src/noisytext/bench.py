"""Multi-seed experiment grids and report emission.

A grid is (methods x noise settings x tapt flags); every cell runs
``trials`` independent seeded pipelines and reports mean and sample
standard deviation of clean-test accuracy in percent. Seeds are derived
per cell so removing one cell never shifts another's results.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .corpus import LabeledDataset, SynthSpec, generate_synthetic, load_dataset
from .errors import ConfigError
from .model import ClassifierConfig, EMBED_MLP, init_model
from .noise import (NoiseSpec, TransitionMatrix, apply_rules, corrupt_labels,
                    empirical_matrix, load_rules)
from .train import (
    METHOD_CO_TEACHING, METHOD_LABEL_SMOOTHING, METHOD_NOISE_MATRIX,
    METHOD_NOISE_MATRIX_REG, METHOD_NONE, TaptConfig, TrainConfig, evaluate,
    tapt_pretrain, train,
)

# short method codes -> (training method, use_validation)
METHOD_CODES = {
    "NV": (METHOD_NONE, False),
    "WN": (METHOD_NONE, True),
    "CT": (METHOD_CO_TEACHING, True),
    "NMat": (METHOD_NOISE_MATRIX, True),
    "NMwR": (METHOD_NOISE_MATRIX_REG, True),
    "LS": (METHOD_LABEL_SMOOTHING, True),
}

CSV_COLUMNS = ("method", "noise", "tapt", "mean", "std", "trials", "seeds")


@dataclass(frozen=True)
class NoiseSetting:
    """One column of the grid: a simulated channel or a weak-rule file."""

    kind: str                       # none | uniform | single_flip | rules
    level: float = 0.0
    rules_path: Optional[str] = None
    fallback: int | str = "drop"

    @property
    def id(self) -> str:
        if self.kind == "rules":
            return f"rules:{Path(self.rules_path).name}"
        return NoiseSpec(self.kind, self.level).describe()


@dataclass(frozen=True)
class ExperimentSpec:
    methods: tuple[str, ...]
    noise: tuple[NoiseSetting, ...]
    tapt: str = "off"               # off | on | both
    trials: int = 5
    base_seed: int = 0
    val_fraction: float = 0.1
    synthetic: Optional[SynthSpec] = None
    n_test: int = 1000
    train_file: Optional[str] = None
    test_file: Optional[str] = None
    file_format: str = "jsonl"
    text_field: str = "text"
    label_field: str = "label"
    model: Optional[ClassifierConfig] = None
    train_overrides: dict = field(default_factory=dict)
    tapt_cfg: TaptConfig = field(default_factory=TaptConfig)

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.tapt not in ("off", "on", "both"):
            raise ConfigError("tapt must be off, on or both")
        for m in self.methods:
            if m not in METHOD_CODES:
                raise ConfigError(f"unknown method code {m!r}")
        if self.synthetic is None and self.train_file is None:
            raise ConfigError("spec needs a synthetic block or a train file")

    @property
    def tapt_flags(self) -> tuple[bool, ...]:
        return {"off": (False,), "on": (True,), "both": (False, True)}[self.tapt]


def parse_spec(raw: dict) -> ExperimentSpec:
    """Build an ExperimentSpec from a decoded JSON object."""
    raw = dict(raw)
    noise = tuple(NoiseSetting(**n) for n in raw.pop("noise", [{"kind": "none"}]))
    synthetic = raw.pop("synthetic", None)
    if synthetic is not None:
        synthetic = SynthSpec(**synthetic)
    model = raw.pop("model", None)
    if model is not None:
        model = ClassifierConfig(**model)
    tapt_cfg = TaptConfig(**raw.pop("tapt_cfg", {}))
    overrides = dict(raw.pop("train_overrides", {}))
    if isinstance(overrides.get("transition"), list):
        overrides["transition"] = TransitionMatrix(
            np.array(overrides["transition"], dtype=np.float64))
    raw["train_overrides"] = overrides
    methods = tuple(raw.pop("methods"))
    try:
        return ExperimentSpec(methods=methods, noise=noise, synthetic=synthetic,
                              model=model, tapt_cfg=tapt_cfg, **raw)
    except TypeError as exc:
        raise ConfigError(f"bad experiment spec: {exc}") from exc


@dataclass
class ReportRow:
    method: str
    noise: str
    tapt: bool
    mean: float      # percent
    std: float       # percent, sample (n-1)
    trials: int
    seeds: tuple[int, ...]


@dataclass
class Report:
    rows: list[ReportRow]
    provenance: dict

    def to_json(self) -> str:
        return json.dumps({
            "rows": [row.__dict__ | {"seeds": list(row.seeds)} for row in self.rows],
            "provenance": self.provenance,
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Report":
        raw = json.loads(text)
        rows = [ReportRow(**(r | {"seeds": tuple(r["seeds"])})) for r in raw["rows"]]
        return cls(rows, raw["provenance"])


def aggregate(accuracies) -> tuple[float, float]:
    """Mean and sample (n-1) standard deviation; std is 0 for a single trial."""
    arr = np.asarray(accuracies, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def derive_seed(base_seed: int, method: str, noise_id: str, tapt: bool,
                trial: int) -> int:
    """Stable per-cell, per-trial seed; independent of the rest of the grid."""
    key = f"{base_seed}|{method}|{noise_id}|{int(tapt)}|{trial}"
    digest = hashlib.sha256(key.encode()).digest()
    return int.from_bytes(digest[:4], "big")


def _load_pools(spec: ExperimentSpec) -> tuple[LabeledDataset, LabeledDataset]:
    if spec.synthetic is not None:
        full = generate_synthetic(replace(spec.synthetic,
                                          n_docs=spec.synthetic.n_docs + spec.n_test))
        pool = full.subset(range(len(full) - spec.n_test))
        test = full.subset(range(len(full) - spec.n_test, len(full)))
        return pool, test
    pool = load_dataset(spec.train_file, spec.file_format,
                        spec.text_field, spec.label_field)
    test = load_dataset(spec.test_file, spec.file_format,
                        spec.text_field, spec.label_field)
    return pool, test


def _default_model(spec: ExperimentSpec, pool: LabeledDataset) -> ClassifierConfig:
    if spec.model is not None:
        return spec.model
    return ClassifierConfig(EMBED_MLP, pool.num_classes, pool.vocab.size)


def _run_trial(spec: ExperimentSpec, pool: LabeledDataset, test: LabeledDataset,
               method: str, setting: NoiseSetting, tapt: bool, seed: int) -> float:
    # noise injection
    if setting.kind == "rules":
        rules = load_rules(setting.rules_path, pool.class_names)
        noisy_pool = apply_rules(pool, rules, setting.fallback)
    else:
        matrix = NoiseSpec(setting.kind, setting.level).matrix(pool.num_classes)
        noisy_pool = corrupt_labels(pool, matrix, seed)
    n_val = max(1, int(round(spec.val_fraction * len(noisy_pool))))
    train_split = noisy_pool.subset(range(len(noisy_pool) - n_val))
    val_split = noisy_pool.subset(range(len(noisy_pool) - n_val, len(noisy_pool)))

    train_method, use_val = METHOD_CODES[method]
    overrides = dict(spec.train_overrides)
    if train_method == METHOD_NOISE_MATRIX and "transition" not in overrides:
        if setting.kind == "rules":
            overrides["transition"] = empirical_matrix(
                noisy_pool.gold_labels(), noisy_pool.noisy_labels(),
                noisy_pool.num_classes)
        else:
            overrides["transition"] = NoiseSpec(
                setting.kind, setting.level).matrix(pool.num_classes)
    if train_method == METHOD_CO_TEACHING and "forget_rate" not in overrides:
        flipped = float(np.mean(
            noisy_pool.gold_labels() != noisy_pool.noisy_labels()))
        overrides["forget_rate"] = min(flipped, 0.99)
    train_cfg = TrainConfig(method=train_method, use_validation=use_val,
                            seed=seed, **overrides)
    model_cfg = replace(_default_model(spec, pool), init_seed=seed)

    start_model = None
    if tapt:
        start_model = tapt_pretrain(init_model(model_cfg), train_split,
                                    replace(spec.tapt_cfg, seed=seed))
    selected, _result = train(train_split, val_split, test, model_cfg,
                              train_cfg, start_model=start_model)
    return 100.0 * evaluate(selected, test, "gold")


def run_experiment(spec: ExperimentSpec) -> Report:
    """Execute every grid cell over its trials and aggregate."""
    pool, test = _load_pools(spec)
    rows: list[ReportRow] = []
    per_trial: dict[str, list[float]] = {}
    for setting in spec.noise:
        for method in spec.methods:
            for tapt in spec.tapt_flags:
                seeds = tuple(derive_seed(spec.base_seed, method, setting.id,
                                          tapt, t) for t in range(spec.trials))
                accs = []
                for trial, seed in enumerate(seeds):
                    try:
                        accs.append(_run_trial(spec, pool, test, method,
                                               setting, tapt, seed))
                    except Exception as exc:
                        raise RuntimeError(
                            f"trial failed: method={method} noise={setting.id} "
                            f"seed={seed}: {exc}") from exc
                mean, std = aggregate(accs)
                rows.append(ReportRow(method, setting.id, tapt, mean, std,
                                      spec.trials, seeds))
                per_trial[f"{method}|{setting.id}|{int(tapt)}"] = accs
    provenance = {
        "spec_hash": spec_hash(spec),
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "per_trial_accuracy": per_trial,
    }
    return Report(rows, provenance)


def spec_hash(spec: ExperimentSpec) -> str:
    blob = json.dumps(spec, default=_jsonable, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(obj):
    if hasattr(obj, "__dict__"):
        return obj.__dict__
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    return str(obj)


# --------------------------------------------------------------------------
# formatting

def _round2(x: float) -> Decimal:
    return Decimal(repr(float(x))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


def format_row(mean: float, std: float) -> str:
    """Render an accuracy cell as ``MM.MM±S.SS`` with half-up rounding."""
    return f"{_round2(mean)}±{_round2(std)}"


def format_delta(delta: float) -> str:
    """Signed improvement with a direction arrow; exact zero has no arrow."""
    r = _round2(delta)
    if r == 0:
        return "0.00"
    arrow = "↑" if r > 0 else "↓"
    return f"{abs(r)}{arrow}"


def delta_table(report: Report) -> list[dict]:
    """Pair tapt-off/on cells per (method, noise) and render original | delta."""
    cells = {(r.method, r.noise, r.tapt): r for r in report.rows}
    rows, missing = [], []
    seen = []
    for r in report.rows:
        key = (r.method, r.noise)
        if key in seen:
            continue
        seen.append(key)
        off = cells.get((*key, False))
        on = cells.get((*key, True))
        if off is None or on is None:
            missing.append(key)
            continue
        delta = on.mean - off.mean
        rows.append({
            "method": r.method,
            "noise": r.noise,
            "original": float(off.mean),
            "delta": float(delta),
            "rendered": f"{_round2(off.mean)} | {format_delta(delta)}",
        })
    if missing:
        raise ConfigError(f"unmatched tapt cells for: {missing}")
    return rows


def emit_report(report: Report, fmt: str, path: str | Path) -> None:
    """Write the report as CSV (machine) or grouped Markdown tables (human)."""
    if fmt == "csv":
        text = report_csv(report)
    elif fmt == "markdown":
        text = report_markdown(report)
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    Path(path).write_text(text, encoding="utf-8")


def report_csv(report: Report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in report.rows:
        writer.writerow([r.method, r.noise, int(r.tapt), repr(r.mean),
                         repr(r.std), r.trials, ";".join(map(str, r.seeds))])
    return buf.getvalue()


def parse_report_csv(text: str) -> list[ReportRow]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(ReportRow(rec["method"], rec["noise"], bool(int(rec["tapt"])),
                              float(rec["mean"]), float(rec["std"]),
                              int(rec["trials"]),
                              tuple(int(s) for s in rec["seeds"].split(";"))))
    return rows


def report_markdown(report: Report) -> str:
    noise_ids = list(dict.fromkeys(r.noise for r in report.rows))
    lines = []
    for tapt in (False, True):
        rows = [r for r in report.rows if r.tapt is tapt]
        if not rows:
            continue
        methods = list(dict.fromkeys(r.method for r in rows))
        cells = {(r.method, r.noise): r for r in rows}
        title = "TAPT + fine-tuning" if tapt else "Fine-tuning"
        lines.append(f"## {title}")
        lines.append("")
        lines.append("| Method | " + " | ".join(noise_ids) + " |")
        lines.append("|" + "---|" * (len(noise_ids) + 1))
        for m in methods:
            entries = []
            for nid in noise_ids:
                r = cells.get((m, nid))
                entries.append(format_row(r.mean, r.std) if r else "-")
            lines.append(f"| {m} | " + " | ".join(entries) + " |")
        lines.append("")
    return "\n".join(lines)
