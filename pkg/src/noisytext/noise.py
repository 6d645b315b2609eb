"""Label corruption channels: simulated transition-matrix noise and keyword rules.

Simulated corruption is feature-independent by construction: a label's
flip distribution depends only on its gold class. Rule-based weak labels
are feature-dependent because the flip probability varies with the text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import LabeledDataset, Example
from .errors import ConfigError, DataError, FormatError

ROW_SUM_TOL = 1e-9

DROP = "drop"


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic k x k matrix; entry [i][j] = p(noisy=j | gold=i)."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=np.float64)
        object.__setattr__(self, "entries", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
            raise ConfigError("transition matrix must be square with k >= 2")
        if np.any(m < 0) or np.any(m > 1):
            raise ConfigError("transition entries must lie in [0, 1]")
        if np.any(np.abs(m.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise ConfigError("transition rows must sum to 1")

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    def to_json(self) -> str:
        return json.dumps(self.entries.tolist())

    @classmethod
    def from_json(cls, text: str) -> "TransitionMatrix":
        return cls(np.array(json.loads(text), dtype=np.float64))


@dataclass(frozen=True)
class NoiseSpec:
    """Which simulated channel to apply: none, uniform or single_flip."""

    kind: str = "none"
    level: float = 0.0
    flip_map: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.kind not in ("none", "uniform", "single_flip"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.level < 1.0:
            raise ConfigError("noise level must lie in [0, 1)")

    def matrix(self, k: int) -> TransitionMatrix:
        if self.kind == "none":
            return TransitionMatrix(np.eye(k))
        if self.kind == "uniform":
            return uniform_matrix(k, self.level)
        flip = self.flip_map or cyclic_flip_map(k)
        return single_flip_matrix(k, self.level, flip)

    def describe(self) -> str:
        if self.kind == "none":
            return "clean"
        return f"{self.kind}@{self.level:g}"


def cyclic_flip_map(k: int) -> tuple[int, ...]:
    """Default fixed-point-free permutation: i -> (i + 1) mod k."""
    return tuple((i + 1) % k for i in range(k))


def uniform_matrix(k: int, level: float) -> TransitionMatrix:
    """Diagonal 1-level, remaining mass spread evenly over the k-1 other classes.

    ``level`` is the total flip probability, so at 70% noise 30% of labels
    stay correct.
    """
    if k < 2:
        raise ConfigError("k must be >= 2")
    if not 0.0 <= level < 1.0:
        raise ConfigError("noise level must lie in [0, 1)")
    m = np.full((k, k), level / (k - 1))
    np.fill_diagonal(m, 1.0 - level)
    return TransitionMatrix(m)


def single_flip_matrix(k: int, level: float,
                       flip_map: Optional[Sequence[int]] = None) -> TransitionMatrix:
    """Row i keeps 1-level at i and puts level on the single target flip_map[i]."""
    if not 0.0 <= level < 1.0:
        raise ConfigError("noise level must lie in [0, 1)")
    flip = tuple(flip_map) if flip_map is not None else cyclic_flip_map(k)
    if len(flip) != k or any(not 0 <= t < k for t in flip):
        raise ConfigError("flip_map must map each class into [0, k)")
    if any(t == i for i, t in enumerate(flip)):
        raise ConfigError("flip_map must be fixed-point-free")
    m = np.zeros((k, k))
    for i, t in enumerate(flip):
        m[i, i] = 1.0 - level
        m[i, t] = level
    return TransitionMatrix(m)


def corrupt_labels(dataset: LabeledDataset, matrix: TransitionMatrix,
                   seed: int) -> LabeledDataset:
    """Sample a noisy label per example from its gold class's transition row.

    Gold labels, example order and token content are preserved;
    deterministic given the seed.
    """
    if matrix.k != dataset.num_classes:
        raise ConfigError(
            f"matrix is {matrix.k}x{matrix.k} but dataset has {dataset.num_classes} classes")
    rng = np.random.default_rng(seed)
    gold = dataset.gold_labels()
    cdf = np.cumsum(matrix.entries, axis=1)
    cdf[:, -1] = 1.0  # guard against rounding in the last bin
    draws = rng.random(len(gold))
    noisy = np.argmax(cdf[gold] > draws[:, None], axis=1)
    examples = [Example(ex.tokens, ex.gold_label, int(nl))
                for ex, nl in zip(dataset.examples, noisy)]
    return dataset.with_examples(examples)


@dataclass(frozen=True)
class WeakRule:
    """Assign ``target_class`` when any keyword occurs; lower priority wins."""

    target_class: int
    keywords: tuple[str, ...]
    priority: int

    def __post_init__(self):
        if not self.keywords:
            raise ConfigError("rule keywords must be non-empty")


def load_rules(path: str | Path, class_names: Sequence[str]) -> list[WeakRule]:
    """Parse a JSON rule file: [{class, keywords, priority}, ...]."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    index = {name: i for i, name in enumerate(class_names)}
    rules = []
    for i, row in enumerate(raw):
        try:
            cls = row["class"]
            if cls not in index:
                raise FormatError(f"{path}: rule {i}: unknown class {cls!r}")
            rules.append(WeakRule(index[cls], tuple(row["keywords"]), row["priority"]))
        except KeyError as exc:
            raise FormatError(f"{path}: rule {i}: missing {exc}") from exc
    return rules


def apply_rules(dataset: LabeledDataset, rules: Sequence[WeakRule],
                fallback: int | str = DROP) -> LabeledDataset:
    """Weak-label each example by its first matching rule in priority order.

    Unmatched examples get the ``fallback`` class, or are dropped when
    ``fallback`` is ``"drop"``.
    """
    priorities = [r.priority for r in rules]
    if len(set(priorities)) != len(priorities):
        raise ConfigError("rule priorities must be unique")
    if fallback != DROP and not 0 <= int(fallback) < dataset.num_classes:
        raise ConfigError(f"fallback class {fallback} out of range")
    ordered = sorted(rules, key=lambda r: r.priority)
    keyword_ids = [
        {tid for tid in dataset.vocab.encode(r.keywords)
         if dataset.vocab.id_to_token[tid] in r.keywords}
        for r in ordered
    ]
    examples = []
    for ex in dataset.examples:
        toks = set(ex.tokens)
        label = None
        for rule, kws in zip(ordered, keyword_ids):
            if toks & kws:
                label = rule.target_class
                break
        if label is None:
            if fallback == DROP:
                continue
            label = int(fallback)
        examples.append(Example(ex.tokens, ex.gold_label, label))
    if not examples:
        raise DataError("all examples dropped by rules")
    return dataset.with_examples(examples)


def empirical_matrix(gold: Sequence[int], noisy: Sequence[int],
                     k: Optional[int] = None) -> TransitionMatrix:
    """Row-normalized confusion counts between gold and noisy labels."""
    gold = np.asarray(gold, dtype=np.int64)
    noisy = np.asarray(noisy, dtype=np.int64)
    if gold.shape != noisy.shape:
        raise DataError("gold and noisy label arrays differ in length")
    if k is None:
        k = int(gold.max()) + 1 if gold.size else 0
    counts = np.zeros((k, k))
    np.add.at(counts, (gold, noisy), 1.0)
    row_sums = counts.sum(axis=1)
    missing = np.nonzero(row_sums == 0)[0]
    if missing.size:
        raise DataError(f"class {int(missing[0])} never appears in gold labels")
    return TransitionMatrix(counts / row_sums[:, None])
