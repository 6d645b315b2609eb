"""Datasets, tokenization, vocabularies and the synthetic keyword corpus.

Text is tokenized by lowercasing and splitting on non-alphanumeric
characters; there is no subword segmentation. Documents are stored as
token-id sequences against an immutable vocabulary with three reserved
ids (PAD=0, UNK=1, MASK=2).
"""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, FormatError

PAD_ID = 0
UNK_ID = 1
MASK_ID = 2
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
MASK_TOKEN = "<mask>"

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric boundaries; punctuation is dropped."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    """Injective token -> id map with contiguous ids and reserved ids 0-2."""

    token_to_id: dict[str, int]
    id_to_token: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        t2i = self.token_to_id
        return [t2i.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def __post_init__(self):
        if self.id_to_token[:3] != (PAD_TOKEN, UNK_TOKEN, MASK_TOKEN):
            raise ValueError("reserved ids 0-2 must be PAD/UNK/MASK")


def _vocab_from_tokens(tokens: Sequence[str]) -> Vocabulary:
    id_to_token = (PAD_TOKEN, UNK_TOKEN, MASK_TOKEN) + tuple(tokens)
    token_to_id = {t: i for i, t in enumerate(id_to_token)}
    if len(token_to_id) != len(id_to_token):
        raise ValueError("duplicate tokens in vocabulary")
    return Vocabulary(token_to_id, id_to_token)


def build_vocab(corpus: Iterable[Sequence[str]], min_freq: int = 1,
                max_size: int = 1_000_000) -> Vocabulary:
    """Frequency-sorted vocabulary; ties broken lexicographically.

    Tokens with frequency < ``min_freq`` are dropped; the result holds at
    most ``max_size`` entries including the three reserved ids.
    """
    if min_freq < 1:
        raise ConfigError("min_freq must be >= 1")
    if max_size <= 3:
        raise ConfigError("max_size must leave room for reserved ids")
    freq = Counter()
    for doc in corpus:
        freq.update(doc)
    kept = sorted((t for t, c in freq.items() if c >= min_freq),
                  key=lambda t: (-freq[t], t))
    return _vocab_from_tokens(kept[: max_size - 3])


@dataclass(frozen=True)
class Example:
    """One document: token ids plus gold and (optional) noisy class index."""

    tokens: tuple[int, ...]
    gold_label: int
    noisy_label: Optional[int] = None


@dataclass(frozen=True)
class LabeledDataset:
    """Immutable collection of examples over a shared vocabulary."""

    examples: tuple[Example, ...]
    num_classes: int
    class_names: tuple[str, ...]
    vocab: Vocabulary

    def __post_init__(self):
        if self.num_classes < 2:
            raise DataError("need at least 2 classes")
        if len(self.class_names) != self.num_classes:
            raise DataError("class_names length must equal num_classes")
        for i, ex in enumerate(self.examples):
            if not 0 <= ex.gold_label < self.num_classes:
                raise DataError(f"example {i}: gold label out of range")
            if ex.noisy_label is not None and not 0 <= ex.noisy_label < self.num_classes:
                raise DataError(f"example {i}: noisy label out of range")

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def has_noisy(self) -> bool:
        return all(ex.noisy_label is not None for ex in self.examples)

    def gold_labels(self) -> np.ndarray:
        return np.array([ex.gold_label for ex in self.examples], dtype=np.int64)

    def noisy_labels(self) -> np.ndarray:
        labels = [ex.noisy_label for ex in self.examples]
        if any(l is None for l in labels):
            raise DataError("noisy labels missing")
        return np.array(labels, dtype=np.int64)

    def with_examples(self, examples: Sequence[Example]) -> "LabeledDataset":
        return replace(self, examples=tuple(examples))

    def subset(self, indices: Sequence[int]) -> "LabeledDataset":
        return self.with_examples([self.examples[i] for i in indices])


@dataclass(frozen=True)
class SynthSpec:
    """Generative recipe for the class-keyword mixture corpus.

    Each token of a document is, independently, a keyword of the gold
    class with probability ``signal_rate`` and a shared background token
    otherwise; the Bayes-optimal rule on this model is keyword lookup.
    """

    k: int
    vocab_size: int
    keywords_per_class: int
    doc_length: int
    signal_rate: float
    n_docs: int
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if not 0.0 <= self.signal_rate <= 1.0:
            raise ConfigError("signal_rate must lie in [0, 1]")
        if self.vocab_size < self.k * self.keywords_per_class:
            raise ConfigError("vocab_size too small for the requested keyword sets")
        if self.signal_rate < 1.0 and self.vocab_size == self.k * self.keywords_per_class:
            raise ConfigError("no background tokens available but signal_rate < 1")


def synthetic_keywords(spec: SynthSpec) -> list[list[str]]:
    """The (disjoint) keyword token strings per class, deterministic by naming."""
    return [[f"key{c}_{j}" for j in range(spec.keywords_per_class)]
            for c in range(spec.k)]


def synthetic_vocab(spec: SynthSpec) -> Vocabulary:
    n_bg = spec.vocab_size - spec.k * spec.keywords_per_class
    tokens = [t for kws in synthetic_keywords(spec) for t in kws]
    tokens += [f"bg{m}" for m in range(n_bg)]
    return _vocab_from_tokens(tokens)


def generate_synthetic(spec: SynthSpec) -> LabeledDataset:
    """Sample a balanced synthetic corpus; bit-deterministic given the spec."""
    vocab = synthetic_vocab(spec)
    keyword_ids = [vocab.encode(kws) for kws in synthetic_keywords(spec)]
    n_bg = spec.vocab_size - spec.k * spec.keywords_per_class
    bg_ids = vocab.encode([f"bg{m}" for m in range(n_bg)])
    rng = np.random.default_rng(spec.seed)
    labels = rng.permutation(np.arange(spec.n_docs) % spec.k)
    examples = []
    for label in labels:
        kws = keyword_ids[label]
        is_signal = rng.random(spec.doc_length) < spec.signal_rate
        toks = np.where(
            is_signal,
            rng.choice(kws, size=spec.doc_length) if kws else 0,
            rng.choice(bg_ids, size=spec.doc_length) if bg_ids else 0,
        )
        examples.append(Example(tuple(int(t) for t in toks), int(label)))
    names = tuple(f"class{c}" for c in range(spec.k))
    return LabeledDataset(tuple(examples), spec.k, names, vocab)


def keyword_lookup_predict(dataset: LabeledDataset, spec: SynthSpec) -> np.ndarray:
    """Bayes-style baseline: predict the class with most keyword hits (ties -> smaller)."""
    keyword_ids = [set(ids) for ids in
                   (dataset.vocab.encode(kws) for kws in synthetic_keywords(spec))]
    preds = np.zeros(len(dataset), dtype=np.int64)
    for i, ex in enumerate(dataset.examples):
        hits = [sum(t in kw for t in ex.tokens) for kw in keyword_ids]
        preds[i] = int(np.argmax(hits))
    return preds


def _read_rows(path: Path, fmt: str) -> list[dict]:
    if fmt in ("csv", "tsv"):
        delim = "," if fmt == "csv" else "\t"
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh, delimiter=delim))
    if fmt == "jsonl":
        rows = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise FormatError(f"{path}: line {lineno}: invalid JSON") from exc
        return rows
    raise ConfigError(f"unknown format {fmt!r} (expected csv, tsv or jsonl)")


def load_dataset(path: str | Path, fmt: str, text_field: str = "text",
                 label_field: str = "label", min_freq: int = 1,
                 max_vocab: int = 1_000_000) -> LabeledDataset:
    """Ingest a raw labeled text file; class names are sorted lexicographically."""
    path = Path(path)
    rows = _read_rows(path, fmt)
    if not rows:
        raise DataError(f"{path}: no examples")
    texts, labels = [], []
    for i, row in enumerate(rows):
        if text_field not in row or row[text_field] is None:
            raise FormatError(f"{path}: row {i}: missing field {text_field!r}")
        if label_field not in row or row[label_field] is None:
            raise FormatError(f"{path}: row {i}: missing field {label_field!r}")
        texts.append(str(row[text_field]))
        labels.append(str(row[label_field]))
    class_names = tuple(sorted(set(labels)))
    if len(class_names) < 2:
        raise DataError(f"{path}: need at least 2 distinct labels")
    label_index = {name: i for i, name in enumerate(class_names)}
    token_docs = [tokenize(t) for t in texts]
    vocab = build_vocab(token_docs, min_freq=min_freq, max_size=max_vocab)
    examples = tuple(
        Example(tuple(vocab.encode(doc)), label_index[lab])
        for doc, lab in zip(token_docs, labels)
    )
    return LabeledDataset(examples, len(class_names), class_names, vocab)


def save_dataset(dataset: LabeledDataset, path: str | Path) -> None:
    """Write examples as JSONL plus a ``.meta.json`` sidecar (vocab, classes)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for ex in dataset.examples:
            fh.write(json.dumps({
                "tokens": list(ex.tokens),
                "gold_label": ex.gold_label,
                "noisy_label": ex.noisy_label,
            }) + "\n")
    meta = {
        "num_classes": dataset.num_classes,
        "class_names": list(dataset.class_names),
        "vocab": list(dataset.vocab.id_to_token[3:]),
    }
    with open(path.with_suffix(path.suffix + ".meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh)


def load_encoded(path: str | Path) -> LabeledDataset:
    """Read back a dataset written by :func:`save_dataset`."""
    path = Path(path)
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    if not meta_path.exists():
        raise FormatError(f"{meta_path}: missing dataset metadata")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    vocab = _vocab_from_tokens(meta["vocab"])
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            row = json.loads(line)
            try:
                examples.append(Example(
                    tuple(row["tokens"]), row["gold_label"], row.get("noisy_label")))
            except KeyError as exc:
                raise FormatError(f"{path}: line {lineno}: missing {exc}") from exc
    if not examples:
        raise DataError(f"{path}: no examples")
    return LabeledDataset(tuple(examples), meta["num_classes"],
                          tuple(meta["class_names"]), vocab)
