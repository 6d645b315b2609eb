"""Desk-scale classifiers with hand-derived gradients.

Two architectures: a bag-of-words softmax-linear model and a mean-embedding
MLP with one ReLU hidden layer. Training-time noise adapters transform the
clean prediction into noisy-label space; inference always uses the clean
prediction. No autodiff framework is used; every gradient here is checked
against central finite differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import Example
from .errors import ConfigError

LOG_CLAMP = 1e-12  # probabilities are clamped here before log

BOW_LINEAR = "bow_linear"
EMBED_MLP = "embed_mlp"


@dataclass(frozen=True)
class ClassifierConfig:
    arch: str
    k: int
    vocab_size: int
    embed_dim: int = 16
    hidden_dim: int = 32
    init_seed: int = 0

    def __post_init__(self):
        if self.arch not in (BOW_LINEAR, EMBED_MLP):
            raise ConfigError(f"unknown architecture {self.arch!r}")
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if self.arch == EMBED_MLP and (self.embed_dim < 1 or self.hidden_dim < 1):
            raise ConfigError("embed_dim and hidden_dim must be >= 1")


@dataclass
class ClassifierModel:
    """Named parameter arrays plus the config that shaped them."""

    config: ClassifierConfig
    params: dict[str, np.ndarray]

    def copy(self) -> "ClassifierModel":
        return ClassifierModel(self.config, {k: v.copy() for k, v in self.params.items()})


def init_model(config: ClassifierConfig) -> ClassifierModel:
    """Weights ~ N(0, 1/fan_in), biases zero; deterministic given init_seed."""
    rng = np.random.default_rng(config.init_seed)
    k, v = config.k, config.vocab_size
    if config.arch == BOW_LINEAR:
        params = {
            "W": rng.normal(0.0, 1.0 / np.sqrt(v), size=(k, v)),
            "b": np.zeros(k),
        }
    else:
        d, h = config.embed_dim, config.hidden_dim
        params = {
            "E": rng.normal(0.0, 1.0 / np.sqrt(d), size=(v, d)),
            "V": rng.normal(0.0, 1.0 / np.sqrt(d), size=(h, d)),
            "c": np.zeros(h),
            "U": rng.normal(0.0, 1.0 / np.sqrt(h), size=(k, h)),
            "b": np.zeros(k),
        }
    return ClassifierModel(config, params)


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def _logits(model: ClassifierModel, example: Example) -> tuple[np.ndarray, dict]:
    """Clean logits plus the cached intermediates needed by backward."""
    p = model.params
    toks = np.asarray(example.tokens, dtype=np.int64)
    if model.config.arch == BOW_LINEAR:
        if toks.size:
            z = p["W"][:, toks].sum(axis=1) + p["b"]
        else:
            z = p["b"].copy()
        return z, {"toks": toks}
    if toks.size:
        m = p["E"][toks].mean(axis=0)
    else:
        m = np.zeros(model.config.embed_dim)
    pre = p["V"] @ m + p["c"]
    hid = np.maximum(pre, 0.0)
    z = p["U"] @ hid + p["b"]
    return z, {"toks": toks, "m": m, "pre": pre, "hid": hid}


def forward(model: ClassifierModel, batch: Sequence[Example]) -> np.ndarray:
    """Clean class probabilities, one row per example."""
    return np.stack([softmax(_logits(model, ex)[0]) for ex in batch])


def predict(model: ClassifierModel, example: Example) -> int:
    """Argmax of the clean prediction; adapters are bypassed at inference."""
    z, _ = _logits(model, example)
    return int(np.argmax(softmax(z)))


def predict_batch(model: ClassifierModel, batch: Sequence[Example]) -> np.ndarray:
    return np.array([predict(model, ex) for ex in batch], dtype=np.int64)


# --------------------------------------------------------------------------
# noise adapters

FIXED = "fixed"
LEARNABLE = "learnable"


@dataclass
class NoiseAdapter:
    """Training-time channel from clean predictions to noisy-label space.

    fixed: multiply by a frozen row-stochastic transition matrix.
    learnable: unconstrained matrix applied to the clean log-probabilities,
    re-normalized by softmax, trained jointly with an l2 penalty. Identity
    initialization makes step 0 coincide with no handling.
    """

    mode: str
    matrix: np.ndarray
    l2_coeff: float = 0.0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.mode not in (FIXED, LEARNABLE):
            raise ConfigError(f"unknown adapter mode {self.mode!r}")
        if self.mode == FIXED:
            if np.any(np.abs(self.matrix.sum(axis=1) - 1.0) > 1e-9):
                raise ConfigError("fixed adapter matrix must be row-stochastic")
        if self.l2_coeff < 0:
            raise ConfigError("l2_coeff must be >= 0")

    @classmethod
    def fixed(cls, transition_entries: np.ndarray) -> "NoiseAdapter":
        return cls(FIXED, np.asarray(transition_entries))

    @classmethod
    def learnable(cls, k: int, l2_coeff: float) -> "NoiseAdapter":
        return cls(LEARNABLE, np.eye(k), l2_coeff)

    def l2_term(self) -> float:
        if self.mode == LEARNABLE:
            return self.l2_coeff * float(np.sum(self.matrix ** 2))
        return 0.0


def adapter_forward(p: np.ndarray, adapter: Optional[NoiseAdapter]) -> np.ndarray:
    """Map a clean probability vector into the space the loss is computed in."""
    if adapter is None:
        return p
    if adapter.matrix.shape[0] != p.shape[0]:
        raise ConfigError("adapter dimension does not match prediction")
    if adapter.mode == FIXED:
        return adapter.matrix.T @ p
    return softmax(adapter.matrix.T @ np.log(np.maximum(p, LOG_CLAMP)))


# --------------------------------------------------------------------------
# losses

CROSS_ENTROPY = "cross_entropy"
LABEL_SMOOTHING = "label_smoothing"


@dataclass(frozen=True)
class LossConfig:
    kind: str = CROSS_ENTROPY
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in (CROSS_ENTROPY, LABEL_SMOOTHING):
            raise ConfigError(f"unknown loss kind {self.kind!r}")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError("alpha must lie in [0, 1)")

    def target(self, label: int, k: int) -> np.ndarray:
        t = np.zeros(k)
        t[label] = 1.0
        if self.kind == LABEL_SMOOTHING:
            t = (1.0 - self.alpha) * t + self.alpha / k
        return t


def loss(v: np.ndarray, label: int, cfg: LossConfig, adapter_l2: float = 0.0) -> float:
    """Negative log-likelihood of the target under v, plus the adapter penalty."""
    logv = np.log(np.maximum(v, LOG_CLAMP))
    if cfg.kind == CROSS_ENTROPY:
        return float(-logv[label] + adapter_l2)
    t = cfg.target(label, v.shape[0])
    return float(-(t * logv).sum() + adapter_l2)


# --------------------------------------------------------------------------
# backward

@dataclass
class Gradients:
    params: dict[str, np.ndarray]
    adapter_matrix: Optional[np.ndarray]
    mean_loss: float


def _dloss_dv(v: np.ndarray, target: np.ndarray) -> np.ndarray:
    safe = np.maximum(v, LOG_CLAMP)
    g = -target / safe
    g[v < LOG_CLAMP] = 0.0  # clamped region is flat
    return g


def _softmax_backward(p: np.ndarray, dp: np.ndarray) -> np.ndarray:
    return p * (dp - np.dot(p, dp))


def backward(model: ClassifierModel, adapter: Optional[NoiseAdapter],
             batch: Sequence[Example], labels: Sequence[int],
             cfg: LossConfig) -> Gradients:
    """Exact gradients of the mean batch loss for every trainable parameter.

    A fixed adapter's matrix receives no gradient; a learnable adapter's
    matrix does, including the l2 penalty term.
    """
    k = model.config.k
    grads = {name: np.zeros_like(arr) for name, arr in model.params.items()}
    grad_w = np.zeros_like(adapter.matrix) if adapter is not None and \
        adapter.mode == LEARNABLE else None
    l2 = adapter.l2_term() if adapter is not None else 0.0
    total = 0.0
    n = len(batch)
    for ex, label in zip(batch, labels):
        z, cache = _logits(model, ex)
        p = softmax(z)
        target = cfg.target(label, k)
        if adapter is None:
            v = p
            total += loss(v, label, cfg, l2)
            dp = _dloss_dv(v, target)
        elif adapter.mode == FIXED:
            v = adapter.matrix.T @ p
            total += loss(v, label, cfg, l2)
            dp = adapter.matrix @ _dloss_dv(v, target)
        else:
            logp = np.log(np.maximum(p, LOG_CLAMP))
            s = adapter.matrix.T @ logp
            v = softmax(s)
            total += loss(v, label, cfg, l2)
            ds = v - target
            grad_w += np.outer(logp, ds) / n
            dlogp = adapter.matrix @ ds
            dp = dlogp / np.maximum(p, LOG_CLAMP)
            dp[p < LOG_CLAMP] = 0.0
        dz = _softmax_backward(p, dp) / n
        _accumulate_model_grads(model, cache, dz, grads)
    if grad_w is not None:
        grad_w += 2.0 * adapter.l2_coeff * adapter.matrix
    return Gradients(grads, grad_w, total / n)


def _accumulate_model_grads(model: ClassifierModel, cache: dict,
                            dz: np.ndarray, grads: dict) -> None:
    p = model.params
    toks = cache["toks"]
    if model.config.arch == BOW_LINEAR:
        if toks.size:
            np.add.at(grads["W"], (slice(None), toks), dz[:, None])
        grads["b"] += dz
        return
    grads["U"] += np.outer(dz, cache["hid"])
    grads["b"] += dz
    dhid = p["U"].T @ dz
    dpre = dhid * (cache["pre"] > 0)
    grads["V"] += np.outer(dpre, cache["m"])
    grads["c"] += dpre
    if toks.size:
        dm = p["V"].T @ dpre
        np.add.at(grads["E"], toks, dm / toks.size)


# --------------------------------------------------------------------------
# checkpoints

def save_model(model: ClassifierModel, path: str | Path) -> None:
    """JSON checkpoint; float64 repr round-trips bit-exactly."""
    payload = {
        "config": model.config.__dict__,
        "params": {k: v.tolist() for k, v in model.params.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_model(path: str | Path) -> ClassifierModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    config = ClassifierConfig(**payload["config"])
    params = {k: np.array(v, dtype=np.float64) for k, v in payload["params"].items()}
    return ClassifierModel(config, params)
