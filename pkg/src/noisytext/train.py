"""Training regimes, optimizers and the masked-token pretraining analog.

Supported regimes: plain training with or without early stopping
(the no-validation control trains to the final epoch), co-teaching with
small-loss cross-selection, fixed and learnable noise-matrix adapters,
and label smoothing. Validation labels are noisy: no clean data beyond
the test split is ever consulted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from .corpus import Example, LabeledDataset
from .errors import ConfigError, DataError
from .model import (
    CROSS_ENTROPY, EMBED_MLP, LABEL_SMOOTHING, ClassifierConfig,
    ClassifierModel, LossConfig, NoiseAdapter, _logits, adapter_forward,
    backward, init_model, predict_batch, softmax,
)
from .model import loss as loss_fn
from .noise import TransitionMatrix

METHOD_NONE = "none"
METHOD_CO_TEACHING = "co_teaching"
METHOD_NOISE_MATRIX = "noise_matrix"
METHOD_NOISE_MATRIX_REG = "noise_matrix_reg"
METHOD_LABEL_SMOOTHING = "label_smoothing"

METHODS = (METHOD_NONE, METHOD_CO_TEACHING, METHOD_NOISE_MATRIX,
           METHOD_NOISE_MATRIX_REG, METHOD_LABEL_SMOOTHING)


@dataclass(frozen=True)
class TrainConfig:
    method: str = METHOD_NONE
    use_validation: bool = True
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-2
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    seed: int = 0
    alpha: float = 0.1            # label smoothing mass
    l2_coeff: float = 1e-3        # learnable adapter penalty
    transition: Optional[TransitionMatrix] = None   # fixed adapter matrix
    forget_rate: float = 0.2      # co-teaching tau
    ramp_epochs: int = 5          # co-teaching t_k
    patience: Optional[int] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.method == METHOD_NOISE_MATRIX and self.transition is None:
            raise ConfigError("noise_matrix method requires a transition matrix")
        if not 0.0 <= self.forget_rate < 1.0:
            raise ConfigError("forget_rate must lie in [0, 1)")
        if self.ramp_epochs < 1:
            raise ConfigError("ramp_epochs must be >= 1")


@dataclass
class TrainResult:
    """Per-epoch trace of one run; epoch 0 is the untrained model."""

    train_loss: list[float]
    val_accuracy: list[float]
    test_accuracy: list[float]
    selected_epoch: int
    final_test_accuracy: float
    seed: int
    clean_selected_frac: list[float] = field(default_factory=list)
    peer_train_loss: list[float] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "TrainResult":
        return cls(**json.loads(text))


def evaluate(model: ClassifierModel, split: LabeledDataset,
             against: str = "gold") -> float:
    """Fraction of argmax predictions matching the chosen label field."""
    if len(split) == 0:
        raise DataError("empty split")
    if against == "gold":
        labels = split.gold_labels()
    elif against == "noisy":
        labels = split.noisy_labels()
    else:
        raise ConfigError(f"unknown label field {against!r}")
    preds = predict_batch(model, split.examples)
    return float(np.mean(preds == labels))


def remember_rate(t: int, forget_rate: float, ramp_epochs: int) -> float:
    """Co-teaching keep fraction R(t) = 1 - tau * min(t / t_k, 1)."""
    if not 0.0 <= forget_rate < 1.0:
        raise ConfigError("forget_rate must lie in [0, 1)")
    if ramp_epochs < 1:
        raise ConfigError("ramp_epochs must be >= 1")
    return 1.0 - forget_rate * min(t / ramp_epochs, 1.0)


class Optimizer:
    """SGD or Adam over a dict of named parameter arrays."""

    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.kind = cfg.optimizer
        self.lr = cfg.learning_rate
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        if self.kind == "sgd":
            for k in params:
                params[k] -= self.lr * grads[k]
            return
        self.t += 1
        b1, b2, eps = self.cfg.beta1, self.cfg.beta2, self.cfg.eps_adam
        for k in params:
            self.m[k] = b1 * self.m[k] + (1 - b1) * grads[k]
            self.v[k] = b2 * self.v[k] + (1 - b2) * grads[k] ** 2
            mhat = self.m[k] / (1 - b1 ** self.t)
            vhat = self.v[k] / (1 - b2 ** self.t)
            params[k] -= self.lr * mhat / (np.sqrt(vhat) + eps)


def _loss_config(cfg: TrainConfig) -> LossConfig:
    if cfg.method == METHOD_LABEL_SMOOTHING:
        return LossConfig(LABEL_SMOOTHING, cfg.alpha)
    return LossConfig(CROSS_ENTROPY)


def _make_adapter(cfg: TrainConfig, k: int) -> Optional[NoiseAdapter]:
    if cfg.method == METHOD_NOISE_MATRIX:
        return NoiseAdapter.fixed(cfg.transition.entries)
    if cfg.method == METHOD_NOISE_MATRIX_REG:
        return NoiseAdapter.learnable(k, cfg.l2_coeff)
    return None


def _per_example_losses(model, adapter, examples, labels, loss_cfg) -> np.ndarray:
    out = np.empty(len(examples))
    l2 = adapter.l2_term() if adapter is not None else 0.0
    for i, (ex, lab) in enumerate(zip(examples, labels)):
        z, _ = _logits(model, ex)
        v = adapter_forward(softmax(z), adapter)
        out[i] = loss_fn(v, lab, loss_cfg, l2)
    return out


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train(train_set: LabeledDataset, val_set: Optional[LabeledDataset],
          test_set: LabeledDataset, model_cfg: ClassifierConfig,
          train_cfg: TrainConfig,
          start_model: Optional[ClassifierModel] = None) -> tuple[ClassifierModel, TrainResult]:
    """Run one training regime end to end; deterministic given the seed.

    ``start_model`` overrides random initialization (used after masked-token
    pretraining). With validation enabled, the checkpoint with the best
    noisy-validation accuracy (earliest on ties) is selected; otherwise the
    final epoch is.
    """
    if not train_set.has_noisy:
        raise DataError("training split must carry noisy labels")
    if train_cfg.use_validation and (val_set is None or not val_set.has_noisy):
        raise DataError("validation split with noisy labels required")
    if train_cfg.method == METHOD_CO_TEACHING:
        return _train_co_teaching(train_set, val_set, test_set, model_cfg,
                                  train_cfg, start_model)
    return _train_single(train_set, val_set, test_set, model_cfg, train_cfg,
                         start_model)


def _select(val_acc: list[float], use_validation: bool) -> int:
    if not use_validation:
        return len(val_acc) - 1
    return int(np.argmax(val_acc))  # earliest epoch on ties


def _train_single(train_set, val_set, test_set, model_cfg, train_cfg, start_model):
    model = start_model.copy() if start_model is not None else init_model(model_cfg)
    loss_cfg = _loss_config(train_cfg)
    adapter = _make_adapter(train_cfg, model_cfg.k)
    opt = Optimizer(model.params, train_cfg)
    adapter_opt = Optimizer({"W": adapter.matrix}, train_cfg) \
        if adapter is not None and adapter.mode == "learnable" else None
    rng = np.random.default_rng(train_cfg.seed)
    labels = train_set.noisy_labels()
    examples = train_set.examples

    def eval_epoch():
        val = evaluate(model, val_set, "noisy") if val_set is not None else math.nan
        return val, evaluate(model, test_set, "gold")

    v0, t0 = eval_epoch()
    trace_loss = [float(np.mean(_per_example_losses(
        model, adapter, examples, labels, loss_cfg)))]
    val_acc, test_acc = [v0], [t0]
    checkpoints = [model.copy()]
    best, since_best = v0, 0
    for _epoch in range(1, train_cfg.epochs + 1):
        loss_sum, count = 0.0, 0
        for idx in _epoch_batches(len(examples), train_cfg.batch_size, rng):
            batch = [examples[i] for i in idx]
            grads = backward(model, adapter, batch, labels[idx], loss_cfg)
            loss_sum += grads.mean_loss * len(idx)
            count += len(idx)
            opt.step(model.params, grads.params)
            if adapter_opt is not None:
                adapter_opt.step({"W": adapter.matrix}, {"W": grads.adapter_matrix})
        v, t = eval_epoch()
        trace_loss.append(loss_sum / count)
        val_acc.append(v)
        test_acc.append(t)
        checkpoints.append(model.copy())
        if train_cfg.use_validation and train_cfg.patience is not None:
            if v > best:
                best, since_best = v, 0
            else:
                since_best += 1
                if since_best >= train_cfg.patience:
                    break
    sel = _select(val_acc, train_cfg.use_validation)
    result = TrainResult(trace_loss, val_acc, test_acc, sel, test_acc[sel],
                         train_cfg.seed)
    return checkpoints[sel], result


def co_teach_step(model_a: ClassifierModel, model_b: ClassifierModel,
                  batch: Sequence[Example], labels: Sequence[int],
                  keep_fraction: float, opt_a: Optimizer, opt_b: Optimizer,
                  loss_cfg: LossConfig) -> tuple[np.ndarray, np.ndarray, float, float]:
    """One cross-update: each model trains on the peer's smallest-loss subset.

    Returns the two selected index arrays (into ``batch``) and the two
    pre-update mean losses over the full batch.
    """
    labels = np.asarray(labels)
    n_keep = max(1, math.ceil(keep_fraction * len(batch)))
    losses_a = _per_example_losses(model_a, None, batch, labels, loss_cfg)
    losses_b = _per_example_losses(model_b, None, batch, labels, loss_cfg)
    if n_keep >= len(batch):
        # no filtering: keep original order so the update matches a plain step
        sel_a = sel_b = np.arange(len(batch))
    else:
        sel_a = np.lexsort((np.arange(len(batch)), losses_a))[:n_keep]
        sel_b = np.lexsort((np.arange(len(batch)), losses_b))[:n_keep]
    grads_a = backward(model_a, None, [batch[i] for i in sel_b],
                       labels[sel_b], loss_cfg)
    grads_b = backward(model_b, None, [batch[i] for i in sel_a],
                       labels[sel_a], loss_cfg)
    opt_a.step(model_a.params, grads_a.params)
    opt_b.step(model_b.params, grads_b.params)
    return sel_a, sel_b, float(losses_a.mean()), float(losses_b.mean())


def _train_co_teaching(train_set, val_set, test_set, model_cfg, train_cfg,
                       start_model):
    from dataclasses import replace
    if start_model is not None:
        model_a = start_model.copy()
        model_b = start_model.copy()
        # break symmetry: peer gets a fresh head over the shared embeddings
        peer = init_model(replace(model_cfg, init_seed=model_cfg.init_seed + 1))
        for name in peer.params:
            if name != "E":
                model_b.params[name] = peer.params[name]
    else:
        model_a = init_model(model_cfg)
        model_b = init_model(replace(model_cfg, init_seed=model_cfg.init_seed + 1))
    loss_cfg = _loss_config(train_cfg)
    opt_a = Optimizer(model_a.params, train_cfg)
    opt_b = Optimizer(model_b.params, train_cfg)
    rng = np.random.default_rng(train_cfg.seed)
    labels = train_set.noisy_labels()
    gold = train_set.gold_labels()
    examples = train_set.examples

    def eval_model(m):
        val = evaluate(m, val_set, "noisy") if val_set is not None else math.nan
        return val, evaluate(m, test_set, "gold")

    v0, t0 = eval_model(model_a)
    trace_loss = [float(np.mean(_per_example_losses(
        model_a, None, examples, labels, loss_cfg)))]
    peer_loss = [float(np.mean(_per_example_losses(
        model_b, None, examples, labels, loss_cfg)))]
    val_acc, test_acc = [v0], [t0]
    clean_frac: list[float] = []
    checkpoints = [model_a.copy()]
    for epoch in range(1, train_cfg.epochs + 1):
        rate = remember_rate(epoch - 1, train_cfg.forget_rate, train_cfg.ramp_epochs)
        loss_sum_a = loss_sum_b = 0.0
        count = 0
        clean_hits = clean_total = 0
        for idx in _epoch_batches(len(examples), train_cfg.batch_size, rng):
            batch = [examples[i] for i in idx]
            sel_a, sel_b, la, lb = co_teach_step(
                model_a, model_b, batch, labels[idx], rate, opt_a, opt_b, loss_cfg)
            loss_sum_a += la * len(idx)
            loss_sum_b += lb * len(idx)
            count += len(idx)
            for sel in (sel_a, sel_b):
                chosen = idx[sel]
                clean_hits += int(np.sum(labels[chosen] == gold[chosen]))
                clean_total += len(chosen)
        v, t = eval_model(model_a)
        trace_loss.append(loss_sum_a / count)
        peer_loss.append(loss_sum_b / count)
        val_acc.append(v)
        test_acc.append(t)
        clean_frac.append(clean_hits / clean_total)
        checkpoints.append(model_a.copy())
    sel = _select(val_acc, train_cfg.use_validation)
    result = TrainResult(trace_loss, val_acc, test_acc, sel, test_acc[sel],
                         train_cfg.seed, clean_selected_frac=clean_frac,
                         peer_train_loss=peer_loss)
    return checkpoints[sel], result


# --------------------------------------------------------------------------
# masked-token pretraining

@dataclass(frozen=True)
class TaptConfig:
    mask_prob: float = 0.15
    pretrain_epochs: int = 5
    learning_rate: float = 1e-2
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.mask_prob < 1.0:
            raise ConfigError("mask_prob must lie in (0, 1)")


def tapt_pretrain(model: ClassifierModel, corpus: LabeledDataset,
                  cfg: TaptConfig,
                  return_mlm_accuracy: bool = False):
    """Masked-token pretraining of the embedding table; labels are ignored.

    Each token is masked independently with ``mask_prob``; masked ids are
    predicted from the mean embedding of the unmasked context through a
    temporary vocab-sized projection. Only the embedding table and the
    projection receive updates, and the projection is discarded.
    """
    if model.config.arch != EMBED_MLP:
        raise ConfigError("masked-token pretraining requires the embed_mlp architecture")
    out = model.copy()
    if cfg.pretrain_epochs == 0:
        return (out, 0.0) if return_mlm_accuracy else out
    rng = np.random.default_rng(cfg.seed)
    vocab_size = model.config.vocab_size
    d = model.config.embed_dim
    emb = out.params["E"]
    proj = rng.normal(0.0, 1.0 / np.sqrt(d), size=(vocab_size, d))
    pbias = np.zeros(vocab_size)
    params = {"E": emb, "P": proj, "pb": pbias}
    opt_cfg = TrainConfig(learning_rate=cfg.learning_rate, seed=cfg.seed)
    opt = Optimizer(params, opt_cfg)
    docs = [np.asarray(ex.tokens, dtype=np.int64) for ex in corpus.examples
            if len(ex.tokens) > 0]
    for _epoch in range(cfg.pretrain_epochs):
        for idx in _epoch_batches(len(docs), cfg.batch_size, rng):
            grads = {k: np.zeros_like(v) for k, v in params.items()}
            n_terms = 0
            batch_updates = []
            for di in idx:
                toks = docs[di]
                masked = rng.random(len(toks)) < cfg.mask_prob
                if not masked.any() or masked.all():
                    continue
                context = toks[~masked]
                m = emb[context].mean(axis=0)
                logits = proj @ m + pbias
                probs = softmax(logits)
                targets = toks[masked]
                dlogits = probs * len(targets)
                np.add.at(dlogits, targets, -1.0)
                batch_updates.append((context, m, dlogits))
                n_terms += len(targets)
            if n_terms == 0:
                continue
            for context, m, dlogits in batch_updates:
                grads["P"] += np.outer(dlogits, m) / n_terms
                grads["pb"] += dlogits / n_terms
                dm = proj.T @ dlogits / n_terms
                np.add.at(grads["E"], context, dm / len(context))
            opt.step(params, grads)
    out.params["E"] = params["E"]
    if return_mlm_accuracy:
        correct = total = 0
        for toks in docs:
            masked = rng.random(len(toks)) < cfg.mask_prob
            if not masked.any() or masked.all():
                continue
            m = emb[toks[~masked]].mean(axis=0)
            pred = int(np.argmax(proj @ m + pbias))
            correct += int(np.sum(toks[masked] == pred))
            total += int(masked.sum())
        return out, (correct / total if total else 0.0)
    return out
