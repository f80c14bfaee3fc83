"""Voxel-wise linear-softmax segmentation trained with Adam.

Whole volumes are batch elements. Batch gradients are averaged over volumes
and reduced in volume-index order, so results do not depend on the number of
worker threads.
"""
from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import NonFiniteLoss, ShapeMismatch, TooFewVolumes
from .labelspace import LabelSetMap, ProbMap
from .losses import LossSpec, compute_loss
from .phantom import Phantom

THREADS_ENV = "LABELSET_THREADS"


@dataclass
class Model:
    weights: np.ndarray  # (K, F)
    bias: np.ndarray     # (K,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeMismatch(
                f"weights {self.weights.shape} and bias {self.bias.shape} disagree")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("model parameters must be finite")

    @property
    def num_labels(self) -> int:
        return self.weights.shape[0]

    @property
    def num_features(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def initial(cls, num_labels: int, num_features: int, seed: int = 0,
                scale: float = 0.01) -> "Model":
        rng = np.random.default_rng(seed)
        return cls(scale * rng.standard_normal((num_labels, num_features)),
                   np.zeros(num_labels))

    def copy(self) -> "Model":
        return Model(self.weights.copy(), self.bias.copy())

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Model":
        return cls(np.array(d["weights"], dtype=np.float64),
                   np.array(d["bias"], dtype=np.float64))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 3
    max_epochs: int = 500
    early_stop_patience: Optional[int] = 50
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    split_fraction: float = 0.9
    seed: int = 0
    init_scale: float = 0.01
    threads: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.split_fraction < 1:
            raise ValueError(f"split_fraction must be in (0, 1), got {self.split_fraction}")
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be >= 1 and max_epochs >= 0")


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)  # (epoch, split, loss)
    train_ids: list = field(default_factory=list)
    val_ids: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    initial_val_loss: float = float("nan")
    steps: int = 0

    def losses(self, split: str) -> list[float]:
        return [loss for _, s, loss in self.rows if s == split]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("epoch", "split", "loss"))
            for epoch, split, loss in self.rows:
                w.writerow((epoch, split, f"{loss:.9f}"))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _features(x) -> np.ndarray:
    return np.asarray(x.features if isinstance(x, Phantom) else x, dtype=np.float64)


def forward(model: Model, phantom) -> ProbMap:
    """Per-voxel softmax of ``weights @ features + bias``."""
    x = _features(phantom)
    if x.ndim != 2 or x.shape[1] != model.num_features:
        raise ShapeMismatch(
            f"features of shape {x.shape} do not fit a model with "
            f"{model.num_features} inputs")
    dims = phantom.dims if isinstance(phantom, Phantom) else (x.shape[0], 1, 1)
    return ProbMap(softmax(x @ model.weights.T + model.bias), dims)


def objective(model: Model, features: np.ndarray, g: LabelSetMap,
              spec: LossSpec) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss of one volume and its gradient w.r.t. weights and bias."""
    x = np.asarray(features, dtype=np.float64)
    p = softmax(x @ model.weights.T + model.bias)
    res = compute_loss(spec, p, g)
    gp = res.gradient
    # softmax Jacobian: dp_c/dz_k = p_c (delta_ck - p_k)
    gz = p * (gp - (gp * p).sum(axis=1, keepdims=True))
    return res.value, gz.T @ x, gz.sum(axis=0)


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: list[np.ndarray] = []
        self.v: list[np.ndarray] = []

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _volume_parts(vol) -> tuple[np.ndarray, LabelSetMap, str]:
    if isinstance(vol, Phantom):
        return vol.features, vol.partial, vol.case_id
    features, g = vol[:2]
    return features, g, vol[2] if len(vol) > 2 else ""


def split_volumes(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle, then the first ``floor(fraction * n)`` (at least 1) train."""
    if n < 2:
        raise TooFewVolumes(f"need at least 2 volumes to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = min(n - 1, max(1, int(np.floor(fraction * n))))
    return np.sort(order[:n_train]), np.sort(order[n_train:])


def resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, int(threads))


def train(volumes: Sequence, loss: LossSpec, cfg: TrainConfig = TrainConfig(),
          model: Optional[Model] = None) -> tuple[Model, TrainLog]:
    """Fit a linear-softmax model with Adam and keep the best validation checkpoint.

    ``volumes`` are :class:`Phantom` objects (trained against their partial
    annotation) or ``(features, annotation[, case_id])`` tuples. Training
    halts after ``early_stop_patience`` epochs without validation improvement
    (never, if None).
    """
    parts = [_volume_parts(v) for v in volumes]
    train_idx, val_idx = split_volumes(len(parts), cfg.split_fraction, cfg.seed)
    num_labels = parts[0][1].num_labels
    num_features = np.asarray(parts[0][0]).shape[1]
    for x, g, _ in parts:
        if np.asarray(x).shape != (g.n, num_features) or g.num_labels != num_labels:
            raise ShapeMismatch("all volumes need matching feature and label counts")

    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = Model.initial(num_labels, num_features,
                              int(rng.integers(2**31)), cfg.init_scale)
    else:
        model = model.copy()
        rng.integers(2**31)
    opt = Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    threads = resolve_threads(cfg.threads)
    pool = ThreadPoolExecutor(threads) if threads > 1 else None

    def run(idx, fn):
        if pool is None:
            return [fn(i) for i in idx]
        return list(pool.map(fn, idx))

    def val_loss(m: Model) -> float:
        vals = run(val_idx, lambda i: compute_loss(
            loss, softmax(parts[i][0] @ m.weights.T + m.bias), parts[i][1]).value)
        return float(np.mean(vals))

    log = TrainLog(train_ids=[parts[i][2] for i in train_idx],
                   val_ids=[parts[i][2] for i in val_idx])
    init_train = float(np.mean(run(train_idx, lambda i: objective(
        model, parts[i][0], parts[i][1], loss)[0])))
    best = val_loss(model)
    log.rows += [(0, "train", init_train), (0, "val", best)]
    log.initial_val_loss = best
    log.best_val_loss = best
    best_model = model.copy()
    since_best = 0

    try:
        for epoch in range(1, cfg.max_epochs + 1):
            order = train_idx[rng.permutation(len(train_idx))]
            epoch_losses = []
            for start in range(0, len(order), cfg.batch_size):
                # reduce in volume-index order whatever the shuffle
                batch = np.sort(order[start:start + cfg.batch_size])
                results = run(batch, lambda i: objective(model, parts[i][0], parts[i][1], loss))
                log.steps += 1
                values = [r[0] for r in results]
                if not np.all(np.isfinite(values)):
                    bad = next(v for v in values if not np.isfinite(v))
                    raise NonFiniteLoss(log.steps, float(bad))
                gw = sum(r[1] for r in results) / len(results)
                gb = sum(r[2] for r in results) / len(results)
                opt.step([model.weights, model.bias], [gw, gb])
                epoch_losses.extend(values)
            current = val_loss(model)
            log.rows += [(epoch, "train", float(np.mean(epoch_losses))),
                         (epoch, "val", current)]
            if current < log.best_val_loss:
                log.best_val_loss = current
                log.best_epoch = epoch
                best_model = model.copy()
                since_best = 0
            else:
                since_best += 1
                if cfg.early_stop_patience is not None and since_best >= cfg.early_stop_patience:
                    break
    finally:
        if pool is not None:
            pool.shutdown()
    return best_model, log


