"""Label-set losses with analytic gradients.

Every loss takes a probability map (``ProbMap`` or a raw ``(N, K)`` array)
and returns a :class:`LossResult` whose gradient holds the unconstrained
partials with respect to each ``p[i, c]``. Projection onto the simplex is the
caller's job.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np

from .exceptions import DimsMismatch, InvalidLossSpec, NotLeafPartition
from .labelspace import LabelSetMap, ProbMap
from .marginalize import label_set_mass, phi_array, phi_vjp, psi0


class LossKind(str, enum.Enum):
    LEAF_DICE = "LeafDice"
    CONVERTED_DICE = "ConvertedDice"
    MARGINAL_CROSS_ENTROPY = "MarginalCrossEntropy"
    SOFT_TARGET_DICE = "SoftTargetDice"
    MEAN_CLASS_DICE = "MeanClassDice"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class LossSpec:
    kind: LossKind
    alpha: int = 2
    epsilon: float = 1e-5
    log_floor: float = 1e-12

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", LossKind(self.kind))
        except ValueError:
            raise InvalidLossSpec(f"unknown loss kind {self.kind!r}") from None
        if self.alpha not in (1, 2):
            raise InvalidLossSpec(f"alpha must be 1 or 2, got {self.alpha!r}")
        if not self.epsilon > 0:
            raise InvalidLossSpec(f"epsilon must be positive, got {self.epsilon!r}")
        if not self.log_floor > 0:
            raise InvalidLossSpec(f"log_floor must be positive, got {self.log_floor!r}")

    @property
    def is_label_set_loss(self) -> bool:
        """Whether the loss depends on p only through its marginalization."""
        return self.kind in (LossKind.LEAF_DICE, LossKind.CONVERTED_DICE,
                             LossKind.MARGINAL_CROSS_ENTROPY)


@dataclass
class LossResult:
    value: float
    gradient: np.ndarray
    diagnostics: dict = field(default_factory=dict)


FullySupervisedLoss = Callable[[np.ndarray, np.ndarray], LossResult]


def _as_array(p, shape=None) -> np.ndarray:
    v = p.values if isinstance(p, ProbMap) else p
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2:
        raise DimsMismatch(f"expected an (N, K) array, got shape {v.shape}")
    if shape is not None and v.shape != shape:
        raise DimsMismatch(f"expected shape {shape}, got {v.shape}")
    return v


def _check_dims(p, g: LabelSetMap) -> np.ndarray:
    if isinstance(p, ProbMap) and p.dims != g.dims:
        raise DimsMismatch(f"prob map dims {p.dims} != annotation dims {g.dims}")
    return _as_array(p, (g.n, g.num_labels))


def _dice(p: np.ndarray, target: np.ndarray, target_mass: np.ndarray,
          alpha: int, epsilon: float) -> LossResult:
    """``1 - mean_c 2<t_c, p_c> / (target_mass_c + sum_i p_ic^alpha + eps)``."""
    k = p.shape[1]
    inter = (target * p).sum(axis=0)
    p_pow = p if alpha == 1 else p * p
    denom = target_mass + p_pow.sum(axis=0) + epsilon
    terms = 2.0 * inter / denom
    value = 1.0 - terms.sum() / k
    d_pow = np.ones_like(p) if alpha == 1 else 2.0 * p
    grad = -(2.0 * target / denom - terms / denom * d_pow) / k
    return LossResult(float(value), grad, {"class_terms": terms})


def mean_class_dice(p, q, spec: LossSpec) -> LossResult:
    """Mean class soft Dice of ``p`` against a soft ground truth ``q``."""
    q = _as_array(q)
    p = _as_array(p, q.shape)
    q_mass = q.sum(axis=0) if spec.alpha == 1 else (q * q).sum(axis=0)
    return _dice(p, q, q_mass, spec.alpha, spec.epsilon)


def leaf_dice(p, g: LabelSetMap, spec: LossSpec) -> LossResult:
    """Leaf-Dice: singleton voxels feed the overlap term, every voxel feeds
    the predicted-volume term.

    Requires an annotation whose distinct label-sets are pairwise disjoint.
    """
    if not g.is_leaf_partition:
        raise NotLeafPartition(
            "leaf-Dice needs pairwise disjoint label-sets in the annotation")
    v = _check_dims(p, g)
    target = g.singleton_indicator
    # 1(.)^alpha == 1(.)
    return _dice(v, target, target.sum(axis=0), spec.alpha, spec.epsilon)


def convert_fully_supervised(fully: FullySupervisedLoss, p,
                             g: LabelSetMap) -> LossResult:
    """Evaluate ``fully(phi(p; g), psi0(g))`` and chain its gradient back to p."""
    v = _check_dims(p, g)
    res = fully(phi_array(v, g), psi0(g).values)
    return LossResult(res.value, phi_vjp(res.gradient, g), res.diagnostics)


def converted_dice(p, g: LabelSetMap, spec: LossSpec) -> LossResult:
    return convert_fully_supervised(partial(mean_class_dice, spec=spec), p, g)


def soft_target_dice(p, g: LabelSetMap, spec: LossSpec) -> LossResult:
    """Dice against the uniform soft target, without marginalizing p.

    Kept as a baseline: it does not depend on p only through its
    marginalization.
    """
    v = _check_dims(p, g)
    return mean_class_dice(v, psi0(g).values, spec)


def cross_entropy(p, q, log_floor: float = 1e-12) -> LossResult:
    """Voxel-averaged soft cross entropy ``-(1/N) sum_ic q_ic log p_ic``."""
    q = _as_array(q)
    p = _as_array(p, q.shape)
    n = p.shape[0]
    clipped = np.maximum(p, log_floor)
    active = q > 0
    value = -np.where(active, q * np.log(clipped), 0.0).sum() / n
    grad = np.where(active & (p > log_floor), -q / clipped, 0.0) / n
    return LossResult(float(value), grad)


def marginal_cross_entropy(p, g: LabelSetMap, spec: LossSpec) -> LossResult:
    """``-(1/N) sum_i log(sum_{c in g_i} p_ic)``, floored at ``log_floor``."""
    v = _check_dims(p, g)
    mass = label_set_mass(v, g)
    floored = mass < spec.log_floor
    value = -np.log(np.maximum(mass, spec.log_floor)).sum() / g.n
    scale = np.where(floored, 0.0, -1.0 / np.where(floored, 1.0, mass)) / g.n
    grad = np.where(g.membership, scale[:, None], 0.0)
    return LossResult(float(value), grad, {"floor_hits": int(floored.sum())})


def compute_loss(spec: LossSpec, p, g: LabelSetMap) -> LossResult:
    """Dispatch on ``spec.kind``; MeanClassDice compares against ``psi0(g)``."""
    kind = spec.kind
    if kind is LossKind.LEAF_DICE:
        return leaf_dice(p, g, spec)
    if kind is LossKind.CONVERTED_DICE:
        return converted_dice(p, g, spec)
    if kind is LossKind.MARGINAL_CROSS_ENTROPY:
        return marginal_cross_entropy(p, g, spec)
    if kind is LossKind.SOFT_TARGET_DICE:
        return soft_target_dice(p, g, spec)
    return mean_class_dice(_check_dims(p, g), psi0(g).values, spec)
