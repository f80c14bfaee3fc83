"""Central finite-difference checks for analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import OutOfDomain, StepTooSmall
from .labelspace import LabelSetMap, ProbMap
from .losses import LossResult, LossSpec, compute_loss

MIN_STEP = 1e-8
DOMAIN_MARGIN = 1e-3
REL_FLOOR = 1e-8


@dataclass(frozen=True)
class GradReport:
    max_abs_error: float
    max_rel_error: float
    worst_index: tuple
    num_checked: int


def check_gradient(func: Callable[[np.ndarray], float], x: np.ndarray,
                   analytic: np.ndarray, h: float = 1e-4,
                   sample: int | None = None, seed: int = 0) -> GradReport:
    """Compare ``analytic`` with central differences of ``func`` around ``x``.

    ``sample`` seeded-random coordinates are checked (all of them if None).
    Relative error is ``|num - ana| / max(|ana|, 1e-8)``.
    """
    if h < MIN_STEP:
        raise StepTooSmall(f"step {h} is below {MIN_STEP}")
    x = np.array(x, dtype=np.float64)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != x.shape:
        raise ValueError(f"gradient shape {analytic.shape} != point shape {x.shape}")
    size = x.size
    if sample is None or sample >= size:
        coords = np.arange(size)
    else:
        if sample < 1:
            raise ValueError("sample must be at least 1")
        coords = np.sort(np.random.default_rng(seed).choice(size, sample, replace=False))

    flat = x.reshape(-1)
    ana = analytic.reshape(-1)
    max_abs = max_rel = 0.0
    worst = int(coords[0])
    for j in coords:
        orig = flat[j]
        flat[j] = orig + h
        f_plus = func(x)
        flat[j] = orig - h
        f_minus = func(x)
        flat[j] = orig
        num = (f_plus - f_minus) / (2.0 * h)
        err = abs(num - ana[j])
        rel = err / max(abs(ana[j]), REL_FLOOR)
        max_abs = max(max_abs, err)
        if rel > max_rel:
            max_rel = rel
            worst = int(j)
    return GradReport(max_abs, max_rel, tuple(int(i) for i in np.unravel_index(worst, x.shape)),
                      len(coords))


def central_diff(loss, p, h: float = 1e-4, sample: int | None = None,
                 seed: int = 0, g: LabelSetMap | None = None) -> GradReport:
    """Finite-difference check of a loss gradient at an interior probability map.

    ``loss`` is either a :class:`LossSpec` (bound to annotation ``g``) or a
    callable mapping an ``(N, K)`` array to a :class:`LossResult`.
    Coordinates are perturbed without renormalization.
    """
    if h < MIN_STEP:
        raise StepTooSmall(f"step {h} is below {MIN_STEP}")
    v = np.array(p.values if isinstance(p, ProbMap) else p, dtype=np.float64)
    if v.min() < DOMAIN_MARGIN or v.max() > 1.0 - DOMAIN_MARGIN:
        raise OutOfDomain(
            f"entries must lie in [{DOMAIN_MARGIN}, {1 - DOMAIN_MARGIN}] for a "
            "finite-difference check")
    if isinstance(loss, LossSpec):
        if g is None:
            raise ValueError("a LossSpec needs the annotation g")
        spec = loss

        def fn(a: np.ndarray) -> LossResult:
            return compute_loss(spec, a, g)
    else:
        fn = loss
    analytic = fn(v).gradient
    return check_gradient(lambda a: fn(a).value, v, analytic, h, sample, seed)
