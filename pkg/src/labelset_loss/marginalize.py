"""Marginalization over label-sets and the maximum-entropy label-set embedding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimsMismatch
from .labelspace import LabelSetMap, ProbMap


@dataclass(frozen=True)
class EquivalenceSample:
    base: ProbMap
    variant: ProbMap
    annotation: LabelSetMap


def _values(p, g: LabelSetMap) -> np.ndarray:
    if isinstance(p, ProbMap):
        if p.dims != g.dims:
            raise DimsMismatch(f"prob map dims {p.dims} != annotation dims {g.dims}")
        v = p.values
    else:
        v = p
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (g.n, g.num_labels):
        raise DimsMismatch(
            f"expected array of shape {(g.n, g.num_labels)}, got {v.shape}")
    return v


def label_set_mass(v: np.ndarray, g: LabelSetMap) -> np.ndarray:
    """Per-voxel total probability inside the annotated label-set."""
    # masked sum in class-index order; fixed order keeps results reproducible
    return np.where(g.membership, v, 0.0).sum(axis=1)


def phi_array(v: np.ndarray, g: LabelSetMap) -> np.ndarray:
    """Marginalize a raw ``(N, K)`` array; the map is linear and self-adjoint."""
    v = _values(v, g)
    avg = label_set_mass(v, g) / g.sizes
    return np.where(g.membership, avg[:, None], v)


def phi(p: ProbMap, g: LabelSetMap) -> ProbMap:
    """Replace each voxel's probabilities inside ``g_i`` by their mean.

    Classes outside the voxel's label-set are copied unchanged.

    >>> from labelset_loss.labelspace import LabelSetMap
    >>> g = LabelSetMap([0b011], (1, 1, 1), 3)
    >>> phi(ProbMap([[0.8, 0.0, 0.2]], (1, 1, 1)), g).values.round(12).tolist()
    [[0.4, 0.4, 0.2]]
    """
    return ProbMap(phi_array(_values(p, g), g), g.dims)


def phi_vjp(grad: np.ndarray, g: LabelSetMap) -> np.ndarray:
    """Pull a gradient back through the marginalization.

    The Jacobian of the marginalization is symmetric, so every c' in g_i
    receives ``1/|g_i|`` of the gradient flowing into the whole label-set.
    """
    grad = _values(grad, g)
    share = label_set_mass(grad, g) / g.sizes
    return np.where(g.membership, share[:, None], grad)


def psi0(g: LabelSetMap) -> ProbMap:
    """Uniform soft segmentation over each voxel's label-set."""
    return ProbMap(g.membership / g.sizes[:, None].astype(np.float64), g.dims)


def sample_equivalent(p: ProbMap, g: LabelSetMap, seed: int) -> EquivalenceSample:
    """Draw a map with the same marginalization as ``p`` under ``g``.

    Within each voxel the mass on ``g_i`` is redistributed with random convex
    weights (normalized exponentials of seeded uniforms); mass outside ``g_i``
    is copied.
    """
    v = _values(p, g)
    rng = np.random.default_rng(seed)
    u = rng.random(v.shape)
    w = np.where(g.membership, -np.log1p(-u), 0.0)
    w /= w.sum(axis=1, keepdims=True)
    mass = label_set_mass(v, g)
    variant = np.where(g.membership, w * mass[:, None], v)
    singles = g.sizes == 1
    variant[singles] = v[singles]
    return EquivalenceSample(ProbMap(v, g.dims), ProbMap(variant, g.dims), g)
