"""Dice score and 95th-percentile Hausdorff distance on hard segmentations."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import DimsMismatch, IndexOutOfRange
from .labelspace import Dims, ProbMap, check_dims, num_voxels, to_grid


@dataclass(frozen=True, eq=False)
class HardSeg:
    dims: Dims
    labels: np.ndarray
    num_labels: int

    def __post_init__(self):
        dims = check_dims(self.dims)
        object.__setattr__(self, "dims", dims)
        labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if labels.size != num_voxels(dims):
            raise DimsMismatch(f"{labels.size} labels for dims {dims}")
        if labels.min() < 0 or labels.max() >= self.num_labels:
            raise IndexOutOfRange(f"labels must lie in [0, {self.num_labels})")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_probmap(cls, p: ProbMap) -> "HardSeg":
        """Argmax per voxel; ties go to the lowest class index."""
        return cls(p.dims, np.argmax(np.asarray(p.values), axis=1), p.num_labels)


@dataclass(frozen=True)
class CaseMetrics:
    dsc: tuple[float, ...]
    hd95: tuple[Optional[float], ...]


def _pair(a: HardSeg, b: HardSeg) -> None:
    if a.dims != b.dims:
        raise DimsMismatch(f"segmentations have dims {a.dims} and {b.dims}")


def dice_score(a: HardSeg, b: HardSeg, c: int) -> float:
    """``2|A & B| / (|A| + |B|)`` for class c; 1.0 when both masks are empty."""
    _pair(a, b)
    ma = a.labels == c
    mb = b.labels == c
    total = int(ma.sum()) + int(mb.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((ma & mb).sum()) / total


def boundary_coords(mask: np.ndarray) -> np.ndarray:
    """Integer coordinates of mask voxels with a face-neighbour outside the mask.

    Voxels on the volume border count as boundary.
    """
    padded = np.pad(mask, 1, constant_values=False)
    interior = mask.copy()
    for axis in range(3):
        for shift in (-1, 1):
            interior &= np.roll(padded, shift, axis=axis)[1:-1, 1:-1, 1:-1]
    return np.argwhere(mask & ~interior)


def nearest_rank(values: np.ndarray, q: float) -> float:
    """Nearest-rank percentile: the ``ceil(q/100 * n)``-th smallest value."""
    ordered = np.sort(values)
    rank = max(1, math.ceil(q / 100.0 * ordered.size))
    return float(ordered[rank - 1])


def directed_distances(src: np.ndarray, dst: np.ndarray,
                       spacing: Sequence[float]) -> np.ndarray:
    s = np.asarray(spacing, dtype=np.float64)
    dist, _ = cKDTree(dst * s).query(src * s)
    return dist


def hd95(a: HardSeg, b: HardSeg, c: int,
         spacing: Sequence[float] = (1.0, 1.0, 1.0)) -> Optional[float]:
    """95th-percentile symmetric boundary distance for class c, or None.

    The percentile is taken on the concatenation of both directed
    nearest-boundary distance sets. None when either class mask is empty.
    """
    _pair(a, b)
    if len(spacing) != 3 or min(spacing) <= 0:
        raise ValueError(f"spacing must be three positive values, got {spacing}")
    ma = to_grid(a.labels == c, a.dims)
    mb = to_grid(b.labels == c, b.dims)
    if not ma.any() or not mb.any():
        return None
    ba = boundary_coords(ma)
    bb = boundary_coords(mb)
    d = np.concatenate([directed_distances(ba, bb, spacing),
                        directed_distances(bb, ba, spacing)])
    return nearest_rank(d, 95.0)


def case_metrics(pred: HardSeg, truth: HardSeg,
                 spacing: Sequence[float] = (1.0, 1.0, 1.0)) -> CaseMetrics:
    k = truth.num_labels
    return CaseMetrics(tuple(dice_score(pred, truth, c) for c in range(k)),
                       tuple(hd95(pred, truth, c, spacing) for c in range(k)))
