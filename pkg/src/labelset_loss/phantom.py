"""Synthetic concentric-ellipsoid phantoms with simulated partial annotations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import ConfigInvalid, InvalidLabelSet, LPrimeIsFullSpace
from .labelspace import Dims, LabelSet, LabelSetMap, singleton_map

AXIS_SCALES = (1.0, 0.85, 0.7)
FEATURE_NAMES = ("intensity", "x", "y", "z", "radius")


@dataclass(frozen=True)
class PhantomConfig:
    dims: Dims = (16, 16, 16)
    num_labels: int = 3
    noise_sigma: float = 0.0
    class_means: tuple[float, ...] = ()
    shell_radii: tuple[float, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        k = int(self.num_labels)
        if not 2 <= k <= 8:
            raise ConfigInvalid(f"num_labels must be in [2, 8], got {k}")
        means = tuple(float(m) for m in self.class_means) or tuple(
            float(c) for c in range(k))
        radii = tuple(float(r) for r in self.shell_radii) or tuple(
            (c + 1) / k for c in range(k - 1))
        object.__setattr__(self, "class_means", means)
        object.__setattr__(self, "shell_radii", radii)
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ConfigInvalid(f"dims must be three positive ints, got {self.dims}")
        if len(means) != k or len(set(means)) != k:
            raise ConfigInvalid(f"need {k} distinct class means, got {means}")
        if len(radii) != k - 1:
            raise ConfigInvalid(f"need {k - 1} shell radii, got {len(radii)}")
        if any(not 0 < r < 1 for r in radii) or any(
                b <= a for a, b in zip(radii, radii[1:])):
            raise ConfigInvalid(f"shell radii must increase strictly inside (0, 1): {radii}")
        if not self.noise_sigma >= 0:
            raise ConfigInvalid(f"noise_sigma must be >= 0, got {self.noise_sigma}")


@dataclass(frozen=True, eq=False)
class Phantom:
    dims: Dims
    features: np.ndarray
    truth: LabelSetMap
    partial: LabelSetMap
    unannotated_set: int = 0
    case_id: str = ""

    @property
    def num_labels(self) -> int:
        return self.truth.num_labels

    @property
    def true_labels(self) -> np.ndarray:
        return np.argmax(self.truth.membership, axis=1)

    @property
    def fully_annotated(self) -> bool:
        return self.unannotated_set == 0


def normalized_coordinates(dims: Sequence[int]) -> np.ndarray:
    """Flat ``(N, 3)`` voxel coordinates mapped to [-1, 1] along each axis."""
    axes = [np.linspace(-1.0, 1.0, d) if d > 1 else np.zeros(1) for d in dims]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1, order="F") for g in grid], axis=1)


def ellipsoid_radius(coords: np.ndarray) -> np.ndarray:
    return np.sqrt(((coords / np.asarray(AXIS_SCALES)) ** 2).sum(axis=1))


def shell_classes(radius: np.ndarray, radii: Sequence[float]) -> np.ndarray:
    """Class K-1 for the innermost shell down to class 0 outside the last one."""
    k = len(radii) + 1
    return (k - 1 - np.searchsorted(np.asarray(radii), radius, side="right")).astype(np.int64)


def simulate_partial(truth: LabelSetMap, lprime: LabelSet | int) -> LabelSetMap:
    """Merge every voxel whose true class lies in ``lprime`` into ``lprime``.

    An empty ``lprime`` (mask 0) leaves the annotation unchanged.
    """
    mask = lprime.mask if isinstance(lprime, LabelSet) else int(lprime)
    if np.any(truth.sizes != 1):
        raise InvalidLabelSet("simulate_partial expects an all-singleton truth")
    full = (1 << truth.num_labels) - 1
    if mask < 0 or mask & ~full:
        raise InvalidLabelSet(f"lprime {mask:#x} is not a subset of the label space")
    if mask == full:
        raise LPrimeIsFullSpace("the unannotated set must be a strict subset")
    if mask == 0:
        return truth
    m = np.uint64(mask)
    merged = np.where(truth.masks & m, m, truth.masks)
    return LabelSetMap(merged, truth.dims, truth.num_labels)


def generate(cfg: PhantomConfig, lprime: LabelSet | int = 0,
             case_id: str = "") -> Phantom:
    """Build a phantom from ``cfg``; deterministic given ``cfg.seed``."""
    coords = normalized_coordinates(cfg.dims)
    radius = ellipsoid_radius(coords)
    labels = shell_classes(radius, cfg.shell_radii)
    intensity = np.asarray(cfg.class_means)[labels]
    if cfg.noise_sigma > 0:
        rng = np.random.default_rng(cfg.seed)
        intensity = intensity + rng.normal(0.0, cfg.noise_sigma, size=intensity.shape)
    features = np.column_stack([intensity, coords, radius])
    truth = singleton_map(labels, cfg.dims, cfg.num_labels)
    partial = simulate_partial(truth, lprime)
    mask = lprime.mask if isinstance(lprime, LabelSet) else int(lprime)
    return Phantom(cfg.dims, features, truth, partial, mask, case_id)
