"""Leaf-labels, label-sets and the per-voxel maps built from them.

Voxels are stored flat, x fastest: ``i = x + X * (y + Y * z)``. Use
:func:`to_grid` / :func:`from_grid` to move between the flat layout and an
``(X, Y, Z)`` array.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    DimsMismatch,
    EmptyVolume,
    IndexOutOfRange,
    InvalidLabelSet,
    InvalidLabelSpace,
    NegativeProbability,
    NonFiniteValue,
    RowSumViolation,
)

MAX_LABELS = 64
ROW_SUM_TOL = 1e-6

Dims = tuple[int, int, int]


def check_dims(dims) -> Dims:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 0 for d in dims):
        raise DimsMismatch(f"dims must be three non-negative ints, got {dims}")
    if dims[0] * dims[1] * dims[2] == 0:
        raise EmptyVolume(f"volume with dims {dims} has no voxels")
    return dims  # type: ignore[return-value]


def num_voxels(dims: Sequence[int]) -> int:
    return int(np.prod(dims))


def to_grid(flat: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """Reshape a flat per-voxel array (leading axis N) to ``(X, Y, Z, ...)``."""
    flat = np.asarray(flat)
    return flat.reshape(tuple(dims) + flat.shape[1:], order="F")


def from_grid(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid)
    n = int(np.prod(grid.shape[:3]))
    return grid.reshape((n,) + grid.shape[3:], order="F")


def mask_of(indices: Iterable[int]) -> int:
    """Bitmask of a collection of leaf-label indices."""
    m = 0
    for c in indices:
        c = int(c)
        if not 0 <= c < MAX_LABELS:
            raise IndexOutOfRange(f"leaf-label index {c} outside [0, {MAX_LABELS})")
        m |= 1 << c
    return m


def members(mask: int) -> list[int]:
    """Leaf-label indices contained in a bitmask, ascending."""
    mask = int(mask)
    return [c for c in range(MAX_LABELS) if mask >> c & 1]


@dataclass(frozen=True)
class LabelSpace:
    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not 2 <= len(names) <= MAX_LABELS:
            raise InvalidLabelSpace(
                f"need between 2 and {MAX_LABELS} leaf-labels, got {len(names)}")
        if any(not isinstance(n, str) or not n for n in names):
            raise InvalidLabelSpace("leaf-label names must be non-empty strings")
        if len(set(names)) != len(names):
            raise InvalidLabelSpace(f"duplicate leaf-label names in {names}")

    @classmethod
    def anonymous(cls, num_labels: int) -> "LabelSpace":
        return cls(tuple(f"l{c + 1}" for c in range(num_labels)))

    @property
    def num_labels(self) -> int:
        return len(self.names)

    @property
    def full_mask(self) -> int:
        return (1 << self.num_labels) - 1

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise IndexOutOfRange(f"unknown leaf-label {name!r}") from None

    def label_set(self, names: Iterable[str]) -> "LabelSet":
        return LabelSet(mask_of(self.index(n) for n in names), self.num_labels)


@dataclass(frozen=True)
class LabelSet:
    """Non-empty subset of the leaf-labels, as a bitmask."""

    mask: int
    num_labels: int

    def __post_init__(self):
        if self.mask <= 0:
            raise InvalidLabelSet("a label-set must contain at least one leaf-label")
        if self.mask >> self.num_labels:
            raise InvalidLabelSet(
                f"mask {self.mask:#x} has bits beyond {self.num_labels} leaf-labels")

    def __contains__(self, c: int) -> bool:
        return bool(self.mask >> int(c) & 1)

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    @property
    def indices(self) -> list[int]:
        return members(self.mask)


@dataclass(frozen=True, eq=False)
class LabelSetMap:
    """Per-voxel label-set annotation.

    ``masks`` holds one uint64 bitmask per voxel. Construction validates every
    mask against ``num_labels`` and rejects empty volumes.
    """

    masks: np.ndarray
    dims: Dims
    num_labels: int
    is_leaf_partition: bool = field(init=False)

    def __post_init__(self):
        dims = check_dims(self.dims)
        object.__setattr__(self, "dims", dims)
        if not 2 <= self.num_labels <= MAX_LABELS:
            raise InvalidLabelSpace(f"num_labels must be in [2, {MAX_LABELS}]")
        masks = np.array(self.masks, dtype=np.uint64).ravel()
        if masks.size != num_voxels(dims):
            raise DimsMismatch(
                f"{masks.size} masks for dims {dims} ({num_voxels(dims)} voxels)")
        if np.any(masks == 0):
            raise InvalidLabelSet(
                f"empty label-set at voxel {int(np.argmax(masks == 0))}")
        if self.num_labels < 64 and np.any(masks >> np.uint64(self.num_labels)):
            bad = int(np.argmax(masks >> np.uint64(self.num_labels) != 0))
            raise InvalidLabelSet(
                f"voxel {bad} has bits beyond {self.num_labels} leaf-labels")
        masks.setflags(write=False)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "is_leaf_partition", _pairwise_disjoint(masks))

    @property
    def n(self) -> int:
        return self.masks.size

    @cached_property
    def membership(self) -> np.ndarray:
        """Boolean ``(N, K)`` matrix, True where class c belongs to g_i."""
        shifts = np.arange(self.num_labels, dtype=np.uint64)
        out = (self.masks[:, None] >> shifts) & np.uint64(1)
        out = out.astype(bool)
        out.setflags(write=False)
        return out

    @cached_property
    def sizes(self) -> np.ndarray:
        """``|g_i|`` for every voxel."""
        out = np.bitwise_count(self.masks).astype(np.int64)
        out.setflags(write=False)
        return out

    @cached_property
    def singleton_indicator(self) -> np.ndarray:
        """Float ``(N, K)`` matrix of ``1(g_i = {c})``."""
        out = (self.membership & (self.sizes == 1)[:, None]).astype(np.float64)
        out.setflags(write=False)
        return out

    def distinct_sets(self) -> list[int]:
        return [int(m) for m in np.unique(self.masks)]

    def voxel(self, i: int) -> LabelSet:
        return LabelSet(int(self.masks[i]), self.num_labels)

    def __eq__(self, other):
        if not isinstance(other, LabelSetMap):
            return NotImplemented
        return (self.dims == other.dims and self.num_labels == other.num_labels
                and np.array_equal(self.masks, other.masks))

    __hash__ = None  # type: ignore[assignment]


def _pairwise_disjoint(masks: np.ndarray) -> bool:
    distinct = np.unique(masks)
    union = np.bitwise_or.reduce(distinct)
    return int(np.bitwise_count(distinct).sum()) == int(np.bitwise_count(union))


@dataclass(frozen=True, eq=False)
class ProbMap:
    """Per-voxel probability vectors, shape ``(N, K)``.

    Only shapes are checked at construction; call :func:`validate_probmap` to
    enforce the simplex constraints.
    """

    values: np.ndarray
    dims: Dims

    def __post_init__(self):
        dims = check_dims(self.dims)
        object.__setattr__(self, "dims", dims)
        values = np.asarray(self.values)
        if values.dtype.kind != "f":
            values = values.astype(np.float64)
        if values.ndim != 2 or values.shape[0] != num_voxels(dims):
            raise DimsMismatch(
                f"values of shape {values.shape} do not match dims {dims}")
        if not 2 <= values.shape[1] <= MAX_LABELS:
            raise InvalidLabelSpace(f"{values.shape[1]} classes is out of range")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def num_labels(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ProbMap):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.values, other.values)

    __hash__ = None  # type: ignore[assignment]


def validate_probmap(p: ProbMap, tol: float = ROW_SUM_TOL) -> None:
    """Raise unless every row of ``p`` lies on the probability simplex."""
    v = np.asarray(p.values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        bad = int(np.argmax(~np.all(np.isfinite(v), axis=1)))
        raise NonFiniteValue(f"non-finite probability at voxel {bad}")
    neg = v < 0
    if neg.any():
        i, c = np.unravel_index(int(np.argmax(neg)), v.shape)
        raise NegativeProbability(int(i), int(c), float(v[i, c]))
    dev = np.abs(v.sum(axis=1) - 1.0)
    worst = int(np.argmax(dev))
    if dev[worst] > tol:
        raise RowSumViolation(worst, float(dev[worst]))


def singleton_map(labels: Sequence[int], dims: Sequence[int],
                  num_labels: int) -> LabelSetMap:
    """Fully supervised annotation: voxel i gets the label-set ``{labels[i]}``."""
    labels = np.asarray(labels, dtype=np.int64).ravel()
    dims = check_dims(dims)
    if labels.size and (labels.min() < 0 or labels.max() >= num_labels):
        bad = labels[(labels < 0) | (labels >= num_labels)][0]
        raise IndexOutOfRange(f"leaf-label index {bad} outside [0, {num_labels})")
    masks = np.left_shift(np.uint64(1), labels.astype(np.uint64))
    return LabelSetMap(masks, dims, num_labels)


def one_hot(g: LabelSetMap) -> np.ndarray:
    """Dense ``(N, K)`` one-hot matrix of an all-singleton annotation."""
    if np.any(g.sizes != 1):
        raise InvalidLabelSet("one_hot needs an all-singleton annotation")
    return g.membership.astype(np.float64)
