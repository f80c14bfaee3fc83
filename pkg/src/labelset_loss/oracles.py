"""Reference formulas written independently of the loss implementations.

These are deliberately loop-based and share no code with :mod:`losses`.
"""
from __future__ import annotations

import numpy as np

from .labelspace import LabelSetMap, members


def marginal_dice(p, g: LabelSetMap, epsilon: float) -> float:
    """Marginal Dice over the label-sets of a partition-structured annotation.

    Each distinct label-set S contributes one ratio built from the summed
    probability ``P_i(S) = sum_{c in S} p_ic``::

        2 * sum_{i: g_i = S} P_i(S) / (#{i: g_i = S} + sum_i P_i(S) + |S| eps)

    and the loss is ``1 - (1/K) * sum_S ratio(S)`` (alpha = 1).
    """
    p = np.asarray(p, dtype=np.float64)
    n, k = p.shape
    total = 0.0
    for s in g.distinct_sets():
        cls = members(s)
        overlap = 0.0
        count = 0
        pred = 0.0
        for i in range(n):
            mass = 0.0
            for c in cls:
                mass += p[i, c]
            pred += mass
            if int(g.masks[i]) == s:
                overlap += mass
                count += 1
        total += 2.0 * overlap / (count + pred + len(cls) * epsilon)
    return 1.0 - total / k


def masked_dice(p, g: LabelSetMap, alpha: int, epsilon: float):
    """Mean class Dice restricted to singleton-annotated voxels.

    Returns ``(value, gradient)``. Voxels with a non-singleton label-set are
    dropped from every sum, so their gradient rows are exactly zero.
    """
    p = np.asarray(p, dtype=np.float64)
    n, k = p.shape
    keep = [i for i in range(n) if bin(int(g.masks[i])).count("1") == 1]
    grad = np.zeros_like(p)
    value = 1.0
    for c in range(k):
        bit = 1 << c
        inter = sum(p[i, c] for i in keep if int(g.masks[i]) == bit)
        count = sum(1 for i in keep if int(g.masks[i]) == bit)
        pred = sum(p[i, c] ** alpha for i in keep)
        denom = count + pred + epsilon
        term = 2.0 * inter / denom
        value -= term / k
        for i in keep:
            t = 1.0 if int(g.masks[i]) == bit else 0.0
            d_pow = alpha * p[i, c] ** (alpha - 1)
            grad[i, c] = -(2.0 * t / denom - 2.0 * inter * d_pow / denom ** 2) / k
    return value, grad


def converted_dice_partition(p, g: LabelSetMap, epsilon: float) -> float:
    """Closed form of the converted mean class Dice (alpha = 1) for
    partition-structured annotations.

    For a label-set S with k = |S| members, n_S voxels annotated S, overlap
    mass A_S = sum_{i: g_i = S} P_i(S), and R_c = sum_{i: g_i != S} p_ic, each
    class c in S contributes ``(2/k) A_S / (n_S + A_S + k R_c + k eps)``.
    The marginal Dice is recovered when R_c is constant over c in S.
    """
    p = np.asarray(p, dtype=np.float64)
    n, k_all = p.shape
    total = 0.0
    for s in g.distinct_sets():
        cls = members(s)
        k = len(cls)
        inside = [i for i in range(n) if int(g.masks[i]) == s]
        overlap = sum(sum(p[i, c] for c in cls) for i in inside)
        for c in cls:
            rest = sum(p[i, c] for i in range(n) if int(g.masks[i]) != s)
            total += (2.0 / k) * overlap / (len(inside) + overlap + k * rest + k * epsilon)
    return 1.0 - total / k_all


def brute_dice(a_labels, b_labels, c: int) -> float:
    """Set-counting Dice on flat label arrays; 1.0 when both sets are empty."""
    a = {i for i, v in enumerate(a_labels) if v == c}
    b = {i for i, v in enumerate(b_labels) if v == c}
    if not a and not b:
        return 1.0
    return 2.0 * len(a & b) / (len(a) + len(b))


def _voxel_set(labels, dims, c: int) -> set:
    x_n, y_n, _ = dims
    out = set()
    for i, v in enumerate(labels):
        if v == c:
            out.add((i % x_n, (i // x_n) % y_n, i // (x_n * y_n)))
    return out


def brute_boundary(voxels: set, dims) -> list:
    steps = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))
    out = []
    for v in sorted(voxels):
        for s in steps:
            nb = (v[0] + s[0], v[1] + s[1], v[2] + s[2])
            inside = all(0 <= nb[d] < dims[d] for d in range(3))
            if not inside or nb not in voxels:
                out.append(v)
                break
    return out


def brute_hd95(a_labels, b_labels, dims, c: int, spacing=(1.0, 1.0, 1.0)):
    """All-pairs boundary distances, nearest-rank 95th percentile of both
    directions pooled. None when either mask is empty."""
    a = _voxel_set(a_labels, dims, c)
    b = _voxel_set(b_labels, dims, c)
    if not a or not b:
        return None
    ba = brute_boundary(a, dims)
    bb = brute_boundary(b, dims)

    def dist(u, v):
        return float(np.sqrt(sum(((u[d] - v[d]) * spacing[d]) ** 2 for d in range(3))))

    pooled = [min(dist(u, v) for v in bb) for u in ba]
    pooled += [min(dist(u, v) for v in ba) for u in bb]
    pooled.sort()
    rank = -(-95 * len(pooled) // 100)  # ceil(0.95 n) without float rounding
    return pooled[rank - 1]
