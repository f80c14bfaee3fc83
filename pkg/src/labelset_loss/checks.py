"""Seeded property suites run by ``labelset check`` and the acceptance tests."""
from __future__ import annotations

import time
from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np

from . import oracles
from .gradcheck import central_diff, check_gradient
from .labelspace import LabelSetMap, ProbMap, mask_of, members, one_hot
from .losses import (
    LossKind,
    LossSpec,
    compute_loss,
    convert_fully_supervised,
    leaf_dice,
    mean_class_dice,
    soft_target_dice,
)
from .marginalize import phi, phi_array, psi0, sample_equivalent
from .phantom import PhantomConfig, generate
from .trainer import Model, objective

AXIOM_SEED = 20210927
GRAD_SEED = 1234
ORACLE_SEED = 5150

STRUCTURES = ("leaf_partition", "partition", "overlapping", "singleton")


@dataclass
class PropertyResult:
    name: str
    instances: int
    worst: float
    tolerance: float
    passed: bool
    note: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.note})" if self.note else ""
        return (f"[{status}] {self.name}: n={self.instances} worst={self.worst:.3e} "
                f"tol={self.tolerance:.1e}{extra}")


# ---------------------------------------------------------------- instances

def random_probs(rng: np.random.Generator, n: int, k: int,
                 margin: float = 0.0) -> np.ndarray:
    """Random rows on the simplex, mixed with the uniform vector so every entry
    is at least ``margin``."""
    p = rng.dirichlet(np.full(k, 0.7), size=n)
    if margin > 0:
        lam = margin * k
        p = (1 - lam) * p + lam / k
    return p


def random_annotation(rng: np.random.Generator, n: int, k: int,
                      structure: str) -> LabelSetMap:
    full = (1 << k) - 1
    if structure == "singleton":
        masks = 1 << rng.integers(0, k, n)
    elif structure == "leaf_partition":
        # one merged set L' (possibly empty) plus singletons of the other classes
        size = int(rng.integers(0, k))
        lprime = rng.choice(k, size=size, replace=False)
        lmask = int(sum(1 << int(c) for c in lprime))
        truth = rng.integers(0, k, n)
        masks = np.array([lmask if lmask >> int(t) & 1 else 1 << int(t) for t in truth])
    elif structure == "partition":
        blocks = rng.integers(0, max(1, int(rng.integers(1, k + 1))), k)
        parts = [int(sum(1 << c for c in range(k) if blocks[c] == b))
                 for b in np.unique(blocks)]
        masks = np.array(parts, dtype=np.int64)[rng.integers(0, len(parts), n)]
    elif structure == "overlapping":
        masks = rng.integers(1, full + 1, n)
    else:
        raise ValueError(f"unknown structure {structure!r}")
    return LabelSetMap(np.asarray(masks, dtype=np.uint64), (n, 1, 1), k)


def random_instance(rng: np.random.Generator, structure: str, k: int | None = None,
                    n: int | None = None, margin: float = 0.0):
    k = int(rng.integers(2, 9)) if k is None else k
    n = int(rng.integers(1, 40)) if n is None else n
    g = random_annotation(rng, n, k, structure)
    return ProbMap(random_probs(rng, n, k, margin), g.dims), g


def axiom_specs(rng: np.random.Generator) -> list[LossSpec]:
    alpha = int(rng.integers(1, 3))
    eps = float(10.0 ** rng.uniform(-7, -3))
    return [LossSpec(kind, alpha=alpha, epsilon=eps) for kind in
            (LossKind.LEAF_DICE, LossKind.CONVERTED_DICE,
             LossKind.MARGINAL_CROSS_ENTROPY)]


# ---------------------------------------------------------------- suites

def _timed(fn: Callable[[], PropertyResult]) -> PropertyResult:
    t0 = time.perf_counter()
    res = fn()
    res.seconds = time.perf_counter() - t0
    return res


def axiom_suite(n_instances: int = 200, seed: int = AXIOM_SEED,
                tol: float = 1e-9) -> list[PropertyResult]:
    """Label-set axiom on Phi-equivalent pairs and invariance under Phi."""
    rng = np.random.default_rng(seed)
    worst = {kind: [0.0, 0.0, 0] for kind in
             (LossKind.LEAF_DICE, LossKind.CONVERTED_DICE, LossKind.MARGINAL_CROSS_ENTROPY)}
    t0 = time.perf_counter()
    for t in range(n_instances):
        structure = STRUCTURES[t % len(STRUCTURES)]
        p, g = random_instance(rng, structure)
        sample = sample_equivalent(p, g, int(rng.integers(2**31)))
        marg = phi(p, g)
        for spec in axiom_specs(rng):
            if spec.kind is LossKind.LEAF_DICE and not g.is_leaf_partition:
                continue
            base = compute_loss(spec, sample.base, g).value
            pair = abs(base - compute_loss(spec, sample.variant, g).value)
            fixed = abs(base - compute_loss(spec, marg, g).value)
            w = worst[spec.kind]
            w[0] = max(w[0], pair)
            w[1] = max(w[1], fixed)
            w[2] += 1
    elapsed = time.perf_counter() - t0
    out = []
    for kind, (pair, fixed, count) in worst.items():
        out.append(PropertyResult(f"axiom/equivalent-pairs/{kind}", count, pair, tol,
                                  pair <= tol, seconds=elapsed))
        out.append(PropertyResult(f"axiom/phi-invariance/{kind}", count, fixed, tol,
                                  fixed <= tol, seconds=elapsed))
    out.append(_timed(soft_target_counterexample))
    return out


def soft_target_counterexample() -> PropertyResult:
    """Soft-target Dice separates two predictions with the same marginalization."""
    g = LabelSetMap([0b011], (1, 1, 1), 3)
    spec = LossSpec(LossKind.SOFT_TARGET_DICE, alpha=1, epsilon=1e-12)
    p = np.array([[1.0, 0.0, 0.0]])
    q = np.array([[0.5, 0.5, 0.0]])
    same_phi = float(np.abs(phi_array(p, g) - phi_array(q, g)).max())
    diff = abs(soft_target_dice(p, g, spec).value - soft_target_dice(q, g, spec).value)
    return PropertyResult("axiom/negative-control/SoftTargetDice", 1, diff, 0.1,
                          diff >= 0.1 and same_phi <= 1e-12,
                          note="counterexample found (expected)" if diff >= 0.1 else
                          "no counterexample")


def idempotence_suite(n_instances: int = 200, seed: int = AXIOM_SEED + 1,
                      tol: float = 1e-12) -> list[PropertyResult]:
    rng = np.random.default_rng(seed)
    idem = fixed = rows = 0.0
    for t in range(n_instances):
        p, g = random_instance(rng, STRUCTURES[t % len(STRUCTURES)])
        once = phi_array(p.values, g)
        idem = max(idem, float(np.abs(phi_array(once, g) - once).max()))
        target = psi0(g).values
        fixed = max(fixed, float(np.abs(phi_array(target, g) - target).max()))
        rows = max(rows, float(np.abs(once.sum(axis=1) - 1).max()))
    return [
        PropertyResult("phi/idempotence", n_instances, idem, tol, idem <= tol),
        PropertyResult("psi0/fixed-point", n_instances, fixed, tol, fixed <= tol),
        PropertyResult("phi/row-sums", n_instances, rows, 1e-9, rows <= 1e-9),
    ]


def reduction_suite(n_instances: int = 100, seed: int = AXIOM_SEED + 2,
                    tol: float = 1e-12) -> list[PropertyResult]:
    """With singleton annotations the label-set Dice losses reduce to mean class Dice."""
    rng = np.random.default_rng(seed)
    leaf = conv = 0.0
    for _ in range(n_instances):
        p, g = random_instance(rng, "singleton")
        spec = LossSpec(LossKind.MEAN_CLASS_DICE, alpha=int(rng.integers(1, 3)),
                        epsilon=float(10.0 ** rng.uniform(-7, -3)))
        ref = mean_class_dice(p, one_hot(g), spec).value
        leaf = max(leaf, abs(leaf_dice(p, g, spec).value - ref))
        conv = max(conv, abs(convert_fully_supervised(
            partial(mean_class_dice, spec=spec), p, g).value - ref))
    return [
        PropertyResult("reduction/LeafDice", n_instances, leaf, tol, leaf <= tol),
        PropertyResult("reduction/ConvertedDice", n_instances, conv, tol, conv <= tol),
    ]


def oracle_suite(n_instances: int = 100, seed: int = ORACLE_SEED,
                 tol: float = 1e-9) -> list[PropertyResult]:
    """Converted Dice (alpha = 1) against the marginal Dice oracle on
    partition-structured annotations."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        p, g = random_instance(rng, "partition")
        eps = float(10.0 ** rng.uniform(-7, -3))
        spec = LossSpec(LossKind.CONVERTED_DICE, alpha=1, epsilon=eps)
        ours = compute_loss(spec, p, g).value
        worst = max(worst, abs(ours - oracles.marginal_dice(p.values, g, eps)))
    results = [PropertyResult("oracle/ConvertedDice-vs-marginal-Dice", n_instances,
                              worst, tol, worst <= tol)]

    # where the two agree: exact closed form, and predictions that spread each
    # label-set's mass evenly at voxels annotated with a different label-set
    rng = np.random.default_rng(seed + 1)
    closed = uniform = 0.0
    for _ in range(n_instances):
        p, g = random_instance(rng, "partition")
        eps = float(10.0 ** rng.uniform(-7, -3))
        spec = LossSpec(LossKind.CONVERTED_DICE, alpha=1, epsilon=eps)
        closed = max(closed, abs(compute_loss(spec, p, g).value
                                 - oracles.converted_dice_partition(p.values, g, eps)))
        q = off_part_uniform_probs(rng, g)
        uniform = max(uniform, abs(compute_loss(spec, q, g).value
                                   - oracles.marginal_dice(q, g, eps)))
    results.append(PropertyResult("oracle/ConvertedDice-vs-partition-closed-form",
                                  n_instances, closed, tol, closed <= tol))
    results.append(PropertyResult("oracle/marginal-Dice-on-off-part-uniform-predictions",
                                  n_instances, uniform, tol, uniform <= tol))
    return results


def off_part_uniform_probs(rng: np.random.Generator, g: LabelSetMap) -> np.ndarray:
    """Random predictions that are constant within every label-set of ``g``
    except the voxel's own one."""
    sets = g.distinct_sets()
    covered = 0
    for s in sets:
        covered |= s
    rest = ((1 << g.num_labels) - 1) & ~covered
    blocks = [members(s) for s in sets] + [[c] for c in members(rest)]
    p = np.zeros((g.n, g.num_labels))
    for i in range(g.n):
        weights = rng.dirichlet(np.ones(len(blocks)))
        for w, cls in zip(weights, blocks):
            if int(g.masks[i]) == mask_of(cls):
                p[i, cls] = w * rng.dirichlet(np.ones(len(cls)))
            else:
                p[i, cls] = w / len(cls)
    return p


def grad_instances(seed: int = GRAD_SEED):
    """Interior-point instances for every loss kind."""
    rng = np.random.default_rng(seed)
    out = []
    for kind in LossKind:
        for alpha in (1, 2):
            if kind is LossKind.MARGINAL_CROSS_ENTROPY and alpha == 2:
                continue
            for structure in ("leaf_partition", "overlapping"):
                if kind is LossKind.LEAF_DICE and structure != "leaf_partition":
                    continue
                p, g = random_instance(rng, structure, k=int(rng.integers(2, 6)),
                                       n=int(rng.integers(3, 12)), margin=2e-3)
                out.append((LossSpec(kind, alpha=alpha), p, g))
    return out


def end_to_end_report(seed: int = GRAD_SEED, spec: LossSpec | None = None):
    """Finite-difference check of d loss / d (weights, bias) through softmax."""
    spec = spec or LossSpec(LossKind.LEAF_DICE)
    ph = generate(PhantomConfig((6, 6, 6), 3, 0.1, seed=seed), lprime=0b110)
    model = Model.initial(3, ph.features.shape[1], seed, scale=0.5)
    k, f = model.weights.shape
    theta = np.concatenate([model.weights.ravel(), model.bias])

    def value(th):
        m = Model(th[:k * f].reshape(k, f), th[k * f:])
        return objective(m, ph.features, ph.partial, spec)[0]

    _, gw, gb = objective(model, ph.features, ph.partial, spec)
    return check_gradient(value, theta, np.concatenate([gw.ravel(), gb]), h=1e-5)


def grad_suite(seed: int = GRAD_SEED, tol: float = 1e-4,
               end_to_end_tol: float = 1e-3) -> list[PropertyResult]:
    worst: dict = {}
    for spec, p, g in grad_instances(seed):
        rep = central_diff(spec, p, h=1e-4, g=g)
        prev = worst.get(spec.kind, (0.0, 0))
        worst[spec.kind] = (max(prev[0], rep.max_rel_error), prev[1] + 1)
    out = [PropertyResult(f"grad/{kind}", count, err, tol, err <= tol)
           for kind, (err, count) in worst.items()]
    e2e_worst = 0.0
    kinds = list(LossKind)
    for kind in kinds:
        rep = end_to_end_report(seed, LossSpec(kind))
        e2e_worst = max(e2e_worst, rep.max_rel_error)
    out.append(PropertyResult("grad/end-to-end(6x6x6,K=3)", len(kinds), e2e_worst,
                              end_to_end_tol, e2e_worst <= end_to_end_tol))
    return out


SUITES = {
    "axioms": lambda: axiom_suite() + idempotence_suite() + reduction_suite(),
    "grad": grad_suite,
    "oracle": oracle_suite,
}
