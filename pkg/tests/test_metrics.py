import numpy as np
import pytest
from hypothesis import given, strategies as st

from labelset_loss import oracles
from labelset_loss.exceptions import DimsMismatch, IndexOutOfRange
from labelset_loss.labelspace import ProbMap, from_grid, to_grid
from labelset_loss.metrics import HardSeg, boundary_coords, case_metrics, dice_score, hd95, nearest_rank


def seg(grid, k=2):
    grid = np.asarray(grid)
    return HardSeg(grid.shape, from_grid(grid), k)


def cube(dims, corner, size=3):
    g = np.zeros(dims, dtype=np.int64)
    x, y, z = corner
    g[x:x + size, y:y + size, z:z + size] = 1
    return g


def random_seg_pair(rng):
    dims = tuple(int(d) for d in rng.integers(1, 11, 3))
    k = int(rng.integers(2, 5))
    # blocky masks so boundaries are not the whole volume
    a = rng.integers(0, k, dims)
    b = np.where(rng.random(dims) < 0.7, a, rng.integers(0, k, dims))
    return seg(a, k), seg(b, k), k


class TestDice:
    def test_identical_and_disjoint(self):
        a = cube((4, 4, 4), (0, 0, 0), 2)
        assert dice_score(seg(a), seg(a), 1) == 1.0
        assert dice_score(seg(a), seg(cube((4, 4, 4), (2, 2, 2), 2)), 1) == 0.0

    def test_half_overlap(self):
        a = np.zeros((4, 4, 4), dtype=int)
        b = np.zeros_like(a)
        a[0, 0, 0:4] = 1
        b[0, 0, 2:4] = 1
        b[1, 1, 0:2] = 1
        assert dice_score(seg(a), seg(b), 1) == 0.5

    def test_both_empty(self):
        a = np.zeros((3, 3, 3), dtype=int)
        assert dice_score(seg(a), seg(a), 1) == 1.0

    def test_dims_mismatch(self):
        with pytest.raises(DimsMismatch):
            dice_score(seg(np.zeros((2, 2, 2), int)), seg(np.zeros((2, 2, 3), int)), 0)


class TestHD95:
    def test_identical(self):
        a = cube((6, 6, 6), (1, 1, 1))
        assert hd95(seg(a), seg(a), 1) == 0.0

    def test_single_voxels_three_apart(self):
        a = np.zeros((8, 3, 3), int)
        b = np.zeros_like(a)
        a[1, 1, 1] = 1
        b[4, 1, 1] = 1
        assert hd95(seg(a), seg(b), 1) == 3.0

    def test_offset_cubes_match_all_pairs_oracle(self):
        a = seg(cube((8, 8, 8), (1, 2, 2)))
        b = seg(cube((8, 8, 8), (3, 2, 2)))
        expected = oracles.brute_hd95(a.labels, b.labels, a.dims, 1)
        assert hd95(a, b, 1) == expected
        # 26 boundary voxels each way; only the 18 in the outer planes travel 2
        assert expected == 2.0

    def test_undefined_when_a_mask_is_empty(self):
        a = cube((5, 5, 5), (1, 1, 1))
        empty = np.zeros_like(a)
        assert hd95(seg(a), seg(empty), 1) is None
        assert hd95(seg(empty), seg(empty), 1) is None

    def test_spacing(self):
        a = np.zeros((3, 3, 8), int)
        b = np.zeros_like(a)
        a[1, 1, 1] = 1
        b[1, 1, 5] = 1
        assert hd95(seg(a), seg(b), 1, spacing=(1.0, 1.0, 0.5)) == 2.0
        with pytest.raises(ValueError):
            hd95(seg(a), seg(b), 1, spacing=(1.0, 0.0, 1.0))


def test_nearest_rank():
    vals = np.arange(1.0, 21.0)
    assert nearest_rank(vals, 95) == 19.0
    assert nearest_rank(np.array([4.0]), 95) == 4.0


@pytest.mark.parametrize("seed", range(25))
def test_agree_with_brute_force(seed):
    rng = np.random.default_rng(seed)
    a, b, k = random_seg_pair(rng)
    spacing = tuple(float(s) for s in rng.choice([0.5, 1.0, 1.25], 3))
    for c in range(k):
        assert dice_score(a, b, c) == oracles.brute_dice(a.labels, b.labels, c)
        assert hd95(a, b, c, spacing) == oracles.brute_hd95(a.labels, b.labels, a.dims, c, spacing)


@given(st.integers(0, 2**32 - 1))
def test_symmetry_and_bound(seed):
    rng = np.random.default_rng(seed)
    a, b, k = random_seg_pair(rng)
    for c in range(k):
        assert dice_score(a, b, c) == dice_score(b, a, c)
        assert hd95(a, b, c) == hd95(b, a, c)


@given(st.integers(0, 2**32 - 1), st.permutations([0, 1, 2]))
def test_axis_permutation_invariance(seed, perm):
    rng = np.random.default_rng(seed)
    a, b, k = random_seg_pair(rng)
    spacing = np.array([0.5, 1.0, 1.5])
    ga, gb = to_grid(a.labels, a.dims), to_grid(b.labels, b.dims)
    pa, pb = seg(ga.transpose(perm), k), seg(gb.transpose(perm), k)
    for c in range(k):
        assert dice_score(a, b, c) == dice_score(pa, pb, c)
        x, y = hd95(a, b, c, spacing), hd95(pa, pb, c, spacing[list(perm)])
        assert (x is None and y is None) or x == pytest.approx(y, abs=1e-12)


def test_hd95_does_not_exceed_hausdorff(rng):
    for _ in range(10):
        a, b, k = random_seg_pair(rng)
        for c in range(k):
            h = hd95(a, b, c)
            if h is None:
                continue
            ba = boundary_coords(to_grid(a.labels == c, a.dims))
            bb = boundary_coords(to_grid(b.labels == c, b.dims))
            d = np.sqrt(((ba[:, None] - bb[None]) ** 2).sum(-1))
            assert h <= max(d.min(1).max(), d.min(0).max())


def test_from_probmap_ties_go_to_lowest_index():
    p = ProbMap(np.array([[0.5, 0.5, 0.0], [0.2, 0.4, 0.4], [0.1, 0.2, 0.7]]), (3, 1, 1))
    assert HardSeg.from_probmap(p).labels.tolist() == [0, 1, 2]


def test_hardseg_validation():
    with pytest.raises(IndexOutOfRange):
        HardSeg((2, 1, 1), [0, 3], 3)
    with pytest.raises(DimsMismatch):
        HardSeg((2, 1, 1), [0, 1, 1], 3)


def test_case_metrics_marks_missing_class():
    truth = seg(cube((6, 6, 6), (1, 1, 1)), 3)
    m = case_metrics(truth, truth)
    assert m.dsc == (1.0, 1.0, 1.0)
    assert m.hd95[:2] == (0.0, 0.0) and m.hd95[2] is None
