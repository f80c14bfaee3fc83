import numpy as np
import pytest
from hypothesis import given, strategies as st

from labelset_loss.exceptions import (
    DimsMismatch,
    EmptyVolume,
    IndexOutOfRange,
    InvalidLabelSet,
    InvalidLabelSpace,
    NegativeProbability,
    RowSumViolation,
)
from labelset_loss.labelspace import (
    LabelSet,
    LabelSetMap,
    LabelSpace,
    ProbMap,
    from_grid,
    singleton_map,
    to_grid,
    validate_probmap,
)


def test_uniform_probmap_is_valid():
    validate_probmap(ProbMap(np.full((8, 3), 1 / 3), (2, 2, 2)))


def test_negative_entry_rejected():
    p = ProbMap(np.array([[1 / 3] * 3, [0.5, 0.6, -0.1]]), (2, 1, 1))
    with pytest.raises(NegativeProbability) as err:
        validate_probmap(p)
    assert (err.value.voxel, err.value.cls) == (1, 2)


def test_row_sum_violation_reports_voxel_and_deviation():
    p = ProbMap(np.array([[1 / 3] * 3, [0.5, 0.5, 0.1]]), (2, 1, 1))
    with pytest.raises(RowSumViolation) as err:
        validate_probmap(p)
    assert err.value.voxel == 1
    assert err.value.deviation == pytest.approx(0.1, abs=1e-12)


def test_row_sum_tolerance():
    v = np.array([[0.5, 0.5 + 5e-7]])
    validate_probmap(ProbMap(v, (1, 1, 1)))
    with pytest.raises(RowSumViolation):
        validate_probmap(ProbMap(np.array([[0.5, 0.5 + 5e-6]]), (1, 1, 1)))


def test_probmap_shape_must_match_dims():
    with pytest.raises(DimsMismatch):
        ProbMap(np.full((7, 2), 0.5), (2, 2, 2))


def test_singleton_map_encoding():
    g = singleton_map([0, 1, 1, 0], (4, 1, 1), 2)
    assert g.masks.tolist() == [1, 2, 2, 1]
    assert g.is_leaf_partition
    assert g.sizes.tolist() == [1, 1, 1, 1]


def test_singleton_map_rejects_empty_volume():
    with pytest.raises(EmptyVolume):
        singleton_map([], (0, 0, 0), 2)


def test_singleton_map_rejects_out_of_range_index():
    with pytest.raises(IndexOutOfRange):
        singleton_map([3], (1, 1, 1), 3)


@given(st.integers(2, 8), st.lists(st.integers(0, 7), min_size=1, max_size=30))
def test_singleton_maps_have_unit_label_sets(k, labels):
    labels = [c % k for c in labels]
    g = singleton_map(labels, (len(labels), 1, 1), k)
    assert np.all(g.sizes == 1)
    assert g.is_leaf_partition
    assert np.array_equal(np.argmax(g.membership, axis=1), labels)


def test_leaf_partition_flag():
    # {L'} plus singletons outside L'
    assert LabelSetMap([0b0110, 0b0001, 0b1000, 0b0110], (4, 1, 1), 4).is_leaf_partition
    # overlapping label-sets
    assert not LabelSetMap([0b011, 0b110], (2, 1, 1), 3).is_leaf_partition
    assert not LabelSetMap([0b011, 0b001], (2, 1, 1), 3).is_leaf_partition


@given(st.integers(3, 8), st.data())
def test_missing_label_structure_is_leaf_partition(k, data):
    lprime = data.draw(st.sets(st.integers(0, k - 1), min_size=1, max_size=k - 1))
    lmask = sum(1 << c for c in lprime)
    truth = data.draw(st.lists(st.integers(0, k - 1), min_size=1, max_size=20))
    masks = [lmask if c in lprime else 1 << c for c in truth]
    assert LabelSetMap(masks, (len(masks), 1, 1), k).is_leaf_partition


def test_label_set_map_validation():
    with pytest.raises(InvalidLabelSet):
        LabelSetMap([0b01, 0], (2, 1, 1), 2)
    with pytest.raises(InvalidLabelSet):
        LabelSetMap([0b100], (1, 1, 1), 2)
    with pytest.raises(DimsMismatch):
        LabelSetMap([1, 1, 1], (2, 1, 1), 2)


def test_label_set_map_is_immutable_and_copies_input():
    masks = np.array([1, 2], dtype=np.uint64)
    g = LabelSetMap(masks, (2, 1, 1), 2)
    masks[0] = 3
    assert g.masks[0] == 1
    with pytest.raises(ValueError):
        g.masks[0] = 2


def test_label_space():
    space = LabelSpace(("wm", "vent", "cgm"))
    assert space.num_labels == 3
    assert space.label_set(["vent", "cgm"]).mask == 0b110
    with pytest.raises(IndexOutOfRange):
        space.index("csf")
    with pytest.raises(InvalidLabelSpace):
        LabelSpace(("a", "a"))
    with pytest.raises(InvalidLabelSpace):
        LabelSpace(("a",))


def test_label_set():
    s = LabelSet(0b101, 3)
    assert len(s) == 2 and 0 in s and 1 not in s
    assert s.indices == [0, 2]
    with pytest.raises(InvalidLabelSet):
        LabelSet(0, 3)
    with pytest.raises(InvalidLabelSet):
        LabelSet(0b1000, 3)


def test_grid_layout_is_x_fastest():
    dims = (2, 3, 4)
    flat = np.arange(24)
    grid = to_grid(flat, dims)
    assert grid[1, 0, 0] == 1
    assert grid[0, 1, 0] == 2
    assert grid[0, 0, 1] == 6
    assert np.array_equal(from_grid(grid), flat)
