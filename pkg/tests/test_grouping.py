"""Confusable-class group formation from confusion counts."""

import numpy as np
import pytest

from digitpass.errors import SameLabelError
from digitpass.grouping import GroupTable, form_groups, mutual_confusion, qualifying_pairs

# Reference coarse-pass confusion counts over ten near-balanced classes;
# the tau=5 components of this matrix are the two groups the pipeline's
# default configuration is tuned around.
REFERENCE_CM = np.array([
    [394,   2,   0,   1,   0,   3,   0,   0,   0,   0],
    [  0, 371,   1,   0,   0,   0,   0,   0,   0,  13],
    [  0,   1, 398,   0,   0,   1,   2,   1,   0,   2],
    [  1,   0,   0, 393,   0,   0,   7,   2,   0,   0],
    [  0,   1,   0,   0, 395,   2,   1,   2,   0,   2],
    [  5,   0,   0,   1,   3, 390,   3,   2,   0,   2],
    [  0,   2,   0,   3,   1,   2, 384,   0,   0,   1],
    [  0,   0,   1,   1,   1,   1,   2, 391,   0,   2],
    [  0,   0,   0,   0,   0,   0,   0,   1, 400,   0],
    [  0,  23,   0,   1,   0,   1,   1,   1,   0, 378],
], dtype=np.int64)


def test_mutual_confusion_known_sums():
    assert mutual_confusion(REFERENCE_CM, 1, 9) == 36
    assert mutual_confusion(REFERENCE_CM, 3, 6) == 10
    assert mutual_confusion(REFERENCE_CM, 0, 5) == 8
    assert mutual_confusion(np.zeros((10, 10), int), 2, 7) == 0


def test_mutual_confusion_is_symmetric():
    rng = np.random.default_rng(30)
    cm = rng.integers(0, 50, (10, 10))
    for _ in range(40):
        i, j = rng.choice(10, size=2, replace=False)
        assert mutual_confusion(cm, int(i), int(j)) == mutual_confusion(cm, int(j), int(i))


def test_mutual_confusion_same_label_raises():
    with pytest.raises(SameLabelError):
        mutual_confusion(REFERENCE_CM, 4, 4)


def test_qualifying_pairs_at_tau_five():
    pairs = qualifying_pairs(REFERENCE_CM, 5)
    assert pairs == [(0, 5, 8), (1, 9, 36), (3, 6, 10), (4, 5, 5), (5, 6, 5)]


def test_form_groups_reference_matrix():
    assert form_groups(REFERENCE_CM, 5).groups == ((0, 3, 4, 5, 6), (1, 9))
    assert form_groups(REFERENCE_CM, 11).groups == ((1, 9),)
    assert form_groups(REFERENCE_CM, 37).groups == ()


def test_form_groups_diagonal_matrix_is_empty():
    assert form_groups(np.diag(np.full(10, 99)), 1).groups == ()


def test_form_groups_rejects_bad_tau_and_shape():
    with pytest.raises(ValueError):
        form_groups(REFERENCE_CM, 0)
    with pytest.raises(ValueError):
        form_groups(np.zeros((9, 9), int), 5)
    with pytest.raises(ValueError):
        form_groups(np.full((10, 10), -1), 5)


def test_form_groups_transpose_invariance():
    rng = np.random.default_rng(31)
    for _ in range(30):
        cm = rng.integers(0, 12, (10, 10))
        tau = int(rng.integers(1, 15))
        assert form_groups(cm, tau).groups == form_groups(cm.T, tau).groups


def test_form_groups_tau_monotonicity():
    # Raising tau can only split or shrink groups: every group at the
    # higher threshold is contained in some group at the lower one.
    rng = np.random.default_rng(32)
    for _ in range(30):
        cm = rng.integers(0, 10, (10, 10))
        coarse = form_groups(cm, 3).groups
        fine = form_groups(cm, int(rng.integers(4, 12))).groups
        for g in fine:
            assert any(set(g) <= set(big) for big in coarse)


def test_ungrouped_labels_have_no_qualifying_edge():
    tau = 5
    table = form_groups(REFERENCE_CM, tau)
    grouped = {l for g in table.groups for l in g}
    touched = {l for i, j, _ in qualifying_pairs(REFERENCE_CM, tau) for l in (i, j)}
    assert grouped == touched


def test_group_table_validation_and_lookup():
    table = GroupTable(((0, 3), (1, 9)))
    assert table.group_of(3) == 0
    assert table.group_of(9) == 1
    assert table.group_of(7) is None
    assert len(table) == 2
    with pytest.raises(ValueError):
        GroupTable(((4,),))
    with pytest.raises(ValueError):
        GroupTable(((1, 2), (2, 3)))
