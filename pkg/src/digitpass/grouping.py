"""Groups of mutually-confusable classes from a confusion matrix.

Classes i and j are linked when counts[i][j] + counts[j][i] reaches a
threshold; groups are the connected components of size 2 or more.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SameLabelError
from .neuralnet import NUM_CLASSES


@dataclass(frozen=True)
class GroupTable:
    """Disjoint label groups, each sorted ascending, ordered by smallest member."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen = set()
        for g in self.groups:
            if len(g) < 2:
                raise ValueError(f"group {g} has fewer than 2 members")
            if seen & set(g):
                raise ValueError("groups must be pairwise disjoint")
            seen |= set(g)

    def group_of(self, label: int) -> int | None:
        """Index of the group containing label, or None."""
        for gid, g in enumerate(self.groups):
            if label in g:
                return gid
        return None

    def __len__(self) -> int:
        return len(self.groups)


def _as_counts(cm) -> np.ndarray:
    cm = np.asarray(cm, dtype=np.int64)
    if cm.shape != (NUM_CLASSES, NUM_CLASSES) or (cm < 0).any():
        raise ValueError(f"confusion matrix must be 10x10 non-negative, got shape {cm.shape}")
    return cm


def mutual_confusion(cm, i: int, j: int) -> int:
    """Symmetric confusion sum counts[i][j] + counts[j][i]."""
    if i == j:
        raise SameLabelError(f"mutual confusion needs two distinct labels, got {i}")
    cm = _as_counts(cm)
    return int(cm[i, j] + cm[j, i])


def qualifying_pairs(cm, tau: int) -> list[tuple[int, int, int]]:
    """All (i, j, sum) with i < j whose mutual confusion reaches tau."""
    cm = _as_counts(cm)
    out = []
    for i in range(NUM_CLASSES):
        for j in range(i + 1, NUM_CLASSES):
            s = int(cm[i, j] + cm[j, i])
            if s >= tau:
                out.append((i, j, s))
    return out


def form_groups(cm, tau: int) -> GroupTable:
    """Connected components (size >= 2) of the tau-thresholded mutual graph."""
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    parent = list(range(NUM_CLASSES))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j, _ in qualifying_pairs(cm, tau):
        parent[find(i)] = find(j)

    components: dict[int, list[int]] = {}
    for label in range(NUM_CLASSES):
        components.setdefault(find(label), []).append(label)
    groups = sorted(tuple(sorted(g)) for g in components.values() if len(g) >= 2)
    return GroupTable(tuple(groups))
