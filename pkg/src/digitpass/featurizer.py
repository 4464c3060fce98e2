"""Feature extraction for the 32x32 digit raster.

Two feature families feed the classifiers:

  Global shadow features (24 values, one block per digit):
    The frame is cut into 8 triangular octants by its two diagonals and its
    horizontal/vertical center bisectors. Each octant is bounded by one
    half-side of the frame, one half-bisector and one half-diagonal, and
    contributes 3 values: the fraction of projection lines perpendicular to
    (a) the half-side, (b) the bisector segment, (c) the diagonal segment
    that pass through at least one ink pixel owned by the octant. Octants
    are numbered counterclockwise starting from the one bounded by the right
    half of the top side; pixels on a shared boundary belong to the
    lower-numbered octant. All values lie in [0, 1].

  Local longest-run features (4 values per window):
    Nine overlapping 16x16 windows sit on a 3x3 grid of quarter-pitch
    offsets. Within a window, every line in a direction contributes the
    length of its longest contiguous ink run; the per-line maxima are summed
    and divided by the window area (256). Directions in order: row, column,
    main diagonal (top-left to bottom-right), anti-diagonal. A full window
    scores exactly 1.0 in every direction.

A 9-bit window mask (bit i = window i) selects which windows contribute;
the combined vector is the 24 shadow values followed by 4 longest-run
values per selected window in ascending window index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatchError
from .raster import NORMALIZED_SIZE, BinaryImage

N = NORMALIZED_SIZE
WINDOW_SIZE = N // 2
WINDOW_AREA = WINDOW_SIZE * WINDOW_SIZE
NUM_WINDOWS = 9
NUM_SHADOW = 24
RUN_DIRECTIONS = ("row", "col", "diag", "adiag")

# Top-left corners form the 3x3 grid {0, 8, 16} x {0, 8, 16}; every window
# is 16x16. Order is fixed: it defines the meaning of window-mask bits.
_WINDOW_RECTS = (
    (0, 0, 16, 16),
    (0, 16, 16, 32),
    (8, 0, 24, 16),
    (16, 0, 32, 16),
    (16, 16, 32, 32),
    (16, 8, 32, 24),
    (0, 8, 16, 24),
    (8, 16, 24, 32),
    (8, 8, 24, 24),
)

# Window index mapping under a horizontal mirror of the raster.
MIRROR_WINDOW = (3, 4, 2, 0, 1, 6, 5, 7, 8)


@dataclass(frozen=True)
class Window:
    """One 16x16 sub-rectangle; (x0, y0) inclusive, (x1, y1) exclusive."""

    index: int
    x0: int
    y0: int
    x1: int
    y1: int


def window_table() -> tuple[Window, ...]:
    """The fixed table of the nine overlapping windows."""
    return tuple(Window(i, *rect) for i, rect in enumerate(_WINDOW_RECTS))


def _require_canonical(img: BinaryImage) -> np.ndarray:
    if img.height != N or img.width != N:
        raise DimensionMismatchError(f"expected a {N}x{N} raster, got {img.height}x{img.width}")
    return img.bits


# ---------------------------------------------------------------------------
# Shadow features
# ---------------------------------------------------------------------------

def _octant_of(r: int, c: int) -> int:
    # Regions are closed; testing in ascending order gives boundary pixels
    # to the lower-numbered octant.
    dx = c + 0.5 - N / 2
    dy = r + 0.5 - N / 2
    if dx >= 0 and dy <= 0 and dx + dy <= 0:
        return 0
    if dx <= 0 and dy <= 0 and dy <= dx:
        return 1
    if dx <= 0 and dy <= 0:
        return 2
    if dx <= 0 and dy >= 0 and dx + dy <= 0:
        return 3
    if dx <= 0 and dy >= 0:
        return 4
    if dx >= 0 and dy >= 0 and dy >= dx:
        return 5
    if dx >= 0 and dy >= 0:
        return 6
    return 7


def _build_shadow_specs():
    """Per (octant, projection) tuple: (ownership mask, line-id grid, line count)."""
    rr, cc = np.mgrid[0:N, 0:N]
    octant = np.empty((N, N), dtype=np.int8)
    for r in range(N):
        for c in range(N):
            octant[r, c] = _octant_of(r, c)

    # Which axis the half-side projection uses, per octant; the bisector
    # projection uses the other axis. Octants bounded by the anti-diagonal
    # project slot (c) along main-diagonal lines (c - r), the rest along
    # anti-diagonal lines (c + r).
    side_is_column = (True, True, False, False, True, True, False, False)
    diag_is_main_lines = (True, False, False, True, True, False, False, True)

    specs = []
    for o in range(8):
        mask = octant == o
        col_ids = cc
        row_ids = rr
        a_ids, b_ids = (col_ids, row_ids) if side_is_column[o] else (row_ids, col_ids)
        c_ids = (cc - rr + (N - 1)) if diag_is_main_lines[o] else (cc + rr)
        for ids in (a_ids, b_ids, c_ids):
            lines = np.unique(ids[mask])
            specs.append((mask, ids, lines.size))
    return tuple(specs)


_SHADOW_SPECS = _build_shadow_specs()


def shadow_features(img: BinaryImage) -> np.ndarray:
    """The 24 global shadow values, octant-major, each in [0, 1]."""
    bits = _require_canonical(img).astype(bool)
    out = np.empty(NUM_SHADOW, dtype=np.float64)
    for k, (mask, ids, total) in enumerate(_SHADOW_SPECS):
        occupied = np.unique(ids[mask & bits])
        out[k] = occupied.size / total
    return out


# ---------------------------------------------------------------------------
# Longest-run features
# ---------------------------------------------------------------------------

def _max_run_per_row(a: np.ndarray) -> np.ndarray:
    run = np.zeros(a.shape[0], dtype=np.int64)
    best = np.zeros(a.shape[0], dtype=np.int64)
    for j in range(a.shape[1]):
        run = (run + 1) * a[:, j]
        np.maximum(best, run, out=best)
    return best


def _shear_main(sub: np.ndarray) -> np.ndarray:
    # Column k of the sheared array holds the main-diagonal line c - r = k - 15.
    n = sub.shape[0]
    out = np.zeros((n, 2 * n - 1), dtype=sub.dtype)
    for r in range(n):
        out[r, n - 1 - r : 2 * n - 1 - r] = sub[r]
    return out


def _shear_anti(sub: np.ndarray) -> np.ndarray:
    # Column k holds the anti-diagonal line c + r = k.
    n = sub.shape[0]
    out = np.zeros((n, 2 * n - 1), dtype=sub.dtype)
    for r in range(n):
        out[r, r : r + n] = sub[r]
    return out


def longest_run_window(img: BinaryImage, win: Window) -> np.ndarray:
    """Normalized longest-run sums for one window: (row, col, diag, adiag)."""
    bits = _require_canonical(img)
    sub = bits[win.y0 : win.y1, win.x0 : win.x1].astype(np.int64)
    values = (
        _max_run_per_row(sub).sum(),
        _max_run_per_row(sub.T).sum(),
        _max_run_per_row(_shear_main(sub).T).sum(),
        _max_run_per_row(_shear_anti(sub).T).sum(),
    )
    return np.array(values, dtype=np.float64) / WINDOW_AREA


def _selected_indices(mask) -> list[int]:
    # Accept either a 9-bit sequence or a chromosome-like carrier of one.
    mask = list(getattr(mask, "bits", mask))
    if len(mask) != NUM_WINDOWS or any(b not in (0, 1) for b in mask):
        raise ValueError(f"window mask must be {NUM_WINDOWS} bits of 0/1, got {mask!r}")
    return [i for i, b in enumerate(mask) if b]


def assemble_features(img: BinaryImage, mask: Sequence[int]) -> np.ndarray:
    """Shadow block followed by longest-run blocks of the mask's windows."""
    selected = _selected_indices(mask)
    table = window_table()
    parts = [shadow_features(img)]
    parts.extend(longest_run_window(img, table[i]) for i in selected)
    return np.concatenate(parts)


def feature_header(mask: Sequence[int]) -> list[str]:
    """CSV column names matching assemble_features' layout."""
    names = [f"shadow_{k:02d}" for k in range(NUM_SHADOW)]
    for i in _selected_indices(mask):
        names.extend(f"w{i}_{d}" for d in RUN_DIRECTIONS)
    return names


# ---------------------------------------------------------------------------
# Bulk extraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureBank:
    """Precomputed per-image feature blocks, assembled per window mask.

    Shadow values and per-window run values do not depend on the mask, so
    one extraction pass serves every mask; this is what makes evaluating
    hundreds of window subsets affordable.
    """

    shadows: np.ndarray      # (n, 24)
    window_runs: np.ndarray  # (n, 9, 4)

    def __len__(self) -> int:
        return self.shadows.shape[0]

    def assemble(self, mask: Sequence[int]) -> np.ndarray:
        selected = _selected_indices(mask)
        if not selected:
            return self.shadows.copy()
        runs = self.window_runs[:, selected, :].reshape(len(self), -1)
        return np.hstack([self.shadows, runs])

    def take(self, indices) -> "FeatureBank":
        """Bank restricted to the given sample indices."""
        idx = np.asarray(indices, dtype=np.int64)
        return FeatureBank(self.shadows[idx], self.window_runs[idx])


def build_feature_bank(images: Iterable[BinaryImage]) -> FeatureBank:
    table = window_table()
    shadows = []
    runs = []
    for img in images:
        shadows.append(shadow_features(img))
        runs.append([longest_run_window(img, w) for w in table])
    n = len(shadows)
    return FeatureBank(
        shadows=np.asarray(shadows, dtype=np.float64).reshape(n, NUM_SHADOW),
        window_runs=np.asarray(runs, dtype=np.float64).reshape(n, NUM_WINDOWS, 4),
    )
