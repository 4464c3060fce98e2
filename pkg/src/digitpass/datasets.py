"""Dataset ingestion and generation.

Three sources produce labeled images: big-endian IDX pairs (the
standard digit-corpus container), directory trees of binary PGM files
(`root/<digit>/<name>.pgm`), and a built-in synthetic generator that
renders jittered glyph templates for desk-scale experiments. A seeded
stratified splitter carves train/test partitions.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    CountMismatchError,
    EmptyDatasetError,
    MissingRootError,
    NoSamplesError,
    TruncatedFileError,
)
from .raster import BinaryImage, GrayImage, _resample_nn
from .seeds import derive_seed

log = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class LabeledImage:
    """One sample: a gray or binary image, its digit label, and a source tag."""

    image: GrayImage | BinaryImage
    label: int
    source_id: str

    def __post_init__(self):
        if not 0 <= self.label <= 9:
            raise ValueError(f"label must be 0..9, got {self.label}")


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 2 / 3
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be strictly between 0 and 1")


# ---------------------------------------------------------------------------
# IDX container
# ---------------------------------------------------------------------------

def _read_exact(f, n: int, path) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"{path}: expected {n} more bytes, got {len(buf)}")
    return buf


def load_idx(images_path, labels_path) -> list[LabeledImage]:
    """Parse an images/labels IDX pair into GrayImage samples."""
    images_path, labels_path = Path(images_path), Path(labels_path)

    with open(images_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, images_path))
        if magic != IDX_IMAGES_MAGIC:
            raise BadMagicError(
                f"{images_path}: magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
            )
        raw = _read_exact(f, count * rows * cols, images_path)
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)

    with open(labels_path, "rb") as f:
        magic, label_count = struct.unpack(">II", _read_exact(f, 8, labels_path))
        if magic != IDX_LABELS_MAGIC:
            raise BadMagicError(
                f"{labels_path}: magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        labels = np.frombuffer(_read_exact(f, label_count, labels_path), dtype=np.uint8)

    if count != label_count:
        raise CountMismatchError(f"{count} images but {label_count} labels")
    return [
        LabeledImage(GrayImage(pixels[i]), int(labels[i]), f"{images_path.name}#{i}")
        for i in range(count)
    ]


def save_idx(samples: list[LabeledImage], images_path, labels_path) -> None:
    """Write samples (all same size) as an IDX pair; ink 0, background 255."""
    if not samples:
        raise EmptyDatasetError("nothing to save")
    grays = [_as_gray_pixels(s.image) for s in samples]
    rows, cols = grays[0].shape
    if any(g.shape != (rows, cols) for g in grays):
        raise CountMismatchError("all samples must share one image size")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, len(grays), rows, cols))
        for g in grays:
            f.write(g.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(samples)))
        f.write(bytes(s.label for s in samples))


def _as_gray_pixels(img: GrayImage | BinaryImage) -> np.ndarray:
    if isinstance(img, GrayImage):
        return img.pixels
    return np.where(img.bits > 0, 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# PGM (binary P5) files
# ---------------------------------------------------------------------------

def read_pgm(path) -> GrayImage:
    """Binary P5 PGM with maxval <= 255."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise BadMagicError(f"{path}: not a binary P5 PGM")
    # Header tokens: width, height, maxval; '#' starts a comment to EOL.
    pos, tokens = 2, []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise TruncatedFileError(f"{path}: header ended early")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = tokens
    if not 0 < maxval <= 255:
        raise BadMagicError(f"{path}: maxval {maxval} unsupported")
    raw = data[pos : pos + width * height]
    if len(raw) != width * height:
        raise TruncatedFileError(f"{path}: {len(raw)} pixel bytes, expected {width * height}")
    return GrayImage(np.frombuffer(raw, dtype=np.uint8).reshape(height, width))


def write_pgm(path, img: GrayImage | BinaryImage) -> None:
    pixels = _as_gray_pixels(img)
    h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def load_dir(root_path) -> list[LabeledImage]:
    """All P5 files under root/<digit>/; other files are skipped and logged."""
    root = Path(root_path)
    if not root.is_dir():
        raise MissingRootError(f"{root} is not a directory")
    samples = []
    skipped = 0
    for digit in range(10):
        sub = root / str(digit)
        if not sub.is_dir():
            continue
        for path in sorted(p for p in sub.iterdir() if p.is_file()):
            try:
                img = read_pgm(path)
            except (BadMagicError, TruncatedFileError, ValueError):
                skipped += 1
                log.warning("skipped unreadable image %s", path)
                continue
            samples.append(LabeledImage(img, digit, str(path.relative_to(root))))
    if skipped:
        log.warning("skipped %d non-P5 file(s) under %s", skipped, root)
    if not samples:
        raise NoSamplesError(f"no loadable samples under {root}")
    return samples


# ---------------------------------------------------------------------------
# Synthetic digits
# ---------------------------------------------------------------------------

# 16x16 glyph templates, one per class. Only the shape relative to its
# bounding box matters downstream (normalization crops and stretches),
# so strokes are drawn 2 px thick to survive resampling.
_GLYPH_ART = (
    # 0
    """
    ...##########...
    ..############..
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ..############..
    ...##########...
    """,
    # 1
    """
    .......##.......
    ......###.......
    .....####.......
    ....##.##.......
    .......##.......
    .......##.......
    .......##.......
    .......##.......
    .......##.......
    .......##.......
    .......##.......
    .......##.......
    .......##.......
    .......##.......
    ....########....
    ....########....
    """,
    # 2
    """
    ..############..
    ..############..
    ............##..
    ............##..
    ............##..
    ............##..
    ..############..
    ..############..
    ..##............
    ..##............
    ..##............
    ..##............
    ..##............
    ..##............
    ..############..
    ..############..
    """,
    # 3
    """
    ..############..
    ..############..
    ............##..
    ............##..
    ............##..
    ............##..
    ....##########..
    ....##########..
    ............##..
    ............##..
    ............##..
    ............##..
    ............##..
    ............##..
    ..############..
    ..############..
    """,
    # 4
    """
    ..##......##....
    ..##......##....
    ..##......##....
    ..##......##....
    ..##......##....
    ..##......##....
    ..############..
    ..############..
    ..........##....
    ..........##....
    ..........##....
    ..........##....
    ..........##....
    ..........##....
    ..........##....
    ..........##....
    """,
    # 5
    """
    ..############..
    ..############..
    ..##............
    ..##............
    ..##............
    ..##............
    ..##########....
    ..############..
    ............##..
    ............##..
    ............##..
    ............##..
    ............##..
    ............##..
    ..############..
    ..##########....
    """,
    # 6
    """
    ....##########..
    ..############..
    ..##............
    ..##............
    ..##............
    ..##............
    ..##########....
    ..############..
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ..############..
    ...##########...
    """,
    # 7
    """
    ..############..
    ..############..
    ............##..
    ............##..
    ...........##...
    ..........##....
    .........##.....
    ........##......
    .......##.......
    ......##........
    ......##........
    .....##.........
    .....##.........
    ....##..........
    ....##..........
    ....##..........
    """,
    # 8
    """
    ...##########...
    ..############..
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ...##########...
    ...##########...
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ..############..
    ...##########...
    """,
    # 9
    """
    ...##########...
    ..############..
    ..##........##..
    ..##........##..
    ..##........##..
    ..##........##..
    ..############..
    ...###########..
    ............##..
    ............##..
    ............##..
    ............##..
    ............##..
    ............##..
    ..############..
    ..##########....
    """,
)

GLYPH_SIZE = 16
CANVAS_SIZE = 32
MAX_SHIFT = 3
SCALE_JITTER = 0.15


def _parse_glyph(art: str) -> np.ndarray:
    rows = [line.strip() for line in art.strip().splitlines()]
    if len(rows) != GLYPH_SIZE or any(len(r) != GLYPH_SIZE for r in rows):
        raise ValueError("glyph art must be 16 lines of 16 characters")
    return np.array([[1 if ch == "#" else 0 for ch in row] for row in rows], dtype=np.uint8)


GLYPHS = tuple(_parse_glyph(a) for a in _GLYPH_ART)


def synth_digits(per_class: int, seed: int, noise: float = 0.0) -> list[LabeledImage]:
    """10 x per_class jittered glyph renderings on a 32x32 canvas.

    Per sample: scale jitter of +-15%, integer translation of +-3 px,
    then each canvas pixel flips independently with probability noise.
    Deterministic per (per_class, seed); the geometry stream does not
    depend on the noise level.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if not 0.0 <= noise <= 1.0:
        raise ValueError("noise must be in [0, 1]")
    rng = np.random.default_rng(derive_seed(seed, "synth"))
    samples = []
    for label in range(10):
        glyph = GLYPHS[label]
        for k in range(per_class):
            scale = 1.0 + rng.uniform(-SCALE_JITTER, SCALE_JITTER)
            size = max(1, round(GLYPH_SIZE * scale))
            dy, dx = rng.integers(-MAX_SHIFT, MAX_SHIFT + 1, size=2)
            flip = rng.random((CANVAS_SIZE, CANVAS_SIZE)) < noise

            canvas = np.zeros((CANVAS_SIZE, CANVAS_SIZE), dtype=np.uint8)
            top = (CANVAS_SIZE - size) // 2 + int(dy)
            left = (CANVAS_SIZE - size) // 2 + int(dx)
            canvas[top : top + size, left : left + size] = _resample_nn(glyph, size)
            canvas ^= flip.astype(np.uint8)
            samples.append(LabeledImage(BinaryImage(canvas), label, f"synth-{label}-{k}"))
    return samples


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def split(data: list[LabeledImage], spec: SplitSpec) -> tuple[list[LabeledImage], list[LabeledImage]]:
    """Seeded train/test partition; stratified per label when requested."""
    if not data:
        raise EmptyDatasetError("cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)
    train: list[LabeledImage] = []
    test: list[LabeledImage] = []
    if spec.stratified:
        buckets = [[i for i, s in enumerate(data) if s.label == d] for d in range(10)]
    else:
        buckets = [list(range(len(data)))]
    for bucket in buckets:
        if not bucket:
            continue
        perm = rng.permutation(len(bucket))
        cut = int(spec.train_fraction * len(bucket))
        train.extend(data[bucket[int(p)]] for p in perm[:cut])
        test.extend(data[bucket[int(p)]] for p in perm[cut:])
    return train, test
