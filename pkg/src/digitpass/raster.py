"""Image ingestion primitives: grayscale container, thresholding, 32x32 normalization.

All downstream feature extraction works on the canonical raster: a 32x32
binary image, cropped to the tight bounding box of the ink and stretched
(anisotropically, nearest-neighbor) to fill the frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlankImageError, DimensionMismatchError

NORMALIZED_SIZE = 32


@dataclass(frozen=True)
class GrayImage:
    """Row-major grayscale raster with intensities in 0..255."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise DimensionMismatchError(f"gray image must be 2-D and non-empty, got shape {p.shape}")
        if p.min() < 0 or p.max() > 255:
            raise ValueError("gray intensities must lie in 0..255")
        object.__setattr__(self, "pixels", p.astype(np.uint8))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class BinaryImage:
    """Row-major binary raster; 1 = ink (foreground), 0 = background."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise DimensionMismatchError(f"binary image must be 2-D and non-empty, got shape {b.shape}")
        vals = np.unique(b)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError("binary image bits must be 0 or 1")
        object.__setattr__(self, "bits", b.astype(np.uint8))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def foreground_count(self) -> int:
        return int(self.bits.sum())


def otsu_threshold(pixels: np.ndarray) -> int:
    """Threshold T in 0..255 maximizing between-class variance of {p < T} vs {p >= T}.

    Ties take the smallest T, so a flat histogram yields T = 0 (everything
    background) rather than an arbitrary split.
    """
    hist = np.bincount(pixels.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    cum_count = np.concatenate(([0.0], np.cumsum(hist)))       # pixels < T
    cum_mass = np.concatenate(([0.0], np.cumsum(hist * np.arange(256))))
    best_t, best_var = 0, 0.0
    for t in range(256):
        w0 = cum_count[t]
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        mu0 = cum_mass[t] / w0
        mu1 = (cum_mass[256] - cum_mass[t]) / w1
        var = w0 * w1 * (mu0 - mu1) ** 2
        if var > best_var:
            best_var, best_t = var, t
    return best_t


def binarize(img: GrayImage, threshold: int | None = None) -> BinaryImage:
    """Threshold a grayscale image; foreground = intensity strictly below T.

    threshold=None selects T with Otsu's method; an int uses that fixed
    value. Ink is assumed darker than paper; callers wanting the opposite
    invert the result themselves.
    """
    t = otsu_threshold(img.pixels) if threshold is None else int(threshold)
    if threshold is not None and not 0 <= t <= 255:
        raise ValueError(f"fixed threshold must be in 0..255, got {t}")
    return BinaryImage((img.pixels < t).astype(np.uint8))


def invert(img: BinaryImage) -> BinaryImage:
    """Swap foreground and background."""
    return BinaryImage(1 - img.bits)


def render_gray(img: BinaryImage) -> GrayImage:
    """Render ink as intensity 0 and background as 255."""
    return GrayImage(np.where(img.bits == 1, 0, 255).astype(np.uint8))


def _bounding_box(bits: np.ndarray) -> tuple[int, int, int, int]:
    rows = np.flatnonzero(bits.any(axis=1))
    cols = np.flatnonzero(bits.any(axis=0))
    return rows[0], rows[-1] + 1, cols[0], cols[-1] + 1


def _resample_nn(crop: np.ndarray, size: int) -> np.ndarray:
    ri = (np.arange(size) * crop.shape[0] // size).astype(np.intp)
    ci = (np.arange(size) * crop.shape[1] // size).astype(np.intp)
    return crop[np.ix_(ri, ci)]


def _project_foreground(crop: np.ndarray, size: int) -> np.ndarray:
    # Downscale fallback: map every ink pixel forward so none can vanish.
    out = np.zeros((size, size), dtype=np.uint8)
    rs, cs = np.nonzero(crop)
    out[rs * size // crop.shape[0], cs * size // crop.shape[1]] = 1
    return out


def normalize(img: BinaryImage) -> BinaryImage:
    """Crop to the ink bounding box and stretch to 32x32, nearest-neighbor.

    The result is a fixed point: ink touches all four frame edges, so
    normalizing again returns an identical image. Aspect ratio is not
    preserved. Raises BlankImageError when the input has no ink.
    """
    size = NORMALIZED_SIZE
    bits = img.bits
    if not bits.any():
        raise BlankImageError("cannot normalize an image with no foreground pixels")
    # Nearest-neighbor downscale of a source wider than the frame can skip the
    # boundary rows/cols of the bounding box, so crop-and-resample is repeated
    # until the crop is exactly the tight 32x32 frame. Sources at most 32 wide
    # resample surjectively, which makes the second pass a guaranteed fixed
    # point; the loop bound is a safety net, not a tuning knob.
    for _ in range(4):
        r0, r1, c0, c1 = _bounding_box(bits)
        crop = bits[r0:r1, c0:c1]
        if crop.shape == (size, size) and crop.shape == bits.shape:
            return BinaryImage(crop)
        resized = _resample_nn(crop, size)
        if not resized.any():
            resized = _project_foreground(crop, size)
        bits = resized
    raise AssertionError("normalize failed to reach its fixed point")
