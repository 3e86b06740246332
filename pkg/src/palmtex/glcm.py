"""Gray-level quantization and directed co-occurrence matrices.

Images are plain 2D ``uint8`` numpy arrays indexed ``[row, col]``. An offset
``(dx, dy)`` pairs the pixel at ``(row, col)`` with the one at
``(row + dy, col + dx)``, so ``(1, 0)`` is the right-hand neighbour in the
same row. Pairs whose partner falls outside the image are skipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

DEFAULT_STEP = 8


class Offset(NamedTuple):
    dx: int
    dy: int

    @property
    def angle(self) -> float:
        """Direction of the offset in radians, ``atan2(dy, dx)``."""
        return math.atan2(self.dy, self.dx)

    @classmethod
    def parse(cls, text: str) -> "Offset":
        dx, dy = (int(part) for part in text.split(","))
        return validate_offset(cls(dx, dy))


HORIZONTAL = Offset(1, 0)


def validate_offset(off: Offset) -> Offset:
    if off.dx == 0 and off.dy == 0:
        raise ValueError("offset (0, 0) pairs every pixel with itself")
    return off


@dataclass(frozen=True)
class QuantizedImage:
    pixels: np.ndarray
    levels: int

    def __post_init__(self):
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise ValueError("quantized image must be a nonempty 2D array")
        if self.levels < 1:
            raise ValueError("levels must be positive")
        if self.pixels.min() < 0 or self.pixels.max() >= self.levels:
            raise ValueError(f"pixel levels must lie in [0, {self.levels})")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class CooccurrenceMatrix:
    counts: np.ndarray

    @property
    def levels(self) -> int:
        return self.counts.shape[0]

    @property
    def total_pairs(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class NormalizedCooccurrence:
    probs: np.ndarray

    @property
    def levels(self) -> int:
        return self.probs.shape[0]


class Marginals(NamedTuple):
    """Marginal distributions of a normalized co-occurrence matrix.

    ``p_sum[k - 2]`` holds the mass on ``i + j == k`` for 1-based levels,
    ``k = 2 .. 2*Ng``; ``p_diff[k]`` holds the mass on ``|i - j| == k``.
    """

    p_x: np.ndarray
    p_y: np.ndarray
    p_sum: np.ndarray
    p_diff: np.ndarray


def as_gray(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a nonempty 2D grayscale image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("gray intensities must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def num_levels(step: int) -> int:
    return -(-256 // step)


def quantize(img, step: int = DEFAULT_STEP) -> QuantizedImage:
    """Map intensities to ``floor(intensity / step)``, giving ``ceil(256 / step)`` levels."""
    if not 1 <= step <= 256:
        raise ValueError(f"quantization step must be in [1, 256], got {step}")
    gray = as_gray(img)
    return QuantizedImage(gray.astype(np.intp) // step, num_levels(step))


def _pair_slices(shape: tuple[int, ...], off: Offset):
    """Source and displaced views over the last two axes; None if no pair fits."""
    h, w = shape[-2], shape[-1]
    dx, dy = off
    if abs(dx) >= w or abs(dy) >= h:
        return None
    rows_src = slice(max(0, -dy), h - max(0, dy))
    cols_src = slice(max(0, -dx), w - max(0, dx))
    rows_dst = slice(max(0, dy), h - max(0, -dy))
    cols_dst = slice(max(0, dx), w - max(0, -dx))
    return (..., rows_src, cols_src), (..., rows_dst, cols_dst)


def cooccurrence(img: QuantizedImage, off: Offset = HORIZONTAL) -> CooccurrenceMatrix:
    validate_offset(off)
    counts = cooccurrence_stack(img.pixels[None], img.levels, off)[0]
    return CooccurrenceMatrix(counts)


def cooccurrence_stack(levels_stack: np.ndarray, n_levels: int, off: Offset = HORIZONTAL) -> np.ndarray:
    """Directed co-occurrence counts for a stack of equally sized quantized blocks.

    Args:
        levels_stack: integer array of shape ``(B, h, w)`` with values in ``[0, n_levels)``.
        n_levels: number of gray levels ``Ng``.
        off: pixel offset.

    Returns:
        ``int64`` array of shape ``(B, Ng, Ng)``.
    """
    stack = np.asarray(levels_stack)
    n_blocks = stack.shape[0]
    counts = np.zeros((n_blocks, n_levels, n_levels), dtype=np.int64)
    sl = _pair_slices(stack.shape, off)
    if sl is None:
        return counts
    src = stack[sl[0]].reshape(n_blocks, -1).astype(np.int64)
    dst = stack[sl[1]].reshape(n_blocks, -1).astype(np.int64)
    block_base = (np.arange(n_blocks, dtype=np.int64) * n_levels * n_levels)[:, None]
    flat = (block_base + src * n_levels + dst).ravel()
    counts += np.bincount(flat, minlength=n_blocks * n_levels * n_levels).reshape(counts.shape)
    return counts


def normalize(glcm: CooccurrenceMatrix) -> NormalizedCooccurrence:
    total = glcm.total_pairs
    if total <= 0:
        raise ValueError("co-occurrence matrix has no pairs; cannot normalize")
    return NormalizedCooccurrence(glcm.counts / total)


def marginals(p: NormalizedCooccurrence) -> Marginals:
    probs = p.probs
    n = probs.shape[0]
    p_x = probs.sum(axis=1)
    p_y = probs.sum(axis=0)
    # i + j == k (1-based) <=> i0 + j0 == k - 2, so anti-diagonal sums land at index k - 2
    flipped = probs[:, ::-1]
    p_sum = np.array([np.trace(flipped, offset=n - 1 - s) for s in range(2 * n - 1)])
    p_diff = np.empty(n)
    p_diff[0] = np.trace(probs)
    for k in range(1, n):
        p_diff[k] = np.trace(probs, offset=k) + np.trace(probs, offset=-k)
    return Marginals(p_x, p_y, p_sum, p_diff)
