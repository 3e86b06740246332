"""Block tiling and per-image feature matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from palmtex import glcm
from palmtex.haralick import NUM_FEATURES, features_stack

SPECTRA = ("red", "green", "blue", "nir")
DEFAULT_BLOCK_SIZE = 16


@dataclass(frozen=True)
class FeatureConfig:
    block_size: int = DEFAULT_BLOCK_SIZE
    quant_step: int = glcm.DEFAULT_STEP
    offset: glcm.Offset = field(default_factory=lambda: glcm.HORIZONTAL)

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError("block size must be positive")
        if not 1 <= self.quant_step <= 256:
            raise ValueError("quantization step must be in [1, 256]")
        glcm.validate_offset(glcm.Offset(*self.offset))

    def to_dict(self) -> dict:
        return {"block_size": self.block_size, "quant_step": self.quant_step, "offset": list(self.offset)}


@dataclass
class MultispectralSample:
    """Four 14 x M feature matrices of one palm capture, keyed by spectrum."""

    person_id: Hashable
    sample_index: int
    per_spectrum: Mapping[str, np.ndarray]

    def __post_init__(self):
        missing = [s for s in SPECTRA if s not in self.per_spectrum]
        if missing:
            raise ValueError(f"sample of {self.person_id!r} lacks spectra: {', '.join(missing)}")
        shapes = {np.shape(self.per_spectrum[s]) for s in SPECTRA}
        if len(shapes) != 1:
            raise ValueError(f"spectra of {self.person_id!r} disagree in shape: {sorted(shapes)}")

    def stacked(self) -> np.ndarray:
        """Array of shape ``(4, 14, M)`` in :data:`SPECTRA` order."""
        return np.stack([np.asarray(self.per_spectrum[s], dtype=float) for s in SPECTRA])


def _check_tiling(shape, block_size):
    h, w = shape
    if h % block_size or w % block_size:
        raise ValueError(f"block size {block_size} does not divide image size {w}x{h}")


def tile(img, block_size: int = DEFAULT_BLOCK_SIZE) -> np.ndarray:
    """Split an image into non-overlapping square blocks in row-major tile order.

    Returns an array of shape ``(M, N, N)`` with ``M = h * w / N**2``.
    """
    arr = glcm.as_gray(img)
    _check_tiling(arr.shape, block_size)
    h, w = arr.shape
    n = block_size
    return arr.reshape(h // n, n, w // n, n).swapaxes(1, 2).reshape(-1, n, n)


def untile(blocks: np.ndarray, height: int, width: int) -> np.ndarray:
    n = blocks.shape[-1]
    return blocks.reshape(height // n, width // n, n, n).swapaxes(1, 2).reshape(height, width)


def extract_feature_matrix(img, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Feature matrix of shape ``(14, M)``; column ``j`` describes block ``j``."""
    blocks = tile(img, config.block_size)
    n_levels = glcm.num_levels(config.quant_step)
    levels = blocks.astype(np.intp) // config.quant_step
    counts = glcm.cooccurrence_stack(levels, n_levels, glcm.Offset(*config.offset))
    totals = counts.sum(axis=(1, 2))
    if np.any(totals == 0):
        raise ValueError(f"offset {tuple(config.offset)} leaves no pixel pairs inside a {config.block_size}-pixel block")
    probs = counts / totals[:, None, None]
    return features_stack(probs).T.copy()


def mean_feature_matrix(samples: Sequence[np.ndarray]) -> np.ndarray:
    if len(samples) == 0:
        raise ValueError("cannot average an empty set of feature matrices")
    shapes = {np.shape(s) for s in samples}
    if len(shapes) != 1:
        raise ValueError(f"feature matrices disagree in shape: {sorted(shapes)}")
    return np.mean(np.stack(samples), axis=0)


def extract_sample(
    person_id: Hashable,
    sample_index: int,
    images: Mapping[str, np.ndarray],
    config: FeatureConfig = FeatureConfig(),
) -> MultispectralSample:
    missing = [s for s in SPECTRA if s not in images]
    if missing:
        raise ValueError(f"missing spectrum image(s): {', '.join(missing)}")
    return MultispectralSample(
        person_id, sample_index, {s: extract_feature_matrix(images[s], config) for s in SPECTRA}
    )


def feature_shape(height: int, width: int, block_size: int = DEFAULT_BLOCK_SIZE) -> tuple[int, int]:
    _check_tiling((height, width), block_size)
    return NUM_FEATURES, height * width // block_size**2
