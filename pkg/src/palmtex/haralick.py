"""The 14 Haralick textural features of a normalized co-occurrence matrix.

All logarithms are natural and ``0 * log(0)`` is taken as 0. Gray levels enter
the moment-based features 1-based, so sum-of-levels indices run ``2 .. 2*Ng``.

Degenerate inputs never raise. When either marginal has a single support level
the correlation is reported as 0; when both marginal entropies vanish the first
information measure is 0; with fewer than two occupied rows the maximal
correlation coefficient is 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import entr, xlogy

from palmtex.glcm import NormalizedCooccurrence, marginals

NUM_FEATURES = 14


class FeatureVector(NamedTuple):
    angular_second_moment: float
    contrast: float
    correlation: float
    variance: float
    inverse_difference_moment: float
    sum_average: float
    sum_variance: float
    sum_entropy: float
    entropy: float
    difference_variance: float
    difference_entropy: float
    info_correlation_1: float
    info_correlation_2: float
    max_correlation_coeff: float


FEATURE_NAMES = FeatureVector._fields


@dataclass(frozen=True)
class Intermediates:
    mu_x: float
    mu_y: float
    sigma_x: float
    sigma_y: float
    HX: float
    HY: float
    HXY: float
    HXY1: float
    HXY2: float
    Q: np.ndarray


def intermediates(p: NormalizedCooccurrence, marg=None) -> Intermediates:
    """Means, deviations, entropies and the Q matrix of ``p``.

    ``Q`` is returned at full ``Ng x Ng`` size; rows with ``p_x(i) == 0`` and
    terms with ``p_y(k) == 0`` contribute nothing.
    """
    probs = p.probs
    if marg is None:
        marg = marginals(p)
    p_x, p_y = marg.p_x, marg.p_y
    idx = np.arange(1, probs.shape[0] + 1)
    mu_x = float(idx @ p_x)
    mu_y = float(idx @ p_y)
    outer = np.outer(p_x, p_y)
    return Intermediates(
        mu_x=mu_x,
        mu_y=mu_y,
        sigma_x=float(np.sqrt(((idx - mu_x) ** 2) @ p_x)),
        sigma_y=float(np.sqrt(((idx - mu_y) ** 2) @ p_y)),
        HX=float(entr(p_x).sum()),
        HY=float(entr(p_y).sum()),
        HXY=float(entr(probs).sum()),
        HXY1=float(-xlogy(probs, np.where(probs > 0, outer, 1.0)).sum()),
        HXY2=float(entr(outer).sum()),
        Q=_q_matrix(probs, p_x, p_y),
    )


def _q_matrix(probs, p_x, p_y):
    inv_x = np.divide(1.0, p_x, out=np.zeros_like(p_x), where=p_x > 0)
    inv_y = np.divide(1.0, p_y, out=np.zeros_like(p_y), where=p_y > 0)
    return inv_x[:, None] * ((probs * inv_y) @ probs.T)


def features(p: NormalizedCooccurrence) -> FeatureVector:
    return FeatureVector(*features_stack(p.probs[None])[0].tolist())


@lru_cache(maxsize=8)
def _index_tables(n: int):
    i = np.arange(1, n + 1, dtype=float)
    diff = np.abs(i[:, None] - i[None, :]).astype(np.intp)
    total = (i[:, None] + i[None, :]).astype(np.intp) - 2
    sum_onehot = np.zeros((n * n, 2 * n - 1))
    sum_onehot[np.arange(n * n), total.ravel()] = 1.0
    diff_onehot = np.zeros((n * n, n))
    diff_onehot[np.arange(n * n), diff.ravel()] = 1.0
    idm = 1.0 / (1.0 + (i[:, None] - i[None, :]) ** 2)
    return i, sum_onehot, diff_onehot, idm


def features_stack(probs: np.ndarray) -> np.ndarray:
    """Evaluate all 14 features for a stack of normalized matrices.

    Args:
        probs: array of shape ``(B, Ng, Ng)``, each slice summing to 1.

    Returns:
        Array of shape ``(B, 14)`` in :data:`FEATURE_NAMES` order.
    """
    probs = np.asarray(probs, dtype=float)
    n_blocks, n = probs.shape[0], probs.shape[1]
    i, sum_onehot, diff_onehot, idm = _index_tables(n)
    flat = probs.reshape(n_blocks, -1)

    p_x = probs.sum(axis=2)
    p_y = probs.sum(axis=1)
    p_sum = flat @ sum_onehot
    p_diff = flat @ diff_onehot
    k_sum = np.arange(2, 2 * n + 1, dtype=float)
    k_diff = np.arange(n, dtype=float)

    mu_x = p_x @ i
    mu_y = p_y @ i
    cx = i[None, :] - mu_x[:, None]
    cy = i[None, :] - mu_y[:, None]
    var_x = (cx**2 * p_x).sum(axis=1)
    var_y = (cy**2 * p_y).sum(axis=1)
    cov = np.einsum("bi,bij,bj->b", cx, probs, cy)
    # a single occupied level means zero spread; test support rather than a rounded variance
    flat_x = np.count_nonzero(p_x, axis=1) < 2
    flat_y = np.count_nonzero(p_y, axis=1) < 2
    degenerate = flat_x | flat_y | (var_x * var_y == 0)
    denom = np.sqrt(np.where(degenerate, 1.0, var_x * var_y))
    correlation = np.where(degenerate, 0.0, cov / denom)

    sum_average = p_sum @ k_sum
    sum_variance = ((k_sum[None, :] - sum_average[:, None]) ** 2 * p_sum).sum(axis=1)
    diff_mean = p_diff @ k_diff
    diff_variance = ((k_diff[None, :] - diff_mean[:, None]) ** 2 * p_diff).sum(axis=1)

    hx = entr(p_x).sum(axis=1)
    hy = entr(p_y).sum(axis=1)
    hxy = entr(flat).sum(axis=1)
    outer = p_x[:, :, None] * p_y[:, None, :]
    hxy1 = -xlogy(probs, np.where(probs > 0, outer, 1.0)).sum(axis=(1, 2))
    hxy2 = entr(outer).sum(axis=(1, 2))
    h_max = np.maximum(hx, hy)
    info1 = np.where(h_max > 0, (hxy - hxy1) / np.where(h_max > 0, h_max, 1.0), 0.0)
    info2 = np.sqrt(1.0 - np.exp(-2.0 * np.maximum(hxy2 - hxy, 0.0)))

    out = np.empty((n_blocks, NUM_FEATURES))
    out[:, 0] = (flat**2).sum(axis=1)
    out[:, 1] = p_diff @ (k_diff**2)
    out[:, 2] = correlation
    out[:, 3] = var_x
    out[:, 4] = flat @ idm.ravel()
    out[:, 5] = sum_average
    out[:, 6] = sum_variance
    out[:, 7] = entr(p_sum).sum(axis=1)
    out[:, 8] = hxy
    out[:, 9] = diff_variance
    out[:, 10] = entr(p_diff).sum(axis=1)
    out[:, 11] = info1
    out[:, 12] = info2
    out[:, 13] = _max_correlation(probs, p_x, p_y)
    return out


def _max_correlation(probs, p_x, p_y):
    if probs.shape[1] < 2:
        return np.zeros(probs.shape[0])
    # Q = Dx^-1 P Dy^-1 P^T is similar to the symmetric PSD matrix
    # Dx^-1/2 P Dy^-1 P^T Dx^-1/2 on the occupied rows; unoccupied rows only add zero eigenvalues.
    rs_x = np.divide(1.0, np.sqrt(p_x), out=np.zeros_like(p_x), where=p_x > 0)
    inv_y = np.divide(1.0, p_y, out=np.zeros_like(p_y), where=p_y > 0)
    scaled = probs * rs_x[:, :, None]
    sym = np.einsum("bik,bk,bjk->bij", scaled, inv_y, scaled)
    eig = np.linalg.eigvalsh(sym)
    second = -np.sort(-np.abs(eig), axis=1)[:, 1]
    active = np.count_nonzero(p_x, axis=1)
    second = np.where(active >= 2, np.clip(second, 0.0, 1.0), 0.0)
    return np.sqrt(second)
