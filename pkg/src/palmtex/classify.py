"""Minimum-distance and weighted-majority-voting identification over multispectral templates.

Ties are broken towards the lowest person id, both for individual votes and
for the final decision, so person ids in one gallery must be mutually
comparable.
"""

from __future__ import annotations

import time
from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from palmtex.haralick import NUM_FEATURES
from palmtex.pipeline import SPECTRA, MultispectralSample, mean_feature_matrix

ALPHA_FLOOR = 1e-12
WEIGHT_MODES = ("uniform", "per_row_accuracy")


@dataclass(frozen=True)
class ClassifierWeights:
    w: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        alpha = np.asarray(self.alpha, dtype=float)
        if w.shape != (NUM_FEATURES,) or alpha.shape != (NUM_FEATURES,):
            raise ValueError(f"weights must have {NUM_FEATURES} entries each")
        if np.any(w < 0) or not np.any(w > 0):
            raise ValueError("feature weights must be nonnegative with at least one positive")
        if np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
            raise ValueError("normalizing factors must be positive and finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def uniform(cls) -> "ClassifierWeights":
        return cls(np.ones(NUM_FEATURES), np.ones(NUM_FEATURES))

    @property
    def row_weights(self) -> np.ndarray:
        return self.w * self.alpha


@dataclass
class PersonTemplate:
    person_id: Hashable
    per_spectrum: Mapping[str, np.ndarray]

    def stacked(self) -> np.ndarray:
        return np.stack([np.asarray(self.per_spectrum[s], dtype=float) for s in SPECTRA])


@dataclass
class IdentificationResult:
    predicted_id: Hashable
    scores: dict
    elapsed: float

    def top(self, k: int = 5, *, largest: bool) -> list[tuple[Hashable, float]]:
        ranked = sorted(self.scores.items(), key=lambda kv: -kv[1] if largest else kv[1])
        return ranked[:k]


class Gallery:
    """Templates sorted by person id and stacked into one ``(P, 4, 14, M)`` array."""

    def __init__(self, templates: Iterable[PersonTemplate]):
        templates = sorted(templates, key=lambda t: t.person_id)
        if not templates:
            raise ValueError("at least one template is required")
        ids = [t.person_id for t in templates]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate person ids in template set")
        self.templates = templates
        self.ids = ids
        self.matrices = np.stack([t.stacked() for t in templates])

    def __len__(self):
        return len(self.ids)


def _as_gallery(templates) -> Gallery:
    return templates if isinstance(templates, Gallery) else Gallery(templates)


def _test_array(test, gallery: Gallery) -> np.ndarray:
    arr = test.stacked() if isinstance(test, MultispectralSample) else np.asarray(test, dtype=float)
    if arr.shape != gallery.matrices.shape[1:]:
        raise ValueError(f"test features have shape {arr.shape}, templates {gallery.matrices.shape[1:]}")
    return arr


def build_templates(samples: Iterable[MultispectralSample]) -> list[PersonTemplate]:
    """Average each person's samples spectrum by spectrum."""
    grouped = defaultdict(list)
    for s in samples:
        grouped[s.person_id].append(s)
    return [
        PersonTemplate(pid, {sp: mean_feature_matrix([s.per_spectrum[sp] for s in group]) for sp in SPECTRA})
        for pid, group in sorted(grouped.items(), key=lambda kv: kv[0])
    ]


def mdc_distance(test: MultispectralSample, tpl: PersonTemplate, wts: ClassifierWeights) -> float:
    a, b = test.stacked(), tpl.stacked()
    if a.shape != b.shape:
        raise ValueError(f"feature shapes differ: {a.shape} vs {b.shape}")
    per_row = ((a - b) ** 2).sum(axis=2)
    return float((per_row @ wts.row_weights).mean())


def _mdc_distances(arr, gallery, wts):
    per_row = ((gallery.matrices - arr[None]) ** 2).sum(axis=3)
    return (per_row @ wts.row_weights).mean(axis=1)


def mdc_identify(test, templates, wts: ClassifierWeights) -> IdentificationResult:
    start = time.perf_counter()
    gallery = _as_gallery(templates)
    dist = _mdc_distances(_test_array(test, gallery), gallery, wts)
    best = int(np.argmin(dist))
    elapsed = time.perf_counter() - start
    return IdentificationResult(gallery.ids[best], dict(zip(gallery.ids, dist.tolist())), elapsed)


def wmv_votes(test, templates) -> np.ndarray:
    """Index of the winning template for each (spectrum, feature row) voter, shape ``(4, 14)``."""
    gallery = _as_gallery(templates)
    arr = _test_array(test, gallery)
    row_dist = np.sqrt(((gallery.matrices - arr[None]) ** 2).sum(axis=3))
    return np.argmin(row_dist, axis=0)


def wmv_identify(test, templates, wts: ClassifierWeights) -> IdentificationResult:
    """Weighted vote over one voter per feature row and spectrum.

    Only ``wts.w`` matters here: a per-row scale cannot change which template
    is nearest along that row.
    """
    start = time.perf_counter()
    gallery = _as_gallery(templates)
    winners = wmv_votes(test, gallery)
    scores = np.zeros(len(gallery))
    np.add.at(scores, winners, np.broadcast_to(wts.w, winners.shape))
    best = int(np.argmax(scores))
    elapsed = time.perf_counter() - start
    return IdentificationResult(gallery.ids[best], dict(zip(gallery.ids, scores.tolist())), elapsed)


CLASSIFIERS = {"mdc": mdc_identify, "wmv": wmv_identify}


def normalizing_factors(samples: Sequence[MultispectralSample]) -> np.ndarray:
    stacked = np.stack([s.stacked() for s in samples])
    mean_abs = np.abs(stacked).mean(axis=(0, 1, 3))
    return 1.0 / np.maximum(mean_abs, ALPHA_FLOOR)


def row_accuracies(training: Mapping[Hashable, Sequence[MultispectralSample]]) -> np.ndarray:
    """Leave-one-out accuracy of unweighted single-row MDC, one value per feature row.

    Each held-out sample is compared against its own person's mean over the
    remaining samples and against every other person's full mean.
    """
    ids = sorted(training)
    if any(len(training[pid]) < 2 for pid in ids):
        raise ValueError("per-row accuracy needs at least 2 training samples per person")
    data = {pid: np.stack([s.stacked() for s in training[pid]]) for pid in ids}
    sums = np.stack([data[pid].sum(axis=0) for pid in ids])
    counts = np.array([len(data[pid]) for pid in ids], dtype=float)
    means = sums / counts[:, None, None, None]
    correct = np.zeros(NUM_FEATURES)
    total = 0
    for p, pid in enumerate(ids):
        for x in data[pid]:
            tpl = means.copy()
            tpl[p] = (sums[p] - x) / (counts[p] - 1)
            dist = ((tpl - x[None]) ** 2).sum(axis=3).mean(axis=1)
            correct += np.argmin(dist, axis=0) == p
            total += 1
    return correct / total


def learn_weights(
    training: Mapping[Hashable, Sequence[MultispectralSample]], mode: str = "uniform"
) -> ClassifierWeights:
    if mode not in WEIGHT_MODES:
        raise ValueError(f"unknown weight mode {mode!r}; expected one of {WEIGHT_MODES}")
    samples = [s for pid in sorted(training) for s in training[pid]]
    if not samples:
        raise ValueError("no training samples")
    alpha = normalizing_factors(samples)
    if mode == "uniform":
        return ClassifierWeights(np.ones(NUM_FEATURES), alpha)
    w = row_accuracies(training)
    if not np.any(w > 0):
        w = np.ones(NUM_FEATURES)
    return ClassifierWeights(w, alpha)


def group_by_person(samples: Iterable[MultispectralSample]) -> dict:
    grouped = defaultdict(list)
    for s in samples:
        grouped[s.person_id].append(s)
    return dict(grouped)
