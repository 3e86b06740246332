"""Evaluation protocols: train/test folds over a feature-extracted dataset."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from palmtex import __version__
from palmtex.classify import CLASSIFIERS, Gallery, build_templates, learn_weights
from palmtex.dataset import RawSample, SplitSpec, iter_persons, splits
from palmtex.pipeline import FeatureConfig, MultispectralSample, extract_sample

log = logging.getLogger(__name__)

WEIGHT_LABELS = {"uniform": "unweighted", "per_row_accuracy": "weighted"}
# Published accuracies (%) of competing multispectral palmprint methods, for side-by-side plots.
REFERENCE_SERIES = {
    "qpca": {6: 98.13},
    "hybrid_feature": {4: 98.08, 5: 98.45, 6: 98.88},
    "statistical_wavelet_mdc": {4: 99.65, 5: 99.77, 6: 100.0},
}


def _extract_one(args):
    rs, config = args
    return extract_sample(rs.person_id, rs.sample_index, rs.images, config)


def extract_all(raw: Sequence[RawSample], config: FeatureConfig = FeatureConfig(), threads: int = 1) -> list:
    """Feature-extract every raw sample, preserving input order."""
    jobs = [(rs, config) for rs in raw]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_extract_one, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    return [_extract_one(j) for j in jobs]


def by_person(samples: Sequence[MultispectralSample]) -> dict:
    grouped: dict = {}
    for s in samples:
        grouped.setdefault(s.person_id, []).append(s)
    for pid in grouped:
        grouped[pid].sort(key=lambda s: s.sample_index)
    counts = {len(v) for v in grouped.values()}
    if len(counts) != 1:
        raise ValueError(f"persons have unequal sample counts: {sorted(counts)}")
    return dict(sorted(grouped.items()))


@dataclass
class FoldResult:
    train: tuple
    correct: int
    total: int
    latencies: list

    @property
    def accuracy(self) -> float:
        return self.correct / self.total


def run_fold(persons: dict, fold, classifier: str, weight_mode: str, weights_cache: dict | None = None) -> FoldResult:
    train_idx, test_idx = fold
    training = {pid: [samples[i] for i in train_idx] for pid, samples in persons.items()}
    key = (tuple(train_idx), weight_mode)
    if weights_cache is not None and key in weights_cache:
        wts = weights_cache[key]
    else:
        wts = learn_weights(training, weight_mode)
        if weights_cache is not None:
            weights_cache[key] = wts
    gallery = Gallery(build_templates(s for group in training.values() for s in group))
    identify = CLASSIFIERS[classifier]
    correct, latencies = 0, []
    for pid, samples in persons.items():
        for i in test_idx:
            res = identify(samples[i], gallery, wts)
            correct += res.predicted_id == pid
            latencies.append(res.elapsed)
    return FoldResult(tuple(train_idx), correct, len(persons) * len(test_idx), latencies)


def cell_split(scheme: str, classifier: str, train_count: int, repeats: int, seed: int) -> SplitSpec:
    """Resolve the split for one grid cell.

    The ``mixed`` scheme averages random repeats for voting and walks circular
    adjacent windows for minimum distance.
    """
    if scheme == "mixed":
        scheme = "random_repeats" if classifier == "wmv" else "circular_adjacent"
    return SplitSpec(train_count, scheme, repeats, seed)


def evaluate_grid(
    samples: Sequence[MultispectralSample],
    train_counts: Sequence[int],
    classifiers: Sequence[str] = ("mdc", "wmv"),
    weight_modes: Sequence[str] = ("uniform", "per_row_accuracy"),
    scheme: str = "mixed",
    repeats: int = 10,
    seed: int = 0,
) -> list[dict]:
    persons = by_person(samples)
    n_samples = len(next(iter(persons.values())))
    for m in train_counts:
        if not 1 <= m < n_samples:
            raise ValueError(f"train count {m} leaves no test samples out of {n_samples}")
    for c in classifiers:
        if c not in CLASSIFIERS:
            raise ValueError(f"unknown classifier {c!r}")
    cache: dict = {}
    cells = []
    for m in train_counts:
        for clf in classifiers:
            spec = cell_split(scheme, clf, m, repeats, seed)
            folds = splits(n_samples, spec)
            for mode in weight_modes:
                t0 = time.perf_counter()
                results = [run_fold(persons, f, clf, mode, cache) for f in folds]
                correct = sum(r.correct for r in results)
                total = sum(r.total for r in results)
                latencies = [x for r in results for x in r.latencies]
                cell = {
                    "train_count": m,
                    "train_fraction": f"{m}/{n_samples}",
                    "classifier": clf,
                    "weight_mode": mode,
                    "scheme": spec.scheme,
                    "folds": [
                        {"train": list(r.train), "correct": r.correct, "total": r.total, "accuracy": r.accuracy}
                        for r in results
                    ],
                    "mean_accuracy": float(np.mean([r.accuracy for r in results])),
                    "misidentifications": total - correct,
                    "tests": total,
                    "mean_latency_s": float(np.mean(latencies)),
                }
                cells.append(cell)
                log.info(
                    "M=%d %s/%s: accuracy %.4f over %d folds (%.1fs)",
                    m, clf, mode, cell["mean_accuracy"], len(folds), time.perf_counter() - t0,
                )
    return cells


def build_report(cells: list[dict], config: dict, dataset: dict, extraction_s_per_image: float | None = None) -> dict:
    return {
        "tool": "palmtex",
        "version": __version__,
        "config": config,
        "dataset": dataset,
        "feature_extraction_s_per_image": extraction_s_per_image,
        "cells": cells,
    }


LATENCY_KEYS = ("mean_latency_s", "feature_extraction_s_per_image")


def strip_latency(report: dict) -> dict:
    """Copy of ``report`` without wall-clock fields, for reproducibility checks."""
    out = {k: v for k, v in report.items() if k not in LATENCY_KEYS}
    out["cells"] = [{k: v for k, v in c.items() if k not in LATENCY_KEYS} for c in report["cells"]]
    return out


def table_rows(cells: list[dict]) -> tuple[list[str], list[list]]:
    """Grid with one row per train fraction and one column per (classifier, weighting)."""
    columns = []
    for c in cells:
        col = f"{c['classifier']}_{WEIGHT_LABELS[c['weight_mode']]}"
        if col not in columns:
            columns.append(col)
    fractions = []
    for c in cells:
        if c["train_fraction"] not in fractions:
            fractions.append(c["train_fraction"])
    lookup = {(c["train_fraction"], f"{c['classifier']}_{WEIGHT_LABELS[c['weight_mode']]}"): c for c in cells}
    rows = []
    for fr in fractions:
        rows.append([fr] + [f"{lookup[(fr, col)]['mean_accuracy']:.6f}" for col in columns])
    return ["train_fraction"] + columns, rows


def write_table_csv(cells: list[dict], path) -> None:
    header, rows = table_rows(cells)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_plot_data(cells: list[dict], path) -> None:
    """Long-format series: our measured cells plus reference methods, accuracies in percent."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "train_count", "accuracy_percent", "source"])
        for c in cells:
            method = f"{c['classifier']}_{WEIGHT_LABELS[c['weight_mode']]}"
            w.writerow([method, c["train_count"], f"{100 * c['mean_accuracy']:.4f}", "measured"])
        for method, series in REFERENCE_SERIES.items():
            for m, acc in sorted(series.items()):
                w.writerow([method, m, f"{acc:.2f}", "reference"])
