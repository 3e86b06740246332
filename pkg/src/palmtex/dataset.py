"""Multispectral palmprint datasets: on-disk layout, synthetic generation and splits.

On disk a dataset lives under ``root/<person_id>/<spectrum>/<sample>.<ext>``
with spectrum in ``red, green, blue, nir``, sample numbered from 1 and ext
``pgm`` or ``png`` (8-bit grayscale). A JSON-lines manifest can replace the
directory scan; each line looks like::

    {"person_id": "001", "red": ["001/r/01.png", ...], "green": [...], "blue": [...], "nir": [...]}

with paths relative to the dataset root.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image

from palmtex.pipeline import SPECTRA

log = logging.getLogger(__name__)

SAMPLES_PER_PERSON = 12
DEFAULT_IMAGE_SIZE = 128
IMAGE_EXTENSIONS = (".pgm", ".png")


class DatasetError(Exception):
    pass


@dataclass
class PersonFiles:
    person_id: str
    files: dict  # spectrum -> list of Paths, ordered by sample index


@dataclass
class DatasetManifest:
    root: Path
    persons: list


@dataclass
class RawSample:
    person_id: str
    sample_index: int  # 1-based
    images: dict  # spectrum -> uint8 array


def scan_layout(root) -> DatasetManifest:
    """Build a manifest from the default directory layout."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    persons = []
    for person_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        files = {}
        for spectrum in SPECTRA:
            sdir = person_dir / spectrum
            if not sdir.is_dir():
                raise DatasetError(f"{sdir}: missing spectrum directory")
            found = [f for f in sdir.iterdir() if f.suffix.lower() in IMAGE_EXTENSIONS]
            try:
                files[spectrum] = sorted(found, key=lambda f: int(f.stem))
            except ValueError as exc:
                raise DatasetError(f"{sdir}: image names must be sample numbers ({exc})") from exc
        persons.append(PersonFiles(person_dir.name, files))
    if not persons:
        raise DatasetError(f"{root}: no person directories found")
    return DatasetManifest(root, persons)


def read_manifest(path, root=None) -> DatasetManifest:
    path = Path(path)
    root = Path(root) if root is not None else path.parent
    persons = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                files = {s: [root / p for p in rec[s]] for s in SPECTRA}
                persons.append(PersonFiles(str(rec["person_id"]), files))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DatasetError(f"{path}:{lineno}: malformed manifest record ({exc})") from exc
    if not persons:
        raise DatasetError(f"{path}: manifest lists no persons")
    return DatasetManifest(root, persons)


def write_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for person in manifest.persons:
            rec = {"person_id": person.person_id}
            for s in SPECTRA:
                rec[s] = [Path(f).relative_to(manifest.root).as_posix() for f in person.files[s]]
            fh.write(json.dumps(rec) + "\n")


def read_image(path, expected_size=(DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE)) -> np.ndarray:
    """Decode an 8-bit grayscale image; ``expected_size`` is ``(height, width)`` or None."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"{path}: file not found")
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                raise DatasetError(f"{path}: expected 8-bit grayscale, got image mode {im.mode!r}")
            arr = np.array(im, dtype=np.uint8)
    except OSError as exc:
        raise DatasetError(f"{path}: cannot decode image ({exc})") from exc
    if expected_size is not None and arr.shape != tuple(expected_size):
        h, w = expected_size
        raise DatasetError(f"{path}: image is {arr.shape[1]}x{arr.shape[0]}, expected {w}x{h}")
    return arr


def write_image(path, img: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="L").save(path)


def load(
    manifest: DatasetManifest,
    expected_size=(DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE),
    samples_per_person: int = SAMPLES_PER_PERSON,
) -> list[RawSample]:
    """Decode every image named by ``manifest``, ordered by person id then sample index."""
    out = []
    for person in sorted(manifest.persons, key=lambda p: p.person_id):
        for s in SPECTRA:
            n = len(person.files.get(s, []))
            if n != samples_per_person:
                raise DatasetError(
                    f"person {person.person_id!r}, spectrum {s}: {n} samples, expected {samples_per_person}"
                )
        for k in range(samples_per_person):
            images = {s: read_image(person.files[s][k], expected_size) for s in SPECTRA}
            out.append(RawSample(person.person_id, k + 1, images))
    log.info("loaded %d multispectral samples from %s", len(out), manifest.root)
    return out


def load_dir(root, manifest=None, **kwargs) -> list[RawSample]:
    m = read_manifest(manifest, root) if manifest is not None else scan_layout(root)
    return load(m, **kwargs)


@dataclass(frozen=True)
class SynthConfig:
    """Seeded stand-in for a multispectral palmprint collection.

    Every (person, spectrum) pair owns a sum of two oriented sinusoidal gratings
    with its own orientations, spatial frequencies, brightness and contrast.
    Each capture perturbs orientation, frequency, contrast and phase, and adds
    Gaussian pixel noise. Raising the jitter or noise knobs makes the
    persons harder to tell apart.
    """

    num_persons: int = 50
    samples_per_person: int = SAMPLES_PER_PERSON
    image_size: int = DEFAULT_IMAGE_SIZE
    freq_range: tuple = (0.06, 0.30)  # cycles per pixel
    orientation_jitter: float = 0.02  # radians, std
    frequency_jitter: float = 0.01  # relative, std
    contrast_jitter: float = 0.05  # relative, std
    phase_jitter: float = 0.3  # radians, std; ROIs are registered so phase is mostly per person
    noise: float = 6.0  # gray levels, std
    seed: int = 0

    def __post_init__(self):
        if self.num_persons < 1 or self.samples_per_person < 1:
            raise ValueError("synthetic dataset needs at least one person and one sample")
        if self.image_size < 1:
            raise ValueError("image size must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def _person_params(rng, cfg: SynthConfig) -> dict:
    lo, hi = cfg.freq_range
    params = {}
    for s in SPECTRA:
        params[s] = {
            "theta": rng.uniform(0, np.pi, size=2),
            "freq": rng.uniform(lo, hi, size=2),
            "amp": rng.uniform(15, 55, size=2),
            "mean": rng.uniform(70, 185),
            "phase": rng.uniform(0, 2 * np.pi, size=2),
        }
    return params


def _render(rng, prm: dict, cfg: SynthConfig) -> np.ndarray:
    n = cfg.image_size
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    img = np.full((n, n), prm["mean"])
    for c in range(2):
        theta = prm["theta"][c] + rng.normal(0, cfg.orientation_jitter)
        freq = prm["freq"][c] * (1 + rng.normal(0, cfg.frequency_jitter))
        amp = prm["amp"][c] * (1 + rng.normal(0, cfg.contrast_jitter))
        phase = prm["phase"][c] + rng.normal(0, cfg.phase_jitter)
        img += amp * np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
    img += rng.normal(0, cfg.noise, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def person_id_for(index: int, num_persons: int) -> str:
    return f"{index + 1:0{max(3, len(str(num_persons)))}d}"


def synthesize(cfg: SynthConfig = SynthConfig()) -> list[RawSample]:
    """Generate the dataset; each person draws from its own seeded stream."""
    out = []
    for p in range(cfg.num_persons):
        rng = np.random.default_rng([cfg.seed, p])
        params = _person_params(rng, cfg)
        pid = person_id_for(p, cfg.num_persons)
        for k in range(cfg.samples_per_person):
            out.append(RawSample(pid, k + 1, {s: _render(rng, params[s], cfg) for s in SPECTRA}))
    return out


def write_dataset(samples: Sequence[RawSample], root, fmt: str = "png", manifest: bool = True) -> DatasetManifest:
    if fmt not in ("png", "pgm"):
        raise ValueError(f"unsupported image format {fmt!r}")
    root = Path(root)
    persons = {}
    for rs in samples:
        files = persons.setdefault(rs.person_id, {s: [] for s in SPECTRA})
        for s in SPECTRA:
            path = root / rs.person_id / s / f"{rs.sample_index:02d}.{fmt}"
            write_image(path, rs.images[s])
            files[s].append(path)
    m = DatasetManifest(root, [PersonFiles(pid, files) for pid, files in sorted(persons.items())])
    if manifest:
        write_manifest(m, root / "manifest.jsonl")
    return m


SCHEMES = ("random_repeats", "circular_adjacent")


@dataclass(frozen=True)
class SplitSpec:
    train_count: int
    scheme: str = "circular_adjacent"
    repeats: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown split scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.scheme == "random_repeats" and self.repeats < 1:
            raise ValueError("random_repeats needs at least one repeat")


Fold = tuple  # (train indices, test indices), 0-based


def splits(num_samples: int, spec: SplitSpec) -> list[Fold]:
    """Train/test folds over sample indices ``0 .. num_samples - 1``.

    ``circular_adjacent`` yields ``num_samples`` folds; fold ``k`` trains on the
    window ``k, k+1, ..., k+M-1`` taken modulo ``num_samples``.
    ``random_repeats`` draws ``repeats`` independent uniform training subsets.
    """
    m = spec.train_count
    if not 1 <= m <= num_samples - 1:
        raise ValueError(f"train count must be in [1, {num_samples - 1}] so every fold has test samples, got {m}")
    folds = []
    if spec.scheme == "circular_adjacent":
        for k in range(num_samples):
            train = sorted((k + j) % num_samples for j in range(m))
            folds.append(_fold(train, num_samples))
    else:
        rng = np.random.default_rng(spec.seed)
        for _ in range(spec.repeats):
            train = sorted(rng.choice(num_samples, size=m, replace=False).tolist())
            folds.append(_fold(train, num_samples))
    return folds


def _fold(train, n) -> Fold:
    chosen = set(train)
    return tuple(train), tuple(i for i in range(n) if i not in chosen)


def iter_persons(samples: Sequence[RawSample]) -> Iterator[tuple[str, list[RawSample]]]:
    grouped: dict = {}
    for rs in samples:
        grouped.setdefault(rs.person_id, []).append(rs)
    for pid in sorted(grouped):
        yield pid, sorted(grouped[pid], key=lambda r: r.sample_index)
