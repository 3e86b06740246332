"""Versioned binary archives for feature matrices and trained templates.

Layout::

    8-byte magic | uint32 LE header length | UTF-8 JSON header | float64 LE payload

The JSON header lists every array with its shape and byte offset into the
payload, so values round-trip bit for bit.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from palmtex.classify import ClassifierWeights, PersonTemplate
from palmtex.pipeline import SPECTRA

FEATURE_MAGIC = b"PTXFEAT\x00"
TEMPLATE_MAGIC = b"PTXTMPL\x00"
FORMAT_VERSION = 1


class ArchiveError(ValueError):
    pass


def _write(path, magic: bytes, meta: dict, arrays: list[np.ndarray]) -> None:
    entries, offset = [], 0
    for arr in arrays:
        entries.append({"shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    meta = {"format_version": FORMAT_VERSION, **meta, "arrays": entries}
    header = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read(path, magic: bytes) -> tuple[dict, list[np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:8] != magic:
        raise ArchiveError(f"{path}: not a {magic[:7].decode()} archive (bad magic header)")
    try:
        (hlen,) = struct.unpack("<I", data[8:12])
        meta = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveError(f"{path}: corrupt archive header") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise ArchiveError(f"{path}: unsupported format version {meta.get('format_version')}")
    payload = memoryview(data)[12 + hlen :]
    arrays = []
    for entry in meta["arrays"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) * 8
        start = entry["offset"]
        if start + n > len(payload):
            raise ArchiveError(f"{path}: truncated payload")
        arrays.append(np.frombuffer(payload[start : start + n], dtype="<f8").reshape(shape).astype(float))
    return meta, arrays


def save_features(path, records: list[dict], matrices: list[np.ndarray], config: dict) -> None:
    """Write feature matrices with one JSON-serializable tag dict per matrix."""
    if len(records) != len(matrices):
        raise ValueError("need exactly one tag record per matrix")
    _write(path, FEATURE_MAGIC, {"kind": "features", "config": config, "records": records}, matrices)


def load_features(path) -> tuple[list[dict], list[np.ndarray], dict]:
    meta, arrays = _read(path, FEATURE_MAGIC)
    return meta["records"], arrays, meta["config"]


def save_templates(path, templates: list[PersonTemplate], weights: ClassifierWeights, config: dict) -> None:
    arrays = [weights.w, weights.alpha] + [t.stacked() for t in templates]
    meta = {
        "kind": "templates",
        "config": config,
        "spectra": list(SPECTRA),
        "person_ids": [t.person_id for t in templates],
    }
    _write(path, TEMPLATE_MAGIC, meta, arrays)


def load_templates(path) -> tuple[list[PersonTemplate], ClassifierWeights, dict]:
    meta, arrays = _read(path, TEMPLATE_MAGIC)
    if meta.get("spectra") != list(SPECTRA) or len(arrays) != 2 + len(meta["person_ids"]):
        raise ArchiveError(f"{path}: template archive is inconsistent")
    weights = ClassifierWeights(arrays[0], arrays[1])
    templates = [
        PersonTemplate(pid, dict(zip(SPECTRA, arr))) for pid, arr in zip(meta["person_ids"], arrays[2:])
    ]
    return templates, weights, meta["config"]
