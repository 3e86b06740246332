"""Command-line entry point: ``palmtex {synth,extract,train,evaluate,identify}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from palmtex import __version__, archive
from palmtex.classify import CLASSIFIERS, WEIGHT_MODES, build_templates, group_by_person, learn_weights
from palmtex.dataset import (
    SCHEMES,
    DatasetError,
    SynthConfig,
    load_dir,
    read_image,
    synthesize,
    write_dataset,
)
from palmtex.evaluate import build_report, evaluate_grid, extract_all, write_plot_data, write_table_csv
from palmtex.glcm import Offset
from palmtex.pipeline import SPECTRA, FeatureConfig, extract_feature_matrix, extract_sample

log = logging.getLogger("palmtex")


class CliError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    """Parse ``6``, ``4,6,8`` or ``4-10``."""
    out = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _offset(text: str) -> Offset:
    try:
        return Offset.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad offset {text!r}: expected DX,DY with (DX,DY) != (0,0)") from exc


def _feature_args(p):
    g = p.add_argument_group("features")
    g.add_argument("--block-size", type=int, default=16, help="tile side length in pixels (default 16)")
    g.add_argument("--quant-step", type=int, default=8, help="gray-level quantization step (default 8)")
    g.add_argument("--offset", type=_offset, default=Offset(1, 0), help="co-occurrence offset DX,DY (default 1,0)")
    g.add_argument("--threads", type=int, default=1, help="worker processes for feature extraction")


def _dataset_args(p):
    g = p.add_argument_group("dataset")
    g.add_argument("--dataset", type=Path, help="dataset root in the <person>/<spectrum>/<n>.png layout")
    g.add_argument("--manifest", type=Path, help="JSON-lines manifest overriding the directory scan")
    g.add_argument("--image-size", type=int, default=128, help="expected square image side (default 128)")
    g.add_argument("--synth-persons", type=int, help="use an in-memory synthetic dataset with this many persons")
    g.add_argument("--synth-seed", type=int, default=0)


def _feature_config(args) -> FeatureConfig:
    return FeatureConfig(args.block_size, args.quant_step, args.offset)


def _raw_dataset(args):
    if args.synth_persons is not None:
        cfg = SynthConfig(num_persons=args.synth_persons, image_size=args.image_size, seed=args.synth_seed)
        return synthesize(cfg), {"source": "synthetic", **cfg.to_dict()}
    if args.dataset is None:
        raise CliError("give --dataset DIR or --synth-persons N")
    size = (args.image_size, args.image_size)
    raw = load_dir(args.dataset, args.manifest, expected_size=size)
    return raw, {"source": str(args.dataset), "persons": len({r.person_id for r in raw}), "samples": len(raw)}


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        num_persons=args.persons,
        samples_per_person=args.samples,
        image_size=args.image_size,
        noise=args.noise,
        seed=args.seed,
    )
    manifest = write_dataset(synthesize(cfg), args.out, fmt=args.format)
    print(f"wrote {len(manifest.persons)} persons x {cfg.samples_per_person} samples x {len(SPECTRA)} spectra to {args.out}")
    return 0


def _tags_for(path: Path) -> dict:
    tags = {"path": str(path)}
    if path.parent.name in SPECTRA:
        tags["spectrum"] = path.parent.name
        tags["person_id"] = path.parent.parent.name
    return tags


def cmd_extract(args) -> int:
    config = _feature_config(args)
    records, matrices = [], []
    for path in args.images:
        try:
            img = read_image(path, expected_size=None)
            matrices.append(extract_feature_matrix(img, config))
        except (DatasetError, ValueError) as exc:
            raise CliError(f"{path}: {exc}") from exc
        records.append(_tags_for(path))
    archive.save_features(args.out, records, matrices, config.to_dict())
    print(f"wrote {len(matrices)} feature matrices of shape {matrices[0].shape[0]}x{matrices[0].shape[1]} to {args.out}")
    return 0


def cmd_train(args) -> int:
    config = _feature_config(args)
    raw, _ = _raw_dataset(args)
    chosen = [r for r in raw if r.sample_index <= args.train_count]
    if not chosen:
        raise CliError("no training samples selected")
    samples = extract_all(chosen, config, args.threads)
    weights = learn_weights(group_by_person(samples), args.weights)
    templates = build_templates(samples)
    meta = {**config.to_dict(), "weight_mode": args.weights, "train_count": args.train_count}
    archive.save_templates(args.out, templates, weights, meta)
    print(f"trained {len(templates)} templates from samples 1..{args.train_count}; wrote {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    config = _feature_config(args)
    raw, dataset_info = _raw_dataset(args)
    n_samples = max(r.sample_index for r in raw)
    bad = [m for m in args.train_count if not 1 <= m < n_samples]
    if bad:
        raise CliError(f"train count(s) {bad} leave no test samples out of {n_samples} per person")
    t0 = time.perf_counter()
    samples = extract_all(raw, config, args.threads)
    per_image = (time.perf_counter() - t0) / (len(raw) * len(SPECTRA))
    classifiers = list(CLASSIFIERS) if args.classifier == "both" else [args.classifier]
    modes = list(WEIGHT_MODES) if args.weights == "both" else [args.weights]
    try:
        cells = evaluate_grid(samples, args.train_count, classifiers, modes, args.scheme, args.repeats, args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    run_config = {
        **config.to_dict(),
        "log_base": "e",
        "classifiers": classifiers,
        "weight_modes": modes,
        "train_counts": args.train_count,
        "scheme": args.scheme,
        "repeats": args.repeats,
        "seed": args.seed,
    }
    report = build_report(cells, run_config, dataset_info, per_image)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    json_path, csv_path = out.with_suffix(".json"), out.with_suffix(".csv")
    json_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    write_table_csv(cells, csv_path)
    if args.plot_data:
        write_plot_data(cells, args.plot_data)
    for c in cells:
        print(
            f"{c['train_fraction']:>6} {c['classifier']:>3} {c['weight_mode']:<16} "
            f"accuracy {100 * c['mean_accuracy']:7.3f}%  latency {c['mean_latency_s'] * 1e3:.3f} ms/test"
        )
    print(f"report: {json_path} {csv_path}")
    return 0


def cmd_identify(args) -> int:
    paths = {s: getattr(args, s) for s in SPECTRA}
    missing = [s for s, p in paths.items() if p is None]
    if missing:
        raise CliError(f"missing spectrum image(s): {', '.join('--' + s for s in missing)}")
    try:
        templates, weights, meta = archive.load_templates(args.templates)
    except (OSError, archive.ArchiveError) as exc:
        raise CliError(f"cannot read template archive: {exc}") from exc
    config = FeatureConfig(meta["block_size"], meta["quant_step"], Offset(*meta["offset"]))
    try:
        images = {s: read_image(p, expected_size=None) for s, p in paths.items()}
        sample = extract_sample("?", 0, images, config)
    except (DatasetError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    try:
        result = CLASSIFIERS[args.classifier](sample, templates, weights)
    except ValueError as exc:
        raise CliError(f"sample does not match the templates: {exc}") from exc
    largest = args.classifier == "wmv"
    print(f"predicted: {result.predicted_id}")
    label = "score" if largest else "distance"
    for pid, score in result.top(5, largest=largest):
        print(f"  {pid}\t{label} {score:.6g}")
    print(f"elapsed: {result.elapsed:.6f} s")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="palmtex", description=__doc__)
    parser.add_argument("--version", action="version", version=f"palmtex {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multispectral dataset on disk")
    p.add_argument("--persons", type=int, default=50)
    p.add_argument("--samples", type=int, default=12)
    p.add_argument("--image-size", type=int, default=128)
    p.add_argument("--noise", type=float, default=SynthConfig.noise)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("png", "pgm"), default="png")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="write 14xM feature matrices of grayscale images to an archive")
    p.add_argument("images", nargs="+", type=Path)
    p.add_argument("--out", type=Path, required=True)
    _feature_args(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="build per-person templates and weights from the first samples")
    _dataset_args(p)
    _feature_args(p)
    p.add_argument("--train-count", type=int, default=6, help="use samples 1..N of every person")
    p.add_argument("--weights", choices=WEIGHT_MODES, default="uniform")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run the train/test protocol grid and write JSON + CSV reports")
    _dataset_args(p)
    _feature_args(p)
    p.add_argument("--train-count", type=_int_list, default=[6], help="e.g. 6, 4,6 or 4-10")
    p.add_argument("--classifier", choices=(*CLASSIFIERS, "both"), default="both")
    p.add_argument("--weights", choices=(*WEIGHT_MODES, "both"), default="both")
    p.add_argument(
        "--scheme",
        choices=("mixed", *SCHEMES),
        default="mixed",
        help="'mixed' = random repeats for wmv, circular adjacent windows for mdc",
    )
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("report"), help="report path prefix (.json and .csv)")
    p.add_argument("--plot-data", type=Path, help="also write comparison series CSV here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("identify", help="identify one multispectral capture against a template archive")
    for s in SPECTRA:
        p.add_argument(f"--{s}", type=Path, help=f"{s} spectrum image")
    p.add_argument("--templates", type=Path, required=True)
    p.add_argument("--classifier", choices=tuple(CLASSIFIERS), default="wmv")
    p.set_defaults(func=cmd_identify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliError, DatasetError, archive.ArchiveError) as exc:
        print(f"palmtex {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
