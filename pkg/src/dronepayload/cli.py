"""Command-line entry point.

Every subcommand writes its artifacts plus a ``run.json`` echoing the resolved
configuration.  Exit status: 0 success, 2 usage, 3 data error, 4 convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import (
    DEFAULT_SAMPLE_RATE,
    DatasetManifest,
    ManifestEntry,
    atomic_write_text,
    read_manifest,
    write_manifest,
    write_wav,
)
from .errors import ConfigurationError, ConvergenceError, PayloadError
from .evaluation import (
    STUDY_WINDOWS,
    ClassifierSpec,
    ConfusionMatrix,
    _indexed,
    chrono_split,
    error_rate_to_csv,
    featurize_corpus,
    pitch_dump_to_csv,
    predictions_to_csv,
    run_classifier_comparison,
    run_snr_study,
    run_weight_classification,
    run_window_study,
    snr_curve_to_csv,
)
from .mfcc import features_from_csv, features_to_csv
from .noise import snr_grid
from .pitch import pitch_estimates
from .svm import KernelSpec, LabeledDataset, dumps_model, loads_model, train_ovo
from .synth import WEIGHT_CLASSES_G, synth_corpus

log = logging.getLogger("dronepayload")

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CONVERGENCE = 4


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _positive(text: str) -> float:
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _classifier(args) -> ClassifierSpec:
    return ClassifierSpec(args.classifier, degree=args.kernel, C=args.c, tol=args.tol, k=args.k)


# -- subcommands ------------------------------------------------------------------


def cmd_synth(args, out: Path) -> dict:
    clips = synth_corpus(args.weights, args.duration, args.seed, args.sample_rate)
    entries = []
    for clip in clips:
        name = f"w{int(round(clip.payload_label)):03d}g.wav"
        write_wav(out / name, clip, args.bit_depth)
        entries.append(ManifestEntry(name, clip.payload_label, clip.duration_s))
    write_manifest(out / "manifest.csv", DatasetManifest(tuple(entries)))
    return {"recordings": len(entries)}


def _load_corpus(args):
    manifest = read_manifest(args.manifest)
    clips = manifest.load_clips()
    log.info("loaded %d recordings from %s", len(clips), args.manifest)
    return clips


def cmd_features(args, out: Path) -> dict:
    instances = featurize_corpus(_load_corpus(args), args.window)
    atomic_write_text(out / "features.csv", features_to_csv(instances))
    return {"instances": len(instances)}


def cmd_pitch(args, out: Path) -> dict:
    clips = _load_corpus(args)
    band = (args.band_lo, args.band_hi)
    estimates = [e for w in args.windows for e in pitch_estimates(clips, w, band)]
    atomic_write_text(out / "pitch.csv", pitch_dump_to_csv(estimates))
    result = {"estimates": len(estimates)}
    if any(c.payload_label == 0 for c in clips):
        points, _ = run_window_study(clips, args.windows, band, args.sigmas)
        atomic_write_text(out / "error_rate.csv", error_rate_to_csv(points))
        result["error_rate_points"] = len(points)
    else:
        log.warning("no 0 g recording in the manifest; error-rate curve skipped")
    return result


def _read_features(path):
    return features_from_csv(Path(path).read_text(encoding="utf-8"))


def cmd_train(args, out: Path) -> dict:
    instances = _read_features(args.features)
    train, _ = chrono_split(instances, args.train_frac)
    model = train_ovo(LabeledDataset.from_instances(train), KernelSpec(args.kernel), args.c, args.tol)
    atomic_write_text(out / "model.json", dumps_model(model))
    return {"n_train": len(train), "binaries": len(model.binaries)}


def cmd_classify(args, out: Path) -> dict:
    model = loads_model(Path(args.model).read_text(encoding="utf-8"))
    instances = _read_features(args.features)
    positions = dict(zip(map(id, instances), _indexed(instances)))
    if args.split == "test":
        _, instances = chrono_split(instances, args.train_frac)
    if not instances:
        raise ConfigurationError(f"{args.features}: no feature rows")
    labelled = all(i.payload_label is not None for i in instances)
    X = np.vstack([i.coefficients for i in instances])
    predicted = model.predict(X)
    rows = [(*positions[id(i)], i.payload_label, float(p)) for i, p in zip(instances, predicted)]
    atomic_write_text(out / "predictions.csv", predictions_to_csv(rows))
    result = {"predictions": len(rows)}
    if labelled:
        truth = np.array([i.payload_label for i in instances], dtype=np.float64)
        cm = ConfusionMatrix.from_predictions(truth, predicted, sorted(set(truth.tolist()) | set(model.classes)))
        atomic_write_text(out / "confusion.csv", cm.to_csv())
        result["accuracy"] = float(np.mean(predicted == truth))
    return result


def cmd_evaluate(args, out: Path) -> dict:
    clips = _load_corpus(args)
    if args.compare:
        reports = run_classifier_comparison(clips, (0.25, 1.0), train_frac=args.train_frac)
        rows = ["window_s,classifier,accuracy"]
        for r in reports:
            rows.append(f"{r.parameters['window_s']:g},{_spec_name(r.parameters)},{r.accuracy!r}")
        atomic_write_text(out / "comparison.csv", "\n".join(rows) + "\n")
        atomic_write_text(out / "report.json", _dump_json([r.to_dict() for r in reports]))
        return {"reports": len(reports)}
    report = run_weight_classification(clips, args.window, _classifier(args), train_frac=args.train_frac)
    atomic_write_text(out / "report.json", _dump_json(report.to_dict()))
    atomic_write_text(out / "confusion.csv", report.confusion.to_csv())
    atomic_write_text(out / "predictions.csv", predictions_to_csv(report.predictions))
    return {"accuracy": report.accuracy, "wall_clock_s": report.wall_clock_s}


def _spec_name(parameters: dict) -> str:
    kind = parameters["classifier"]
    return ClassifierSpec(kind, degree=parameters.get("kernel_degree", 3), k=parameters.get("k", 1)).name


def cmd_snr_sweep(args, out: Path) -> dict:
    clips = _load_corpus(args)
    grid = snr_grid(args.snr_lo, args.snr_hi, args.snr_count)
    levels = sorted(set(grid.levels_db) | set(args.extra_levels))
    curve, clean = run_snr_study(clips, args.window, _classifier(args), levels, args.seed, train_frac=args.train_frac)
    atomic_write_text(out / "snr_curve.csv", snr_curve_to_csv(curve))
    report = clean.to_dict()
    report["snr_curve"] = [{"snr_db": p.snr_db, "accuracy": p.accuracy} for p in curve]
    atomic_write_text(out / "report.json", _dump_json(report))
    return {"levels": len(curve), "clean_accuracy": clean.accuracy}


# -- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dronepayload", description="Acoustic payload-weight estimation for hovering drones.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p, manifest=True):
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        if manifest:
            p.add_argument("--manifest", required=True, type=Path)

    def classifier_flags(p):
        p.add_argument("--classifier", choices=("svm", "gnb", "knn"), default="svm")
        p.add_argument("--kernel", type=int, choices=(1, 2, 3), default=3, help="polynomial degree")
        p.add_argument("--c", type=_positive, default=1.0, help="SVM box constraint")
        p.add_argument("--tol", type=_positive, default=1e-3)
        p.add_argument("--k", type=int, default=1, help="neighbours for --classifier knn")
        p.add_argument("--train-frac", type=_positive, default=0.7)

    p = sub.add_parser("synth", help="write a synthetic corpus and its manifest")
    common(p, manifest=False)
    p.add_argument("--duration", type=_positive, default=170.0, help="seconds per recording")
    p.add_argument("--weights", type=_floats, default=list(WEIGHT_CLASSES_G), help="comma-separated grams")
    p.add_argument("--sample-rate", type=int, default=DEFAULT_SAMPLE_RATE)
    p.add_argument("--bit-depth", default="16", choices=("8", "16", "24", "32", "float"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="manifest -> MFCC feature CSV")
    common(p)
    p.add_argument("--window", type=_positive, default=1.0)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("pitch", help="manifest -> pitch CSV and error-rate curve")
    common(p)
    p.add_argument("--windows", type=_floats, default=list(STUDY_WINDOWS))
    p.add_argument("--band-lo", type=_positive, default=180.0)
    p.add_argument("--band-hi", type=_positive, default=235.0)
    p.add_argument("--sigmas", type=_positive, default=3.0)
    p.set_defaults(func=cmd_pitch)

    p = sub.add_parser("train", help="feature CSV -> serialized one-vs-one SVM")
    common(p, manifest=False)
    p.add_argument("--features", required=True, type=Path)
    classifier_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="model + feature CSV -> predictions CSV")
    common(p, manifest=False)
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--features", required=True, type=Path)
    p.add_argument("--split", choices=("all", "test"), default="all")
    p.add_argument("--train-frac", type=_positive, default=0.7)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="featurize, split 70/30, train and score")
    common(p)
    p.add_argument("--window", type=_positive, default=1.0)
    p.add_argument("--compare", action="store_true", help="all classifiers at 0.25 s and 1 s")
    classifier_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("snr-sweep", help="accuracy of a clean-trained model under AWGN")
    common(p)
    p.add_argument("--window", type=_positive, default=0.25)
    p.add_argument("--snr-lo", type=float, default=0.0)
    p.add_argument("--snr-hi", type=float, default=8.8)
    p.add_argument("--snr-count", type=int, default=183)
    p.add_argument("--extra-levels", type=_floats, default=[], help="additional SNR levels, e.g. --extra-levels=-20,60")
    classifier_flags(p)
    p.set_defaults(func=cmd_snr_sweep)
    return parser


def _resolved(args) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "verbose"):
            continue
        out[key] = str(value) if isinstance(value, Path) else value
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "bit_depth", None) not in (None, "float"):
        args.bit_depth = int(args.bit_depth)
    if getattr(args, "train_frac", 0.7) > 1:
        parser.error("--train-frac must not exceed 1")

    out: Path = args.out
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        result = args.func(args, out)
        status = 0
    except ConvergenceError as exc:
        log.error("%s", exc)
        result, status = {"error": str(exc)}, EXIT_CONVERGENCE
    except (PayloadError, OSError) as exc:
        log.error("%s", exc)
        result, status = {"error": str(exc)}, EXIT_DATA
    run = {
        "version": __version__,
        "subcommand": args.command,
        "config": _resolved(args),
        "seed": args.seed,
        "started_utc": started.isoformat(),
        "wall_clock_s": time.perf_counter() - t0,
        "exit_status": status,
        "result": result,
    }
    try:
        atomic_write_text(out / "run.json", _dump_json(run))
    except OSError as exc:
        log.error("could not write run.json: %s", exc)
        status = status or EXIT_DATA
    return status


if __name__ == "__main__":
    sys.exit(main())
