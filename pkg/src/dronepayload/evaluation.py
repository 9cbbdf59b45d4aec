"""Experiment orchestration: chronological split, confusion matrices, and the
window-length, classifier-comparison and noise-robustness studies."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import baselines, svm
from .audio_io import AudioClip, format_number, segment
from .errors import ConfigurationError
from .mfcc import FeatureInstance, MfccParams, build_mel_filterbank, extract_windows
from .noise import add_awgn
from .pitch import DEFAULT_BAND, DEFAULT_SIGMAS, PitchDistribution, build_pitch_distribution, presence_error_rate

DEFAULT_TRAIN_FRAC = 0.7
STUDY_WINDOWS = tuple(0.25 * k for k in range(1, 11))


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    classes: tuple
    counts: np.ndarray  # rows: true class, columns: predicted class

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        n = len(self.classes)
        if counts.shape != (n, n):
            raise ConfigurationError(f"confusion matrix must be {n}x{n}, got {counts.shape}")
        if np.any(counts < 0):
            raise ConfigurationError("confusion counts must be non-negative")
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_predictions(cls, truth, predicted, classes: Optional[Sequence] = None) -> "ConfusionMatrix":
        truth = np.asarray(truth, dtype=np.float64)
        predicted = np.asarray(predicted, dtype=np.float64)
        if classes is None:
            classes = sorted(set(truth.tolist()) | set(predicted.tolist()))
        index = {c: k for k, c in enumerate(classes)}
        counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
        for t, p in zip(truth.tolist(), predicted.tolist()):
            counts[index[t], index[p]] += 1
        return cls(tuple(classes), counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def per_class_recall(self) -> list[Optional[float]]:
        rows = self.counts.sum(axis=1)
        return [float(self.counts[k, k] / r) if r else None for k, r in enumerate(rows)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\predicted"] + [format_number(c) for c in self.classes])
        for c, row in zip(self.classes, self.counts):
            w.writerow([format_number(c)] + [str(int(v)) for v in row])
        return buf.getvalue()


def accuracy(cm: ConfusionMatrix) -> float:
    """Trace over total: (TP + TN) / (TP + TN + FP + FN) in the two-class case."""
    total = cm.total
    if total == 0:
        raise ConfigurationError("accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts)) / total


def adjacent_error_fraction(cm: ConfusionMatrix) -> Optional[float]:
    """Share of misclassifications that land on a neighbouring class; None without errors."""
    order = np.argsort(np.asarray(cm.classes, dtype=np.float64))
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    errors = adjacent = 0
    for i in range(len(cm.classes)):
        for j in range(len(cm.classes)):
            if i != j and cm.counts[i, j]:
                errors += cm.counts[i, j]
                if abs(rank[i] - rank[j]) == 1:
                    adjacent += cm.counts[i, j]
    return None if errors == 0 else adjacent / errors


def train_count(n: int, train_frac: float = DEFAULT_TRAIN_FRAC) -> int:
    # rounding guards against 0.7 * 170 == 119.00000000000001
    return math.ceil(round(train_frac * n, 9))


def chrono_split(instances: Sequence, train_frac: float = DEFAULT_TRAIN_FRAC) -> tuple[list, list]:
    """Per recording (``source_id``), the first ceil(frac * n) items train, the rest test.

    Input order within each recording is taken as time order; recordings keep
    the order in which they first appear.
    """
    if not 0 < train_frac <= 1:
        raise ConfigurationError(f"train fraction must lie in (0, 1], got {train_frac}")
    groups: dict[str, list] = {}
    for inst in instances:
        groups.setdefault(inst.source_id, []).append(inst)
    train, test = [], []
    for source, items in groups.items():
        if len(items) < 2:
            raise ConfigurationError(f"recording {source!r} has {len(items)} instance(s); need at least 2")
        k = train_count(len(items), train_frac)
        train.extend(items[:k])
        test.extend(items[k:])
    return train, test


# -- classifiers -----------------------------------------------------------------


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str = "svm"
    degree: int = 3
    C: float = svm.DEFAULT_C
    tol: float = svm.DEFAULT_TOL
    k: int = 1
    max_iter: int = svm.DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.kind not in ("svm", "gnb", "knn"):
            raise ConfigurationError(f"unknown classifier {self.kind!r}")

    @property
    def name(self) -> str:
        if self.kind == "svm":
            return f"{svm.KernelSpec(self.degree).name}-svm"
        return "gnb" if self.kind == "gnb" else ("fine-knn" if self.k == 1 else f"{self.k}-nn")

    def fit(self, data: svm.LabeledDataset):
        if self.kind == "svm":
            return svm.train_ovo(data, svm.KernelSpec(self.degree), self.C, self.tol, self.max_iter)
        if self.kind == "gnb":
            return baselines.train_gnb(data)
        return baselines.train_knn(data, self.k)

    def parameters(self) -> dict:
        out = {"classifier": self.kind}
        if self.kind == "svm":
            out.update(kernel_degree=self.degree, C=self.C, tol=self.tol)
        elif self.kind == "knn":
            out.update(k=self.k)
        return out


COMPARISON_CLASSIFIERS = (
    ClassifierSpec("svm", degree=1),
    ClassifierSpec("svm", degree=2),
    ClassifierSpec("svm", degree=3),
    ClassifierSpec("gnb"),
    ClassifierSpec("knn", k=1),
)


# -- reports ---------------------------------------------------------------------


@dataclass(eq=False)
class EvaluationReport:
    experiment_id: str
    parameters: dict
    confusion: ConfusionMatrix
    n_train: int = 0
    wall_clock_s: float = 0.0
    predictions: list = field(default_factory=list)  # (source_id, index, true, predicted)

    @property
    def accuracy(self) -> float:
        return accuracy(self.confusion)

    @property
    def per_class_recall(self) -> list[Optional[float]]:
        return self.confusion.per_class_recall()

    def to_dict(self) -> dict:
        """JSON-ready view.  Wall-clock time is left out so reports are reproducible."""
        return {
            "experiment": self.experiment_id,
            "parameters": self.parameters,
            "classes": [float(c) for c in self.confusion.classes],
            "confusion": self.confusion.counts.tolist(),
            "accuracy": self.accuracy,
            "per_class_recall": self.per_class_recall,
            "adjacent_error_fraction": adjacent_error_fraction(self.confusion),
            "n_train": self.n_train,
            "n_test": self.confusion.total,
        }


def predictions_to_csv(rows: Iterable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source_id", "index", "weight_g", "predicted_g"])
    for source, index, truth, pred in rows:
        w.writerow([source, index, "" if truth is None else format_number(truth), format_number(pred)])
    return buf.getvalue()


def _indexed(instances: Sequence[FeatureInstance]) -> list[tuple[str, int]]:
    seen: dict[str, int] = {}
    out = []
    for inst in instances:
        k = seen.get(inst.source_id, 0)
        out.append((inst.source_id, k))
        seen[inst.source_id] = k + 1
    return out


def featurize_corpus(
    corpus: Sequence[AudioClip], window_s: float, params: MfccParams = MfccParams()
) -> list[FeatureInstance]:
    """MFCC instances for every recording, recordings in corpus order and windows in time order."""
    banks = {}
    out = []
    for clip in corpus:
        fs = clip.sample_rate_hz
        if fs not in banks:
            banks[fs] = build_mel_filterbank(params, fs)
        out.extend(extract_windows(clip, window_s, params, banks[fs]))
    return out


def _check_corpus(corpus: Sequence[AudioClip]) -> None:
    labels = {c.payload_label for c in corpus}
    if None in labels:
        raise ConfigurationError("every corpus recording needs a payload label")
    if len(labels) < 2:
        raise ConfigurationError(f"need at least two payload classes, got {sorted(labels)}")


def evaluate_instances(
    instances: Sequence[FeatureInstance],
    spec: ClassifierSpec,
    train_frac: float = DEFAULT_TRAIN_FRAC,
    experiment_id: str = "weight-classification",
    parameters: Optional[dict] = None,
):
    """Chronological split, fit, and score.  Returns ``(report, model)``."""
    start = time.perf_counter()
    positions = dict(zip(map(id, instances), _indexed(instances)))
    train, test = chrono_split(instances, train_frac)
    if not test:
        raise ConfigurationError("chronological split left no test instances")
    model = spec.fit(svm.LabeledDataset.from_instances(train))
    test_data = svm.LabeledDataset.from_instances(test)
    predicted = model.predict(test_data.X)
    classes = sorted(set(svm.LabeledDataset.from_instances(list(instances)).labels.tolist()))
    cm = ConfusionMatrix.from_predictions(test_data.labels, predicted, classes)
    rows = [(*positions[id(inst)], inst.payload_label, float(p)) for inst, p in zip(test, predicted)]
    params = dict(parameters or {})
    params.update(spec.parameters(), train_frac=train_frac)
    report = EvaluationReport(experiment_id, params, cm, len(train), time.perf_counter() - start, rows)
    return report, model


def run_weight_classification(
    corpus: Sequence[AudioClip],
    window_s: float,
    spec: ClassifierSpec = ClassifierSpec(),
    params: MfccParams = MfccParams(),
    train_frac: float = DEFAULT_TRAIN_FRAC,
) -> EvaluationReport:
    _check_corpus(corpus)
    start = time.perf_counter()
    instances = featurize_corpus(corpus, window_s, params)
    report, _ = evaluate_instances(instances, spec, train_frac, "weight-classification", {"window_s": window_s})
    report.wall_clock_s = time.perf_counter() - start
    return report


def run_classifier_comparison(
    corpus: Sequence[AudioClip],
    windows: Sequence[float] = (0.25, 1.0),
    classifiers: Sequence[ClassifierSpec] = COMPARISON_CLASSIFIERS,
    params: MfccParams = MfccParams(),
    train_frac: float = DEFAULT_TRAIN_FRAC,
) -> list[EvaluationReport]:
    """Every classifier at every window; features are extracted once per window."""
    _check_corpus(corpus)
    reports = []
    for w in windows:
        instances = featurize_corpus(corpus, w, params)
        for spec in classifiers:
            report, _ = evaluate_instances(instances, spec, train_frac, "classifier-comparison", {"window_s": w})
            reports.append(report)
    return reports


# -- pitch window study ------------------------------------------------------------


@dataclass(frozen=True)
class ErrorRatePoint:
    weight_g: float
    window_s: float
    error_rate: float


def run_window_study(
    corpus: Sequence[AudioClip],
    windows: Sequence[float] = STUDY_WINDOWS,
    band: tuple[float, float] = DEFAULT_BAND,
    n_sigmas: float = DEFAULT_SIGMAS,
) -> tuple[list[ErrorRatePoint], dict]:
    """Error rate of every weight against the 0 g reference at every window length.

    Returns the curve and the ``{(weight, window): PitchDistribution}`` it was built from.
    """
    by_weight: dict[float, list[AudioClip]] = {}
    for clip in corpus:
        if clip.payload_label is None:
            raise ConfigurationError(f"recording {clip.source_id!r} has no payload label")
        by_weight.setdefault(float(clip.payload_label), []).append(clip)
    if 0.0 not in by_weight:
        raise ConfigurationError("window study needs a 0 g reference recording")
    points = []
    dists: dict[tuple[float, float], PitchDistribution] = {}
    for w in windows:
        for weight in sorted(by_weight):
            dists[(weight, w)] = build_pitch_distribution(by_weight[weight], w, band)
        ref = dists[(0.0, w)]
        for weight in sorted(by_weight):
            points.append(ErrorRatePoint(weight, w, presence_error_rate(dists[(weight, w)], ref, n_sigmas)))
    return points, dists


def error_rate_to_csv(points: Iterable[ErrorRatePoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["weight_g", "window_s", "error_rate"])
    for p in points:
        w.writerow([format_number(p.weight_g), format_number(p.window_s), repr(float(p.error_rate))])
    return buf.getvalue()


# -- noise study ----------------------------------------------------------------------


@dataclass(frozen=True)
class SnrPoint:
    snr_db: float
    window_s: float
    accuracy: float


def _test_portion(clip: AudioClip, window_s: float, train_frac: float) -> Optional[AudioClip]:
    segs = segment(clip, window_s)
    if len(segs) < 2:
        raise ConfigurationError(f"recording {clip.source_id!r} yields fewer than 2 windows")
    k = train_count(len(segs), train_frac)
    if k >= len(segs):
        return None
    win = len(segs[0])
    return clip.with_samples(clip.samples[k * win : len(segs) * win])


def run_snr_study(
    corpus: Sequence[AudioClip],
    window_s: float,
    spec: ClassifierSpec = ClassifierSpec(),
    levels_db: Iterable[float] = (),
    seed: int = 0,
    params: MfccParams = MfccParams(),
    train_frac: float = DEFAULT_TRAIN_FRAC,
) -> tuple[list[SnrPoint], EvaluationReport]:
    """Accuracy of a clean-trained classifier on noise-perturbed test audio.

    The test span of each recording gets its own noise stream, seeded by
    ``(seed, recording index, level index)``.  Returns the raw curve and the
    clean-test report.
    """
    _check_corpus(corpus)
    instances = featurize_corpus(corpus, window_s, params)
    clean_report, model = evaluate_instances(instances, spec, train_frac, "snr-study", {"window_s": window_s})
    tests = [_test_portion(c, window_s, train_frac) for c in corpus]
    banks = {fs: build_mel_filterbank(params, fs) for fs in {c.sample_rate_hz for c in corpus}}
    curve = []
    for li, level in enumerate(levels_db):
        noisy_instances = []
        for ci, clip in enumerate(tests):
            if clip is None:
                continue
            noisy = add_awgn(clip, level, seed=(seed, ci, li))
            noisy_instances.extend(extract_windows(noisy, window_s, params, banks[clip.sample_rate_hz]))
        data = svm.LabeledDataset.from_instances(noisy_instances)
        predicted = model.predict(data.X)
        cm = ConfusionMatrix.from_predictions(data.labels, predicted, clean_report.confusion.classes)
        curve.append(SnrPoint(float(level), window_s, accuracy(cm)))
    return curve, clean_report


def snr_curve_to_csv(points: Iterable[SnrPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["snr_db", "window_s", "accuracy"])
    for p in points:
        w.writerow([repr(float(p.snr_db)), format_number(p.window_s), repr(float(p.accuracy))])
    return buf.getvalue()


def pitch_dump_to_csv(estimates) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source_id", "weight_g", "window_s", "pitch_hz"])
    for e in estimates:
        label = "" if e.payload_label is None else format_number(e.payload_label)
        w.writerow([e.source_id, label, format_number(e.window_s), repr(float(e.frequency_hz))])
    return buf.getvalue()


__all__ = [
    "ConfusionMatrix",
    "EvaluationReport",
    "ClassifierSpec",
    "COMPARISON_CLASSIFIERS",
    "STUDY_WINDOWS",
    "accuracy",
    "adjacent_error_fraction",
    "chrono_split",
    "train_count",
    "featurize_corpus",
    "evaluate_instances",
    "run_weight_classification",
    "run_classifier_comparison",
    "run_window_study",
    "run_snr_study",
]
