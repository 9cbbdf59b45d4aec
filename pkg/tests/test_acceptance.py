"""Acceptance criteria, one test per criterion.

Each test appends a ``criterion N PASS/FAIL: detail`` line that pytest prints
in its terminal summary.
"""

import math
import os
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

import conftest
from dronepayload import cli
from dronepayload.audio_io import read_manifest
from dronepayload.evaluation import (
    ClassifierSpec,
    ConfusionMatrix,
    accuracy,
    adjacent_error_fraction,
    run_classifier_comparison,
    run_snr_study,
    run_weight_classification,
    run_window_study,
)
from dronepayload.mfcc import dct_cepstrum, mel_scale
from dronepayload.noise import add_awgn, realized_snr_db, snr_grid
from dronepayload.svm import (
    KernelSpec,
    LabeledDataset,
    decision_function,
    kkt_violation,
    poly_kernel,
    train_binary,
    train_ovo,
)
from dronepayload.synth import synth_corpus

from helpers import blobs, tone

DATASET_ENV = "DRONEPAYLOAD_DATASET"


@contextmanager
def criterion(number: int):
    details: list[str] = []
    try:
        yield details
    except BaseException as exc:
        if isinstance(exc, pytest.skip.Exception):
            conftest.ACCEPTANCE_LINES.append(f"criterion {number} SKIP: {exc}")
        else:
            msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            conftest.ACCEPTANCE_LINES.append(f"criterion {number} FAIL: {'; '.join(details + [msg])}")
        raise
    conftest.ACCEPTANCE_LINES.append(f"criterion {number} PASS: {'; '.join(details)}")


def rel_close(a, b, rel=1e-10):
    return abs(a - b) <= rel * max(abs(a), abs(b), 1e-300)


# -- 1. formula fidelity ------------------------------------------------------------------


def test_criterion_1_formula_fidelity():
    with criterion(1) as out:
        rng = np.random.default_rng(2024)
        n = 120
        freqs = rng.uniform(0, 22050, n)
        mel_inputs = rng.standard_normal((n, 40)) * 5
        kernel_inputs = [(rng.standard_normal(d), rng.standard_normal(d), p) for d, p in zip(rng.integers(1, 41, n), rng.integers(1, 4, n))]
        pairs = [(rng.integers(0, 11, m), rng.integers(0, 11, m)) for m in rng.integers(1, 400, n)]

        start = time.perf_counter()
        mels = [mel_scale(f) for f in freqs]
        cepstra = [dct_cepstrum(d, 40) for d in mel_inputs]
        kernels = [poly_kernel(a, b, p) for a, b, p in kernel_inputs]
        accs = [accuracy(ConfusionMatrix.from_predictions(t, p, classes=range(11))) for t, p in pairs]
        elapsed = time.perf_counter() - start

        for f, m in zip(freqs, mels):
            assert rel_close(m, 2595.0 * math.log10(1.0 + f / 700.0)), f
        for d, c in zip(mel_inputs, cepstra):
            oracle = [sum(d[m] * math.cos(math.pi * k * (m + 0.5) / 40) for m in range(40)) for k in range(40)]
            # near-zero coefficients are compared on the scale of the input
            scale = float(np.abs(d).sum())
            assert all(abs(x - y) <= 1e-10 * max(abs(y), scale) for x, y in zip(c, oracle))
        for (a, b, p), k in zip(kernel_inputs, kernels):
            assert rel_close(k, (sum(x * y for x, y in zip(a, b)) + 1.0) ** p, rel=1e-10) or abs(k) < 1e-12
        for (t, p), acc in zip(pairs, accs):
            assert rel_close(acc, sum(int(x == y) for x, y in zip(t, p)) / len(t))
        out.append(f"{n} inputs per formula within 1e-10 relative")
        out.append(f"runtime {elapsed:.3f} s")
        assert elapsed < 1.0, f"runtime {elapsed:.3f} s"


# -- 2. SVM correctness --------------------------------------------------------------------


def test_criterion_2_svm_correctness():
    with criterion(2) as out:
        start = time.perf_counter()
        X, y = blobs({1: (0, 0, 0), -1: (6, 6, 6)}, 50, 1.5, seed=11)
        m = train_binary(X, y, KernelSpec(1), C=1.0)
        acc = float(np.mean(np.sign(decision_function(m, X)) == y))
        kkt = kkt_violation(m, X, y)
        free = (m.alphas > 1e-9) & (m.alphas < m.C - 1e-9)
        margins = np.abs(m.support_vectors[free] @ m.weight_vector() + m.bias)
        worst_margin = float(np.max(np.abs(margins - 1.0))) if free.any() else math.inf

        base = np.array([[1, 1], [-1, -1], [1, -1], [-1, 1]], dtype=float)
        Xx = np.vstack([base + 0.1 * np.random.default_rng(s).standard_normal((4, 2)) for s in range(10)])
        yx = np.tile([1, 1, -1, -1], 10)
        lin = float(np.mean(np.sign(decision_function(train_binary(Xx, yx, KernelSpec(1)), Xx)) == yx))
        quad = float(np.mean(np.sign(decision_function(train_binary(Xx, yx, KernelSpec(2)), Xx)) == yx))
        elapsed = time.perf_counter() - start

        out.append(f"blob accuracy {acc}, KKT residual {kkt:.2e}, {int(free.sum())} margin SVs off by <= {worst_margin:.2e}")
        out.append(f"XOR linear {lin:.3f} quadratic {quad:.3f}")
        out.append(f"runtime {elapsed:.2f} s")
        assert acc == 1.0
        assert kkt <= 1e-3
        assert free.any() and worst_margin <= 1e-3
        assert quad == 1.0 and lin < 1.0
        assert elapsed < 10.0


# -- 3. one-vs-one structure -------------------------------------------------------------


def test_criterion_3_one_vs_one(features):
    with criterion(3) as out:
        inst = features(1.0)
        X = np.stack([i.coefficients for i in inst])
        y = np.array([i.payload_label for i in inst])
        rng = np.random.default_rng(7)
        idx = rng.choice(len(y), 440, replace=False)
        probe = X[rng.choice(len(y), 300, replace=False)]
        model = train_ovo(LabeledDataset(X[idx], y[idx]), KernelSpec(3))
        base = model.predict(probe)
        out.append(f"{len(model.classes)} classes, {len(model.binaries)} binaries")
        assert len(model.classes) == 11 and len(model.binaries) == 55
        for seed in range(3):
            perm = np.random.default_rng(seed).permutation(idx)
            other = train_ovo(LabeledDataset(X[perm], y[perm]), KernelSpec(3)).predict(probe)
            np.testing.assert_array_equal(other, base)
        out.append("3 class-order permutations give identical predictions on 300 probes")


# -- 4. end-to-end synthetic reproduction ----------------------------------------------


def test_criterion_4_end_to_end():
    with criterion(4) as out:
        start = time.perf_counter()
        corpus = synth_corpus(duration_s=conftest.CORPUS_DURATION_S, seed=conftest.CORPUS_SEED)
        long = run_weight_classification(corpus, 1.0, ClassifierSpec("svm", degree=3))
        short = run_weight_classification(corpus, 0.25, ClassifierSpec("svm", degree=3))
        elapsed = time.perf_counter() - start
        adjacent = [adjacent_error_fraction(r.confusion) for r in (short, long)]
        errors = sum(r.confusion.total - int(np.trace(r.confusion.counts)) for r in (short, long))
        pooled = (
            sum((f or 0.0) * (r.confusion.total - int(np.trace(r.confusion.counts))) for f, r in zip(adjacent, (short, long))) / errors
            if errors
            else None
        )
        out.append(f"cubic SVM accuracy 1 s {long.accuracy:.4f}, 0.25 s {short.accuracy:.4f}")
        out.append(f"adjacent-class share of {errors} errors {pooled if pooled is None else round(pooled, 4)}")
        out.append(f"runtime {elapsed:.1f} s")
        assert long.accuracy >= 0.95
        assert short.accuracy < long.accuracy
        assert pooled is None or pooled >= 0.8
        assert elapsed < 300.0


# -- 5. pitch study --------------------------------------------------------------------


def test_criterion_5_pitch_window_study(corpus):
    with criterion(5) as out:
        start = time.perf_counter()
        points, _ = run_window_study(corpus)
        elapsed = time.perf_counter() - start
        curves: dict[float, list[float]] = {}
        for p in points:
            curves.setdefault(p.weight_g, []).append(p.error_rate)
        heaviest = max(curves)
        rising = [w for w, r in curves.items() if w > 0 and any(b > a for a, b in zip(r, r[1:]))]
        out.append(f"{len(curves) - 1} payload classes non-increasing over {len(curves[heaviest])} windows, exceptions {rising}")
        out.append(f"{heaviest:g} g at 2.5 s rate {curves[heaviest][-1]:.4f}")
        out.append(f"0 g self-rate within [{min(curves[0.0]):.3f}, {max(curves[0.0]):.3f}]")
        out.append(f"runtime {elapsed:.1f} s")
        assert not rising
        # the reference scored against itself only measures 3-sigma coverage
        assert min(curves[0.0]) >= 0.9
        assert curves[heaviest][-1] <= 0.05
        assert elapsed < 120.0


# -- 6. noise study ---------------------------------------------------------------------


SNR_LEVELS = (-20.0, -10.0, 0.0, 2.0, 4.4, 6.0, 8.8, 12.0, 20.0, 30.0, 40.0, 60.0)


def test_criterion_6_noise_study(corpus):
    with criterion(6) as out:
        start = time.perf_counter()
        clip = tone(210.0, 1.0, amp=0.7)
        rng = np.random.default_rng(6)
        worst = max(abs(realized_snr_db(clip, add_awgn(clip, s, int(seed))) - s) for s, seed in zip(rng.uniform(-20, 60, 200), rng.integers(0, 2**31, 200)))
        out.append(f"realized SNR within {worst:.3f} dB over 200 draws at 1 s")

        curve, clean = run_snr_study(corpus, 1.0, ClassifierSpec(), SNR_LEVELS, seed=conftest.CORPUS_SEED)
        acc = [p.accuracy for p in curve]
        n_test = clean.confusion.total
        worst_dip = max(0.0, max(a - b for a, b in zip(acc, acc[1:])))
        grid = snr_grid()
        elapsed = time.perf_counter() - start
        out.append(f"1 s accuracy {acc[0]:.3f} at -20 dB (chance {1 / 11:.3f}), {acc[-1]:.4f} at +60 dB vs clean {clean.accuracy:.4f}")
        out.append(f"largest step-down {worst_dip:.4f}")
        out.append(f"default grid {grid.count} levels on [{grid.levels_db[0]}, {grid.levels_db[-1]}]")
        out.append(f"runtime {elapsed:.1f} s")
        assert worst <= 0.1
        assert abs(acc[0] - 1 / 11) <= 0.05
        assert abs(acc[-1] - clean.accuracy) <= 1 / n_test + 1e-12
        assert acc[-1] > acc[0] and worst_dip <= 0.02
        assert grid.count == 183 and grid.levels_db[0] == 0.0 and grid.levels_db[-1] == 8.8
        assert elapsed < 600.0


# -- 7. dataset reproduction (needs the recorded corpus) --------------------------------


def clean_recovery_level(curve, clean_accuracy, n_test):
    """Lowest level from which every louder level is within one instance of clean."""
    level = None
    for p in reversed(curve):
        if p.accuracy < clean_accuracy - 1 / n_test:
            break
        level = p.snr_db
    return level


def test_criterion_7_dataset_reproduction():
    path = os.environ.get(DATASET_ENV)
    with criterion(7) as out:
        if not path:
            pytest.skip(f"set {DATASET_ENV} to the recorded corpus manifest to run")
        corpus = read_manifest(Path(path)).load_clips()
        reports = {(r.parameters["window_s"], r.parameters.get("kernel_degree", r.parameters["classifier"])): r for r in run_classifier_comparison(corpus)}
        cubic_short = reports[(0.25, 3)].accuracy
        cubic_long = reports[(1.0, 3)].accuracy
        short = {k[1]: r.accuracy for k, r in reports.items() if k[0] == 0.25}
        gnb = short["gnb"]
        curve, clean = run_snr_study(corpus, 0.25, ClassifierSpec(), snr_grid().levels_db, seed=conftest.CORPUS_SEED)
        recovered = clean_recovery_level(curve, clean.accuracy, clean.confusion.total)
        out.append(f"cubic 0.25 s {cubic_short:.4f}, 1 s {cubic_long:.4f}, GNB 0.25 s {gnb:.4f}, clean regained at {recovered} dB")
        assert abs(cubic_short - 0.984) <= 0.02
        assert cubic_long >= 0.98
        assert gnb == min(short.values()) and abs(gnb - 0.895) <= 0.03
        assert recovered is not None and abs(recovered - 8.0) <= 1.0


# -- 8. CLI determinism ------------------------------------------------------------------


def artifacts(folder: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(folder.iterdir()) if p.name != "run.json"}


def test_criterion_8_cli_determinism(tmp_path):
    with criterion(8) as out:
        runs = {}
        for rep in ("a", "b"):
            root = tmp_path / rep
            corpus_dir = root / "corpus"
            manifest = str(corpus_dir / "manifest.csv")
            feats = str(root / "features" / "features.csv")
            model = str(root / "train" / "model.json")
            commands = {
                "synth": ["synth", "--out", str(corpus_dir), "--duration", "6", "--seed", "8"],
                "features": ["features", "--manifest", manifest, "--out", str(root / "features"), "--window", "0.5"],
                "pitch": ["pitch", "--manifest", manifest, "--out", str(root / "pitch"), "--windows", "0.5,1"],
                "train": ["train", "--features", feats, "--out", str(root / "train")],
                "classify": ["classify", "--model", model, "--features", feats, "--out", str(root / "classify")],
                "evaluate": ["evaluate", "--manifest", manifest, "--out", str(root / "evaluate"), "--compare"],
                "snr-sweep": ["snr-sweep", "--manifest", manifest, "--out", str(root / "snr"), "--window", "1", "--snr-count", "4", "--extra-levels=-20,60", "--seed", "8"],
            }
            for name, argv in commands.items():
                assert cli.main(argv) == 0, name
            runs[rep] = {name: artifacts(Path(argv[argv.index("--out") + 1])) for name, argv in commands.items()}
        compared = 0
        for name in runs["a"]:
            assert runs["a"][name].keys() == runs["b"][name].keys(), name
            for fname, data in runs["a"][name].items():
                assert data == runs["b"][name][fname], f"{name}/{fname} differs"
                compared += 1
        out.append(f"{len(runs['a'])} subcommands, {compared} artifacts byte-identical across two runs")
