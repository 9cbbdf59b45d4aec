"""Polynomial-kernel SVMs trained by sequential minimal optimization, combined one-vs-one.

The binary trainer solves the soft-margin dual

    max_a  sum(a) - 1/2 a^T Q a,   Q_ij = y_i y_j K(x_i, x_j)
    s.t.   0 <= a_i <= C,  sum(a_i y_i) = 0

two multipliers at a time: the first is the maximal KKT violator, the second
the partner giving the largest second-order decrease of the objective.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numba
import numpy as np

from .errors import ConfigurationError, ConvergenceError, DimensionError, FormatError

MODEL_FORMAT = "dronepayload.ovo-svm"
MODEL_VERSION = 1
DEFAULT_C = 1.0
DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 10_000_000
_TAU = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    degree: int = 3

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ConfigurationError(f"polynomial degree must be a positive integer, got {self.degree}")

    @property
    def name(self) -> str:
        return {1: "linear", 2: "quadratic", 3: "cubic"}.get(self.degree, f"poly{self.degree}")


def poly_kernel(x1, x2, p: int) -> float:
    """``(x1 . x2 + 1) ** p``."""
    a = np.asarray(x1, dtype=np.float64)
    b = np.asarray(x2, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"kernel arguments must be equal-length vectors, got {a.shape} and {b.shape}")
    if p < 1:
        raise ConfigurationError("kernel degree must be >= 1")
    return float((a @ b + 1.0) ** p)


def gram(X, Z, p: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if X.shape[1] != Z.shape[1]:
        raise DimensionError(f"feature dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
    return (X @ Z.T + 1.0) ** p


@dataclass(frozen=True, eq=False)
class BinarySvm:
    """Decision function ``f(x) = sum_i dual_coeffs[i] K(sv_i, x) + bias``.

    ``f > 0`` votes for ``class_pair[0]``, otherwise ``class_pair[1]``.
    """

    support_vectors: np.ndarray
    dual_coeffs: np.ndarray
    bias: float
    kernel: KernelSpec
    class_pair: tuple
    C: float = DEFAULT_C
    support_indices: Optional[np.ndarray] = None
    iterations: int = 0
    objective_history: tuple = ()

    def __post_init__(self):
        sv = np.asarray(self.support_vectors, dtype=np.float64)
        if sv.ndim == 1:
            sv = sv.reshape(0, 0) if sv.size == 0 else sv.reshape(1, -1)
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "dual_coeffs", np.asarray(self.dual_coeffs, dtype=np.float64).reshape(-1))
        if sv.shape[0] != self.dual_coeffs.size:
            raise DimensionError("one dual coefficient per support vector is required")

    @property
    def n_features(self) -> Optional[int]:
        return self.support_vectors.shape[1] if self.support_vectors.shape[0] else None

    @property
    def alphas(self) -> np.ndarray:
        return np.abs(self.dual_coeffs)

    def weight_vector(self) -> np.ndarray:
        """Primal ``w``; only meaningful for the linear kernel."""
        if self.kernel.degree != 1:
            raise ConfigurationError("explicit weight vector exists only for the linear kernel")
        return self.dual_coeffs @ self.support_vectors


def decision_function(model: BinarySvm, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if model.n_features is None:
        return np.full(X.shape[0], model.bias)
    if X.shape[1] != model.n_features:
        raise DimensionError(f"expected {model.n_features} features, got {X.shape[1]}")
    return gram(X, model.support_vectors, model.kernel.degree) @ model.dual_coeffs + model.bias


def decision_value(model: BinarySvm, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("decision_value takes a single feature vector")
    return float(decision_function(model, x[None, :])[0])


def _signed_targets(labels, class_pair):
    labels = np.asarray(labels)
    uniq = set(labels.tolist())
    if class_pair is None:
        if uniq <= {-1, 1} and len(uniq) == 2:
            class_pair = (1, -1)
        else:
            class_pair = tuple(sorted(uniq))
    if len(class_pair) != 2 or not uniq <= set(class_pair) or len(uniq) != 2:
        raise ConfigurationError(f"binary training needs exactly two non-empty classes, got {sorted(uniq, key=str)}")
    return np.where(labels == class_pair[0], 1.0, -1.0), tuple(class_pair)


def _bias(y, G, alpha, C):
    yG = y * G
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        return -float(yG[free].mean())
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return -float((ub + lb) / 2.0)


@numba.njit(cache=True)
def _smo(Q, y, C, tol, max_iter, track):
    """SMO inner loop.  Returns (alpha, gradient, iterations, final gap, objective trace)."""
    n = y.size
    alpha = np.zeros(n)
    G = -np.ones(n)
    QD = np.empty(n)
    for t in range(n):
        QD[t] = Q[t, t]
    history = [0.0]
    it = 0
    gap = np.inf
    while True:
        # i: maximal violator in I_up; gap: against the minimum over I_low
        i = -1
        g_max = -np.inf
        g_min = np.inf
        for t in range(n):
            v = -y[t] * G[t]
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                if v > g_max:
                    g_max = v
                    i = t
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                if v < g_min:
                    g_min = v
        gap = g_max - g_min
        if gap <= tol or it >= max_iter:
            break
        # j: largest second-order objective decrease among I_low violators
        j = -1
        best = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                b = g_max + y[t] * G[t]
                if b > 0:
                    a = QD[i] + QD[t] - 2.0 * y[i] * y[t] * Q[i, t]
                    if a <= 0:
                        a = _TAU
                    score = -(b * b) / a
                    if score < best:
                        best = score
                        j = t
        it += 1

        ai = alpha[i]
        aj = alpha[j]
        if y[i] != y[j]:
            quad = QD[i] + QD[j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = _TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni = ai + delta
            nj = aj + delta
            if diff > 0:
                if nj < 0:
                    nj = 0.0
                    ni = diff
            elif ni < 0:
                ni = 0.0
                nj = -diff
            if diff > 0:
                if ni > C:
                    ni = C
                    nj = C - diff
            elif nj > C:
                nj = C
                ni = C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = _TAU
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ni = ai - delta
            nj = aj + delta
            if total > C:
                if ni > C:
                    ni = C
                    nj = total - C
            elif nj < 0:
                nj = 0.0
                ni = total
            if total > C:
                if nj > C:
                    nj = C
                    ni = total - C
            elif ni < 0:
                ni = 0.0
                nj = total
        di = ni - ai
        dj = nj - aj
        for t in range(n):
            G[t] += Q[i, t] * di + Q[j, t] * dj
        alpha[i] = ni
        alpha[j] = nj
        if track:
            obj = 0.0
            for t in range(n):
                obj -= 0.5 * alpha[t] * (G[t] - 1.0)
            history.append(obj)
    if not track:
        history = history[:0]
    return alpha, G, it, gap, np.array(history)


def train_binary(
    X,
    labels,
    kernel: KernelSpec = KernelSpec(3),
    C: float = DEFAULT_C,
    tol: float = DEFAULT_TOL,
    class_pair=None,
    max_iter: int = DEFAULT_MAX_ITER,
    track_objective: bool = False,
) -> BinarySvm:
    """Solve the two-class dual problem by SMO.

    Terminates when the maximal violating pair's gap drops to ``tol``; raises
    :class:`ConvergenceError` after ``max_iter`` pair updates.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y, class_pair = _signed_targets(labels, class_pair)
    if X.shape[0] != y.size:
        raise DimensionError("one label per training vector is required")
    if C <= 0 or tol <= 0:
        raise ConfigurationError("C and tol must be positive")

    K = gram(X, X, kernel.degree)
    Q = K * np.outer(y, y)
    alpha, G, it, gap, history = _smo(Q, y, float(C), float(tol), int(max_iter), bool(track_objective))
    if gap > tol:
        raise ConvergenceError(
            f"SMO did not converge in {max_iter} iterations (KKT gap {gap:.3g} > {tol})",
            worst_violation=float(gap),
            pair=class_pair,
        )

    b = _bias(y, G, alpha, C)
    sv = np.flatnonzero(alpha > 0)
    return BinarySvm(
        support_vectors=X[sv],
        dual_coeffs=alpha[sv] * y[sv],
        bias=b,
        kernel=kernel,
        class_pair=class_pair,
        C=float(C),
        support_indices=sv,
        iterations=it,
        objective_history=tuple(history.tolist()),
    )


def kkt_violation(model: BinarySvm, X, labels) -> float:
    """Largest violation of the soft-margin KKT conditions over the training set."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y, _ = _signed_targets(labels, model.class_pair)
    alpha = np.zeros(y.size)
    if model.support_indices is None:
        raise ConfigurationError("model does not record its support indices")
    alpha[model.support_indices] = model.alphas
    margin = y * decision_function(model, X)
    at_zero = alpha <= 0
    at_c = alpha >= model.C
    free = ~(at_zero | at_c)
    viol = np.zeros(y.size)
    viol[at_zero] = np.maximum(0.0, 1.0 - margin[at_zero])
    viol[free] = np.abs(margin[free] - 1.0)
    viol[at_c] = np.maximum(0.0, margin[at_c] - 1.0)
    return float(viol.max())


# -- multiclass ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    X: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        if X.shape[0] != labels.size:
            raise DimensionError(f"{X.shape[0]} vectors but {labels.size} labels")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_instances(cls, instances) -> "LabeledDataset":
        if not instances:
            raise ConfigurationError("empty dataset")
        if any(inst.payload_label is None for inst in instances):
            raise ConfigurationError("every training instance needs a payload label")
        lengths = {len(inst.coefficients) for inst in instances}
        if len(lengths) != 1:
            raise DimensionError(f"instances have mixed lengths {sorted(lengths)}")
        return cls(np.stack([inst.coefficients for inst in instances]), [inst.payload_label for inst in instances])

    @property
    def classes(self) -> list:
        return sorted(set(self.labels.tolist()))

    def __len__(self):
        return self.labels.size


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 1e-12, std, 1.0))

    def transform(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.mean.size:
            raise DimensionError(f"expected {self.mean.size} features, got {X.shape[1]}")
        return (X - self.mean) / self.scale


def canonical_order(labels) -> np.ndarray:
    """Stable sort by label, so the order classes arrive in does not affect training."""
    return np.argsort(np.asarray(labels), kind="stable")


@dataclass(frozen=True, eq=False)
class OvoSvmModel:
    binaries: tuple
    classes: tuple
    standardization: Standardizer
    kernel: KernelSpec
    C: float = DEFAULT_C
    tol: float = DEFAULT_TOL

    @cached_property
    def _shared_support(self):
        rows = [b.support_vectors for b in self.binaries if b.support_vectors.shape[0]]
        if not rows:
            return np.zeros((0, self.standardization.mean.size)), [np.zeros(0, dtype=int) for _ in self.binaries]
        allsv = np.concatenate(rows)
        uniq, inverse = np.unique(allsv, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        index, pos = [], 0
        for b in self.binaries:
            k = b.support_vectors.shape[0]
            index.append(inverse[pos : pos + k])
            pos += k
        return uniq, index

    def decision_matrix(self, X) -> np.ndarray:
        """Decision value of every binary (columns) for every standardized input row."""
        Z = self.standardization.transform(X)
        uniq, index = self._shared_support
        K = gram(Z, uniq, self.kernel.degree) if uniq.shape[0] else np.zeros((Z.shape[0], 0))
        out = np.empty((Z.shape[0], len(self.binaries)))
        for col, (b, idx) in enumerate(zip(self.binaries, index)):
            out[:, col] = K[:, idx] @ b.dual_coeffs + b.bias
        return out

    def predict(self, X) -> np.ndarray:
        return vote(self.decision_matrix(X), self.binaries, self.classes)


def vote(decisions: np.ndarray, binaries: Sequence[BinarySvm], classes: Sequence) -> np.ndarray:
    """Majority vote; ties go to the larger summed |decision| of won duels, then the lower label."""
    cls_index = {c: k for k, c in enumerate(classes)}
    n = decisions.shape[0]
    votes = np.zeros((n, len(classes)), dtype=np.int64)
    strength = np.zeros((n, len(classes)))
    rows = np.arange(n)
    for col, b in enumerate(binaries):
        d = decisions[:, col]
        first = d >= 0
        winner = np.where(first, cls_index[b.class_pair[0]], cls_index[b.class_pair[1]])
        votes[rows, winner] += 1
        strength[rows, winner] += np.abs(d)
    out = np.empty(n, dtype=np.float64)
    for r in range(n):
        top = np.flatnonzero(votes[r] == votes[r].max())
        if top.size > 1:
            top = top[strength[r, top] == strength[r, top].max()]
        out[r] = min(classes[k] for k in top)
    return out


def train_ovo(
    data: LabeledDataset,
    kernel: KernelSpec = KernelSpec(3),
    C: float = DEFAULT_C,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> OvoSvmModel:
    """Standardize features, then train one binary SVM per unordered class pair."""
    classes = data.classes
    if len(classes) < 2:
        raise ConfigurationError(f"one-vs-one needs at least two classes, got {classes}")
    order = canonical_order(data.labels)
    X, labels = data.X[order], data.labels[order]
    scaler = Standardizer.fit(X)
    Z = scaler.transform(X)
    binaries = []
    for a, b in itertools.combinations(classes, 2):
        mask = (labels == a) | (labels == b)
        try:
            binaries.append(train_binary(Z[mask], labels[mask], kernel, C, tol, class_pair=(a, b), max_iter=max_iter))
        except ConvergenceError as exc:
            raise ConvergenceError(f"pair ({a:g}, {b:g}): {exc}", exc.worst_violation, (a, b)) from exc
    return OvoSvmModel(tuple(binaries), tuple(classes), scaler, kernel, float(C), float(tol))


def predict(model: OvoSvmModel, x):
    """Label for one vector, or an array of labels for a 2-D batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return model.predict(x[None, :])[0]
    return model.predict(x)


# -- serialization -------------------------------------------------------------


def model_to_dict(model: OvoSvmModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kernel_degree": model.kernel.degree,
        "C": model.C,
        "tol": model.tol,
        "classes": [float(c) for c in model.classes],
        "standardization": {
            "mean": model.standardization.mean.tolist(),
            "scale": model.standardization.scale.tolist(),
        },
        "binaries": [
            {
                "class_pair": [float(c) for c in b.class_pair],
                "bias": b.bias,
                "support_vectors": b.support_vectors.tolist(),
                "dual_coeffs": b.dual_coeffs.tolist(),
            }
            for b in model.binaries
        ],
    }


def model_from_dict(obj: dict) -> OvoSvmModel:
    if obj.get("format") != MODEL_FORMAT:
        raise FormatError(f"not a {MODEL_FORMAT} document")
    if obj.get("version") != MODEL_VERSION:
        raise FormatError(f"unsupported model version {obj.get('version')}")
    try:
        kernel = KernelSpec(int(obj["kernel_degree"]))
        C = float(obj["C"])
        scaler = Standardizer(np.array(obj["standardization"]["mean"]), np.array(obj["standardization"]["scale"]))
        d = scaler.mean.size
        binaries = tuple(
            BinarySvm(
                support_vectors=np.array(b["support_vectors"], dtype=np.float64).reshape(-1, d),
                dual_coeffs=np.array(b["dual_coeffs"], dtype=np.float64),
                bias=float(b["bias"]),
                kernel=kernel,
                class_pair=tuple(float(c) for c in b["class_pair"]),
                C=C,
            )
            for b in obj["binaries"]
        )
        classes = tuple(float(c) for c in obj["classes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model document: {exc}") from exc
    n = len(classes)
    if len(binaries) != n * (n - 1) // 2:
        raise FormatError(f"{n} classes need {n * (n - 1) // 2} binaries, found {len(binaries)}")
    return OvoSvmModel(binaries, classes, scaler, kernel, C, float(obj.get("tol", DEFAULT_TOL)))


def dumps_model(model: OvoSvmModel) -> str:
    return json.dumps(model_to_dict(model), indent=1, sort_keys=True) + "\n"


def loads_model(text: str) -> OvoSvmModel:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"model is not valid JSON: {exc}") from exc
    return model_from_dict(obj)
