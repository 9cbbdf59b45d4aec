"""Comparison classifiers: Gaussian naive Bayes and (fine) k-nearest neighbours."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .svm import LabeledDataset, Standardizer

VAR_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class GaussianNbModel:
    classes: tuple
    means: np.ndarray  # (n_classes, n_features)
    variances: np.ndarray
    log_priors: np.ndarray

    def log_posterior(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.means.shape[1]:
            raise DimensionError(f"expected {self.means.shape[1]} features, got {X.shape[1]}")
        diff = X[:, None, :] - self.means[None, :, :]
        ll = -0.5 * np.sum(np.log(2.0 * np.pi * self.variances)[None] + diff**2 / self.variances[None], axis=2)
        return ll + self.log_priors[None, :]

    def predict(self, X) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lowest label on exact ties
        return np.asarray(self.classes)[np.argmax(self.log_posterior(X), axis=1)]


def train_gnb(data: LabeledDataset) -> GaussianNbModel:
    classes = data.classes
    if not classes:
        raise ConfigurationError("cannot fit naive Bayes on an empty dataset")
    means, variances, counts = [], [], []
    for c in classes:
        Xc = data.X[data.labels == c]
        means.append(Xc.mean(axis=0))
        variances.append(Xc.var(axis=0) + VAR_FLOOR)
        counts.append(Xc.shape[0])
    counts = np.asarray(counts, dtype=np.float64)
    return GaussianNbModel(tuple(classes), np.array(means), np.array(variances), np.log(counts / counts.sum()))


def predict_gnb(model: GaussianNbModel, x):
    x = np.asarray(x, dtype=np.float64)
    return model.predict(x[None, :])[0] if x.ndim == 1 else model.predict(x)


@dataclass(frozen=True, eq=False)
class KnnModel:
    X: np.ndarray  # standardized, in insertion order
    labels: np.ndarray
    k: int
    standardization: Standardizer

    def predict(self, X) -> np.ndarray:
        if self.labels.size == 0:
            raise ConfigurationError("k-NN model holds no training points")
        Z = self.standardization.transform(X)
        d2 = (
            np.sum(Z**2, axis=1)[:, None]
            - 2.0 * Z @ self.X.T
            + np.sum(self.X**2, axis=1)[None, :]
        )
        k = min(self.k, self.labels.size)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out = np.empty(Z.shape[0])
        for r, idx in enumerate(nearest):
            neigh = self.labels[idx]
            uniq, counts = np.unique(neigh, return_counts=True)
            tied = set(uniq[counts == counts.max()].tolist())
            # vote ties go to the tied label whose member is nearest
            out[r] = next(lab for lab in neigh if lab in tied)
        return out


def train_knn(data: LabeledDataset, k: int = 1) -> KnnModel:
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    if len(data) == 0:
        raise ConfigurationError("cannot fit k-NN on an empty dataset")
    scaler = Standardizer.fit(data.X)
    return KnnModel(scaler.transform(data.X), data.labels.copy(), int(k), scaler)


def predict_knn(model: KnnModel, x):
    x = np.asarray(x, dtype=np.float64)
    return model.predict(x[None, :])[0] if x.ndim == 1 else model.predict(x)
