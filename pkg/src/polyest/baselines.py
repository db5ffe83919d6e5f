"""Brute-force k-nearest-neighbors regressor used as the comparison baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import Scaler
from .errors import ConfigurationError

KNN_GRID = (1, 3, 5, 10)
_CHUNK = 256


@dataclass
class KnnModel:
    """Stored (standardized, possibly noisy) rows with their labels.

    When ``scaler`` is set, :meth:`predict` takes raw features and standardizes
    them first; :func:`knn_predict` always expects standardized input.
    """
    rows: np.ndarray
    labels: np.ndarray
    k: int
    scaler: Optional[Scaler] = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.rows.ndim != 2 or len(self.rows) == 0:
            raise ConfigurationError("KNN model needs at least one stored row")
        if len(self.labels) != len(self.rows):
            raise ConfigurationError("one label per stored row required")
        if not 1 <= self.k <= len(self.rows):
            raise ConfigurationError(f"k={self.k} outside [1, {len(self.rows)}]")

    @property
    def n_xi(self) -> int:
        return self.rows.shape[1]

    def predict(self, rows) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != self.n_xi:
            raise ConfigurationError(f"expected rows with {self.n_xi} features, got shape {rows.shape}")
        if self.scaler is not None:
            rows = self.scaler.apply(rows)
        nbrs = nearest_neighbors(self.rows, rows, self.k)
        return self.labels[nbrs].mean(axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": "knn",
            "k": int(self.k),
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "rows": self.rows.tolist(),
            "labels": self.labels.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnnModel":
        scaler = None if d.get("scaler") is None else Scaler.from_dict(d["scaler"])
        return cls(np.asarray(d["rows"], dtype=float), np.asarray(d["labels"], dtype=float),
                   int(d["k"]), scaler)


def nearest_neighbors(stored, queries, k: int) -> np.ndarray:
    """Indices of the ``k`` closest stored rows per query, nearest first.

    Distances are exact squared Euclidean; equal distances go to the lower
    stored index.
    """
    stored = np.asarray(stored, dtype=float)
    queries = np.asarray(queries, dtype=float)
    n = len(stored)
    if not 1 <= k <= n:
        raise ConfigurationError(f"k={k} outside [1, {n}]")
    out = np.empty((len(queries), k), dtype=np.int64)
    for start in range(0, len(queries), _CHUNK):
        d2 = cdist(queries[start:start + _CHUNK], stored, "sqeuclidean")
        if k < n:
            kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
        else:
            kth = d2.max(axis=1)
        for i, row in enumerate(d2):
            cand = np.flatnonzero(row <= kth[i])
            order = np.lexsort((cand, row[cand]))
            out[start + i] = cand[order[:k]]
    return out


def knn_predict(model: KnnModel, xi) -> float:
    """Unweighted mean label of the k nearest stored rows (standardized input)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (model.n_xi,):
        raise ConfigurationError(f"feature vector must have length {model.n_xi}, got {xi.shape}")
    nbrs = nearest_neighbors(model.rows, xi[None, :], model.k)[0]
    return float(model.labels[nbrs].mean())


def select_knn(fit_rows, fit_labels, val_rows, val_labels, grid=KNN_GRID, scaler=None):
    """Grid search over the neighbor count by validation MSE (ties -> smaller k).

    Rows are raw features when ``scaler`` is given, standardized otherwise.
    """
    fit_rows = np.asarray(fit_rows, dtype=float)
    val_rows = np.asarray(val_rows, dtype=float)
    val_labels = np.asarray(val_labels, dtype=float)
    if scaler is not None:
        fit_rows, val_rows = scaler.apply(fit_rows), scaler.apply(val_rows)
    grid = sorted(k for k in grid if k <= len(fit_rows))
    if not grid:
        raise ConfigurationError("no neighbor count in the grid fits the stored row count")
    nbrs = nearest_neighbors(fit_rows, val_rows, grid[-1])
    fit_labels = np.asarray(fit_labels, dtype=float)
    scores, best_k, best = {}, None, math.inf
    for k in grid:
        pred = fit_labels[nbrs[:, :k]].mean(axis=1)
        scores[k] = float(np.mean((val_labels - pred) ** 2))
        if scores[k] < best:
            best_k, best = k, scores[k]
    return KnnModel(fit_rows, fit_labels, best_k, scaler), scores
