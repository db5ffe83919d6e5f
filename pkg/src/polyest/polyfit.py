"""Sparse multivariate polynomial fitting.

Monomials are stored as rows of an integer power matrix, enumerated in graded
lexicographic order (total degree first, then descending exponent tuples), so
row 0 is always the constant monomial.  Internally each monomial is also kept
in *index form*: the list of feature indices it multiplies, padded with a
pointer to an all-ones column.  ``x1**2 * x3`` in 4 features with degree 5 is
``[0, 0, 2, 4, 4]``.

The fitter (:func:`plars_fit`) grows an active set greedily: candidate columns
are swept in consecutive windows of ``window_w`` monomials and, from each
window, the columns most correlated with the current residual join the active
set.  The residual is kept up to date through an incremental orthonormal basis,
which makes the refit after each window a rank-one update.  A final ordinary
least-squares solve on the raw active monomials gives the coefficients.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from itertools import combinations_with_replacement
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .dataset import Scaler, fit_scaler
from .errors import CapacityError, ConfigurationError, NumericError

log = logging.getLogger(__name__)

MONOMIAL_CAP = 1_000_000
INT64_MAX = 2 ** 63 - 1
# entries of the (n_rows x window x degree) gather tensor per chunk
_CHUNK_ENTRIES = 4_000_000


class UnderdeterminedFitWarning(UserWarning):
    pass


def monomial_count(n_xi: int, d: int) -> int:
    """Number of monomials of total degree <= d in n_xi variables."""
    if n_xi < 1 or d < 0:
        raise ConfigurationError(f"need n_xi >= 1 and d >= 0, got n_xi={n_xi}, d={d}")
    count = math.comb(n_xi + d, d)
    if count > INT64_MAX:
        raise OverflowError(f"monomial count C({n_xi + d}, {d}) exceeds the 64-bit range")
    return count


def monomial_indices(n_xi: int, d: int, cap: int = MONOMIAL_CAP) -> np.ndarray:
    """Index form of all monomials up to degree d, shape (n_m, max(d, 1))."""
    count = monomial_count(n_xi, d)
    if count > cap:
        raise CapacityError(count, cap)
    width = max(d, 1)
    out = np.full((count, width), n_xi, dtype=np.int64)
    row = 1
    for deg in range(1, d + 1):
        block = np.array(list(combinations_with_replacement(range(n_xi), deg)), dtype=np.int64)
        out[row:row + len(block), :deg] = block
        row += len(block)
    return out


def indices_to_powers(idx: np.ndarray, n_xi: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    powers = np.zeros((idx.shape[0], n_xi + 1), dtype=np.int64)
    rows = np.repeat(np.arange(idx.shape[0]), idx.shape[1])
    np.add.at(powers, (rows, idx.ravel()), 1)
    return powers[:, :n_xi]


def powers_to_indices(powers: np.ndarray) -> np.ndarray:
    powers = np.asarray(powers, dtype=np.int64)
    n_xi = powers.shape[1]
    width = max(int(powers.sum(axis=1).max(initial=0)), 1)
    idx = np.full((powers.shape[0], width), n_xi, dtype=np.int64)
    for i, prow in enumerate(powers):
        flat = np.repeat(np.arange(n_xi), prow)
        idx[i, :len(flat)] = flat
    return idx


def enumerate_monomials(n_xi: int, d: int, cap: int = MONOMIAL_CAP) -> np.ndarray:
    """Power matrix of every monomial with total degree <= d (graded-lex order)."""
    return indices_to_powers(monomial_indices(n_xi, d, cap), n_xi)


def _augmented_t(Z: np.ndarray) -> np.ndarray:
    """Transposed features with a trailing row of ones, shape (n_xi + 1, n)."""
    ZT = np.empty((Z.shape[1] + 1, Z.shape[0]))
    ZT[:-1] = Z.T
    ZT[-1] = 1.0
    return ZT


def _monomial_rows(ZT: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Monomials in index form evaluated as rows, shape (n_monomials, n)."""
    out = ZT[idx[:, 0]]
    for j in range(1, idx.shape[1]):
        col = idx[:, j]
        if np.all(col == ZT.shape[0] - 1):   # padding only
            break
        out *= ZT[col]
    return out


class _MonomialCache:
    """Evaluates monomials on fixed rows, reusing precomputed low-degree products.

    Every monomial is split into a head (its first ``c`` indices, looked up in
    the cache) and a tail of single features multiplied on top.
    """

    def __init__(self, Z: np.ndarray, degree: int, budget: int = 50_000_000):
        self.ZT = _augmented_t(Z)
        n, n_xi = Z.shape
        c = min(degree, 3)
        while c > 1 and math.comb(n_xi + c, c) * n > budget:
            c -= 1
        self.c = max(c, 1)
        head_idx = monomial_indices(n_xi, self.c, cap=INT64_MAX)
        self.table = np.zeros((n_xi + 1,) * self.c, dtype=np.int64)
        self.table[tuple(head_idx.T)] = np.arange(len(head_idx))
        self.rows = _monomial_rows(self.ZT, head_idx)

    def __call__(self, idx: np.ndarray) -> np.ndarray:
        c = self.c
        if idx.shape[1] < c:
            pad = np.full((idx.shape[0], c - idx.shape[1]), self.ZT.shape[0] - 1, dtype=np.int64)
            idx = np.hstack([idx, pad])
        out = self.rows[self.table[tuple(idx[:, :c].T)]]
        tail = idx[:, c:]
        if tail.size and not np.all(tail == self.ZT.shape[0] - 1):
            out *= _monomial_rows(self.ZT, tail)
        return out


def monomial_columns(Z: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Evaluate monomials given in index form on standardized rows ``Z``, shape (n, n_monomials)."""
    Z = np.asarray(Z, dtype=float)
    idx = np.asarray(idx, dtype=np.int64)
    n = Z.shape[0]
    out = np.empty((n, idx.shape[0]))
    step = max(1, _CHUNK_ENTRIES // max(1, idx.shape[0]))
    for start in range(0, n, step):
        out[start:start + step] = _monomial_rows(_augmented_t(Z[start:start + step]), idx).T
    return out


@dataclass
class PolynomialModel:
    """Sparse polynomial on standardized features.

    ``powers`` holds only the retained monomials; ``grid_degree`` is the degree
    setting the model was fitted with, ``degree`` the effective one.
    """
    powers: np.ndarray
    coeffs: np.ndarray
    scaler: Scaler
    grid_degree: int
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.powers = np.asarray(self.powers, dtype=np.int64).reshape(len(self.coeffs), -1)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        self._idx = powers_to_indices(self.powers) if len(self.coeffs) else None

    @property
    def n_xi(self) -> int:
        return len(self.scaler.means)

    @property
    def degree(self) -> int:
        nz = self.coeffs != 0
        if not nz.any():
            return 0
        return int(self.powers[nz].sum(axis=1).max())

    def predict(self, rows) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != self.n_xi:
            raise ConfigurationError(f"expected rows with {self.n_xi} features, got shape {rows.shape}")
        if self._idx is None:
            return np.zeros(len(rows))
        return monomial_columns(self.scaler.apply(rows), self._idx) @ self.coeffs

    def to_dict(self) -> dict:
        return {
            "kind": "plars",
            "grid_degree": int(self.grid_degree),
            "degree": self.degree,
            "scaler": self.scaler.to_dict(),
            "powers": self.powers.tolist(),
            "coeffs": self.coeffs.tolist(),
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolynomialModel":
        return cls(np.asarray(d["powers"], dtype=np.int64).reshape(len(d["coeffs"]), -1),
                   np.asarray(d["coeffs"], dtype=float), Scaler.from_dict(d["scaler"]),
                   int(d["grid_degree"]), d.get("info", {}))


def eval_polynomial(model: PolynomialModel, xi_raw) -> float:
    """Prediction for a single raw feature vector."""
    xi_raw = np.asarray(xi_raw, dtype=float)
    if xi_raw.shape != (model.n_xi,):
        raise ConfigurationError(f"feature vector must have length {model.n_xi}, got {xi_raw.shape}")
    return float(model.predict(xi_raw[None, :])[0])


def ols_fit(design, y) -> np.ndarray:
    """Least-squares coefficients; rank deficiency is resolved by a tiny ridge."""
    A = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ConfigurationError(f"design must be a non-empty matrix, got shape {A.shape}")
    if len(y) != A.shape[0]:
        raise ConfigurationError("design and target lengths differ")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(y))):
        raise NumericError("non-finite values in least-squares input")
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank == A.shape[1]:
        return coef
    gram = A.T @ A
    lam = 1e-10 * max(np.trace(gram), np.finfo(float).tiny) / A.shape[1]
    return np.linalg.solve(gram + lam * np.eye(A.shape[1]), A.T @ y)


@dataclass
class PlarsConfig:
    window_w: int = 200
    degree_grid: tuple = (1, 3, 5)
    passes: int = 500
    per_window_pick: int = 1
    stop_tol: float = 1e-4
    patience: int = 40
    max_active_ratio: float = 0.25
    select_tol: float = 1e-9
    cap: int = MONOMIAL_CAP

    def __post_init__(self):
        self.degree_grid = tuple(int(d) for d in self.degree_grid)
        if self.window_w < 1:
            raise ConfigurationError("window_w must be >= 1")
        if not self.degree_grid or min(self.degree_grid) < 0:
            raise ConfigurationError("degree_grid must hold non-negative degrees")
        if self.passes < 1 or self.per_window_pick < 1 or self.patience < 1:
            raise ConfigurationError("passes, per_window_pick and patience must be >= 1")
        if self.stop_tol < 0:
            raise ConfigurationError("stop_tol must be >= 0")
        if not 0 < self.max_active_ratio <= 1:
            raise ConfigurationError("max_active_ratio must lie in (0, 1]")
        if self.select_tol < 0:
            raise ConfigurationError("select_tol must be >= 0")


class _Basis:
    """Growing orthonormal basis of the centered, unit-norm active columns."""

    def __init__(self, n: int, capacity: int = 64):
        self.n = n
        self.k = 0
        self.Q = np.empty((n, capacity))
        self.R = np.zeros((capacity, capacity))
        self.g = np.empty(capacity)

    def _grow(self):
        cap = 2 * self.Q.shape[1]
        Q = np.empty((self.n, cap))
        Q[:, :self.k] = self.Q[:, :self.k]
        R = np.zeros((cap, cap))
        R[:self.k, :self.k] = self.R[:self.k, :self.k]
        g = np.empty(cap)
        g[:self.k] = self.g[:self.k]
        self.Q, self.R, self.g = Q, R, g

    def add(self, q: np.ndarray, residual: np.ndarray, tol: float = 1e-8):
        """Orthogonalize unit vector ``q``; returns the updated residual or None if dependent."""
        k = self.k
        v = q.copy()
        h = np.zeros(k)
        for _ in range(2):                              # re-orthogonalize once
            if k:
                hh = self.Q[:, :k].T @ v
                v -= self.Q[:, :k] @ hh
                h += hh
        rho = np.linalg.norm(v)
        if rho < tol:
            return None
        if k == self.Q.shape[1]:
            self._grow()
        v /= rho
        self.Q[:, k] = v
        self.R[:k, k] = h
        self.R[k, k] = rho
        gk = v @ residual
        self.g[k] = gk
        self.k += 1
        return residual - gk * v

    def truncate(self, k: int, y_centered: np.ndarray) -> np.ndarray:
        self.k = k
        return y_centered - self.Q[:, :k] @ self.g[:k]

    def beta(self) -> np.ndarray:
        if self.k == 0:
            return np.zeros(0)
        return solve_triangular(self.R[:self.k, :self.k], self.g[:self.k])


def _qr_refit(design, y):
    """Least squares through a Householder QR; exact rank loss falls back to :func:`ols_fit`."""
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    if diag.min(initial=np.inf) <= np.finfo(float).eps * max(diag.max(initial=0.0), 1.0):
        return ols_fit(design, y)
    return solve_triangular(r, q.T @ y)


def _coefficients(beta, mu, nrm, y_mean):
    """Map coefficients of centered unit-norm columns back to raw monomials."""
    c = beta / nrm
    return np.concatenate([[y_mean - c @ mu], c])


def plars_fit(rows, labels, degree: int, cfg: PlarsConfig | None = None, *,
              scaler: Scaler | None = None, val_rows=None, val_labels=None) -> PolynomialModel:
    """Windowed least-angle monomial selection followed by an OLS refit.

    ``val_rows``/``val_labels`` drive early stopping; without them the training
    error is used.  ``scaler`` defaults to one fitted on ``rows``.
    """
    cfg = cfg or PlarsConfig()
    rows = np.asarray(rows, dtype=float)
    y = np.asarray(labels, dtype=float)
    if rows.ndim != 2 or len(rows) == 0 or len(rows) != len(y):
        raise ConfigurationError("plars needs a non-empty fit set with one label per row")
    n, n_xi = rows.shape
    if scaler is None:
        if n < 2:
            warnings.warn("single-row fit set; using identity scaling", UnderdeterminedFitWarning)
            scaler = Scaler.identity(n_xi)
        else:
            scaler = fit_scaler(rows)
    if n < 2:
        warnings.warn("fit set is underdetermined; coefficients are ridge-resolved",
                      UnderdeterminedFitWarning)

    idx_all = monomial_indices(n_xi, degree, cfg.cap)
    n_m = len(idx_all)
    Z = scaler.apply(rows)
    use_val = val_rows is not None and val_labels is not None and len(val_labels) > 0
    if use_val:
        Zval = scaler.apply(np.asarray(val_rows, dtype=float))
        yval = np.asarray(val_labels, dtype=float)

    y_mean = float(y.mean())
    yc = y - y_mean
    residual = yc.copy()
    evaluate = _MonomialCache(Z, degree)
    ones = np.ones(n)
    basis = _Basis(n)
    active = [0]                 # enumeration indices, constant first
    mus, nrms = [], []
    blocked = np.zeros(n_m, dtype=bool)
    blocked[0] = True
    train_mse = [float(residual @ residual) / n]
    selected = []
    exact_floor = (1e-14 ** 2) * max(float(y @ y) / n, np.finfo(float).tiny)
    max_active = max(1, min(n - 1, int(cfg.max_active_ratio * n)))

    def score():
        if not use_val:
            return train_mse[-1]
        coef = _coefficients(basis.beta(), np.asarray(mus), np.asarray(nrms), y_mean)
        pred = monomial_columns(Zval, idx_all[active]) @ coef
        return float(np.mean((yval - pred) ** 2))

    def full():
        return len(active) - 1 >= max_active or train_mse[-1] <= exact_floor

    best = score()
    history = [best]
    best_len, n_passes = 1, 0
    for _ in range(cfg.passes):
        candidates = np.flatnonzero(~blocked)
        if full() or len(candidates) == 0:
            break
        n_passes += 1
        pass_start = len(active)
        for start in range(0, len(candidates), cfg.window_w):
            win = candidates[start:start + cfg.window_w]
            cols = evaluate(idx_all[win])
            # the residual has zero mean, so centering only matters for the norms
            mu = cols @ ones / n
            nrm = np.sqrt(np.maximum(np.einsum("ij,ij->i", cols, cols) - n * mu ** 2, 0.0))
            dead = nrm <= 1e-12 * math.sqrt(n) * np.maximum(1.0, np.abs(mu))
            blocked[win[dead]] = True
            corr = np.abs(cols @ residual) / np.where(dead, 1.0, nrm)
            corr[dead] = -1.0
            order = np.argsort(-corr, kind="stable")   # ties: lowest index first
            for j in order[:cfg.per_window_pick]:
                if corr[j] < 0:
                    break
                new_res = basis.add((cols[j] - mu[j]) / nrm[j], residual)
                blocked[win[j]] = True
                if new_res is None:                    # already in the active span
                    continue
                residual = new_res
                active.append(int(win[j]))
                selected.append(int(win[j]))
                mus.append(mu[j])
                nrms.append(nrm[j])
                train_mse.append(float(residual @ residual) / n)
            if full():
                break
        current = score()
        history.append(current)
        log.debug("degree %d pass %d: %d active, score %.6g", degree, n_passes, len(active), current)
        if current < best * (1.0 - cfg.stop_tol):
            best, best_len = current, len(active)
        elif len(active) - best_len >= cfg.patience:
            break
        if len(active) == pass_start:   # every pick was already in the active span
            break

    if best_len < len(active):
        # restore the best prefix of the selection path
        residual = basis.truncate(best_len - 1, yc)
        del active[best_len:], mus[best_len - 1:], nrms[best_len - 1:]
        train_mse.append(float(residual @ residual) / n)

    # final least squares on the centered unit-norm active columns, mapped back
    # to raw monomials (same minimizer, far better conditioned)
    mu_a, nrm_a = np.asarray(mus), np.asarray(nrms)
    if len(mu_a):
        design = (monomial_columns(Z, idx_all[active[1:]]) - mu_a) / nrm_a
        beta = _qr_refit(design, yc)
    else:
        beta = np.zeros(0)
    coeffs = _coefficients(beta, mu_a, nrm_a, y_mean)
    info = {
        "selected": selected,
        "train_mse_trace": train_mse,
        "score_trace": history,
        "n_passes": n_passes,
        "n_candidates": int(n_m),
        "scored_on": "validation" if use_val else "training",
    }
    return PolynomialModel(indices_to_powers(idx_all[active], n_xi), coeffs, scaler, degree, info)


def select_hyperparameters(fit_rows, fit_labels, val_rows, val_labels,
                           cfg: PlarsConfig | None = None, *, scaler: Scaler | None = None):
    """Fit one model per grid degree, keep the lowest validation MSE.

    A higher degree only wins if it lowers the validation MSE by more than
    ``cfg.select_tol`` times the validation label variance; anything closer
    counts as a tie and goes to the lower degree.

    Returns ``(best_model, scores)`` with ``scores`` mapping degree -> MSE.
    """
    cfg = cfg or PlarsConfig()
    if val_labels is None or len(val_labels) == 0:
        raise ConfigurationError("hyper-parameter selection needs a non-empty validation set")
    if scaler is None:
        scaler = fit_scaler(fit_rows)
    val_labels = np.asarray(val_labels, dtype=float)
    margin = cfg.select_tol * float(np.var(val_labels))
    best, best_mse, scores = None, math.inf, {}
    for d in sorted(cfg.degree_grid):
        model = plars_fit(fit_rows, fit_labels, d, cfg, scaler=scaler,
                          val_rows=val_rows, val_labels=val_labels)
        mse = float(np.mean((val_labels - model.predict(val_rows)) ** 2))
        scores[d] = mse
        if best is None or mse < best_mse - margin:
            best, best_mse = model, mse
    best.info["validation_mse"] = {str(k): v for k, v in scores.items()}
    return best, scores


def save_model(model, path, provenance: dict | None = None) -> None:
    d = model.to_dict()
    if provenance is not None:
        d["provenance"] = provenance
    Path(path).write_text(json.dumps(d, indent=1) + "\n", encoding="utf-8")


def config_dict(cfg: PlarsConfig) -> dict:
    d = asdict(cfg)
    d["degree_grid"] = list(cfg.degree_grid)
    return d
