"""Rolling-window datasets: extraction, scenario-level split, scaling, noise, file I/O."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ParseError, SchemaError, SplitError
from .systems import SystemModel, Trajectory

STD_FLOOR = 1e-12


class ShortTrajectoryWarning(UserWarning):
    """Trajectory shorter than one observation window; no samples emitted."""


@dataclass(frozen=True)
class WindowConfig:
    N: int
    m: int

    def __post_init__(self):
        if self.N < 1 or self.m < 1:
            raise ConfigurationError(f"window needs N >= 1 and m >= 1, got N={self.N}, m={self.m}")

    @property
    def horizon(self) -> int:
        """Observation horizon N*m in sampling periods."""
        return self.N * self.m

    @property
    def span(self) -> int:
        """Index distance between the newest and the oldest block."""
        return (self.N - 1) * self.m

    def n_xi(self, n_y: int) -> int:
        return self.N * n_y

    def count(self, M: int) -> int:
        return max(M - self.span + 1, 0)


DEFAULT_WINDOWS = {"etc": WindowConfig(15, 2), "lorentz": WindowConfig(5, 10)}


def build_windows(traj: Trajectory, cfg: WindowConfig, target_id: int):
    """Stack past measurements newest-first, one window per right-end index k.

    Returns ``(features, labels, k)`` with ``features[i]`` equal to
    ``[y_k, y_{k-m}, ..., y_{k-(N-1)m}]`` flattened.
    """
    if target_id not in (1, 2):
        raise ConfigurationError(f"target id must be 1 or 2, got {target_id!r}")
    y = np.asarray(traj.measurements, dtype=float)
    M = len(y) - 1
    n_y = y.shape[1]
    if M < cfg.span:
        warnings.warn(f"trajectory with {M + 1} points is shorter than the window span "
                      f"{cfg.span + 1}", ShortTrajectoryWarning, stacklevel=2)
        return np.empty((0, cfg.n_xi(n_y))), np.empty(0), np.empty(0, dtype=int)
    ks = np.arange(cfg.span, M + 1)
    lags = np.arange(cfg.N) * cfg.m
    blocks = y[ks[:, None] - lags[None, :]]            # (n, N, n_y)
    features = blocks.reshape(len(ks), cfg.N * n_y)
    labels = np.asarray(traj.targets, dtype=float)[ks, target_id - 1]
    return features, labels.copy(), ks


@dataclass(frozen=True)
class WindowedDataset:
    features: np.ndarray
    labels: np.ndarray
    scenario_ids: np.ndarray
    k_index: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_xi(self) -> int:
        return self.features.shape[1]

    @property
    def scenarios(self) -> np.ndarray:
        return np.unique(self.scenario_ids)

    def take(self, idx) -> "WindowedDataset":
        return replace(self, features=self.features[idx], labels=self.labels[idx],
                       scenario_ids=self.scenario_ids[idx], k_index=self.k_index[idx],
                       meta=dict(self.meta))

    def with_features(self, features, **meta) -> "WindowedDataset":
        return replace(self, features=np.asarray(features, dtype=float),
                       meta={**self.meta, **meta})


def assemble_dataset(model: SystemModel, scenarios, trajectories, cfg: WindowConfig,
                     target_id: int, sigma_p: float) -> WindowedDataset:
    """Concatenate per-scenario windows in scenario order.

    ``trajectories`` may contain None for diverged scenarios; those are dropped
    and counted in ``meta['n_diverged']``.
    """
    if len(scenarios) != len(trajectories):
        raise ConfigurationError("need exactly one trajectory per scenario")
    n_xi = cfg.n_xi(model.n_y)
    feats, labels, sids, ks = [], [], [], []
    n_diverged = 0
    for sc, traj in zip(scenarios, trajectories):
        if traj is None:
            n_diverged += 1
            continue
        f, lab, k = build_windows(traj, cfg, target_id)
        feats.append(f)
        labels.append(lab)
        ks.append(k)
        sids.append(np.full(len(k), sc.scenario_id, dtype=int))
    meta = {
        "system": model.kind, "target": int(target_id), "sigma_p": float(sigma_p),
        "noise": 0.0, "N": cfg.N, "m": cfg.m, "tau": model.tau, "n_xi": n_xi,
        "n_scenarios": len(scenarios) - n_diverged, "n_diverged": n_diverged,
    }
    if not feats:
        return WindowedDataset(np.empty((0, n_xi)), np.empty(0), np.empty(0, dtype=int),
                               np.empty(0, dtype=int), meta)
    return WindowedDataset(np.concatenate(feats), np.concatenate(labels),
                           np.concatenate(sids), np.concatenate(ks), meta)


def split_by_scenario(ds: WindowedDataset, test_fraction: float = 0.5):
    """Unshuffled split on scenarios: the first ceil(n_sc (1 - f)) go to training."""
    ids = list(dict.fromkeys(ds.scenario_ids.tolist()))   # order of appearance
    n_sc = len(ids)
    if n_sc < 2:
        raise SplitError(f"need at least two scenarios to split, got {n_sc}")
    if not 0 < test_fraction < 1:
        raise SplitError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n_train = min(max(math.ceil(n_sc * (1.0 - test_fraction)), 1), n_sc - 1)
    in_train = np.isin(ds.scenario_ids, ids[:n_train])
    return ds.take(np.flatnonzero(in_train)), ds.take(np.flatnonzero(~in_train))


def subsample_fit_set(train: WindowedDataset, keep_every: int = 20) -> WindowedDataset:
    """Keep rows 0, keep_every, 2*keep_every, ... in order."""
    if keep_every < 1:
        raise ConfigurationError(f"keep_every must be >= 1, got {keep_every}")
    return train.take(np.arange(0, len(train), keep_every))


def split_fit_validation(train: WindowedDataset, keep_every: int = 20):
    """Fit subset plus the complementary validation rows of the training set."""
    fit = subsample_fit_set(train, keep_every)
    mask = np.ones(len(train), dtype=bool)
    mask[::keep_every] = False
    if keep_every == 1:
        # nothing left over: validate on the fit rows themselves
        mask[:] = True
    return fit, train.take(np.flatnonzero(mask))


@dataclass(frozen=True)
class Scaler:
    means: np.ndarray
    stds: np.ndarray

    def apply(self, rows):
        return (np.asarray(rows, dtype=float) - self.means) / self.stds

    def invert(self, rows):
        return np.asarray(rows, dtype=float) * self.stds + self.means

    @classmethod
    def identity(cls, n: int) -> "Scaler":
        return cls(np.zeros(n), np.ones(n))

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.asarray(d["means"], dtype=float), np.asarray(d["stds"], dtype=float))


def fit_scaler(rows) -> Scaler:
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise ConfigurationError("fitting a scaler needs at least two rows")
    means = rows.mean(axis=0)
    stds = rows.std(axis=0)
    stds = np.where(stds < STD_FLOOR, 1.0, stds)
    return Scaler(means, stds)


def apply_scaler(scaler: Scaler, rows):
    return scaler.apply(rows)


def add_noise(features, level: float, rng: np.random.Generator):
    """Return a copy of standardized ``features`` plus i.i.d. N(0, level^2) noise."""
    if level < 0:
        raise ConfigurationError(f"noise level must be >= 0, got {level}")
    features = np.array(features, dtype=float)
    if level == 0:
        return features
    return features + level * rng.standard_normal(features.shape)


def noisy_copy(ds: WindowedDataset, scaler: Scaler, level: float,
               rng: np.random.Generator) -> WindowedDataset:
    """Perturb features on the standardized scale and map them back to raw units.

    Labels are left untouched.
    """
    if level == 0:
        return ds.with_features(ds.features.copy(), noise=0.0)
    noisy = scaler.invert(add_noise(scaler.apply(ds.features), level, rng))
    return ds.with_features(noisy, noise=float(level))


# --------------------------------------------------------------------- file I/O

def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def export_dataset(ds: WindowedDataset, path) -> None:
    """Write ``path`` (CSV) and its ``.meta.json`` sidecar."""
    path = Path(path)
    n_xi = ds.n_xi
    header = ",".join([f"f{j}" for j in range(n_xi)] + ["label", "scenario_id", "k"])
    table = np.column_stack([ds.features, ds.labels])
    fmt = ["%.17g"] * (n_xi + 1) + ["%d", "%d"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        if len(ds):
            data = np.empty((len(ds), n_xi + 3), dtype=object)
            data[:, : n_xi + 1] = table
            data[:, n_xi + 1] = ds.scenario_ids
            data[:, n_xi + 2] = ds.k_index
            np.savetxt(fh, data, fmt=fmt, delimiter=",")
    meta = {**ds.meta, "n_xi": n_xi, "n_samples": len(ds)}
    meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _locate_bad_line(path: Path, n_cols: int) -> tuple[int, str]:
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != n_cols:
                return lineno, f"expected {n_cols} fields, found {len(parts)}"
            try:
                [float(v) for v in parts[:-2]]
                [int(v) for v in parts[-2:]]
            except ValueError as exc:
                return lineno, str(exc)
    return 0, "unreadable table"


def import_dataset(path) -> WindowedDataset:
    path = Path(path)
    mpath = meta_path(path)
    try:
        meta = json.loads(mpath.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise SchemaError(f"missing metadata sidecar {mpath}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(mpath, exc.lineno, exc.msg) from exc

    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
    n_xi = int(meta.get("n_xi", -1))
    expected = [f"f{j}" for j in range(n_xi)] + ["label", "scenario_id", "k"]
    if header != expected:
        raise SchemaError(f"{path}: header does not match metadata (n_xi={n_xi})")

    n_cols = n_xi + 3
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)   # empty-file warning
            table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=float)
    except ValueError as exc:
        lineno, msg = _locate_bad_line(path, n_cols)
        raise ParseError(path, lineno, msg) from exc
    if table.size == 0:
        table = np.empty((0, n_cols))
    if table.shape[1] != n_cols:
        lineno, msg = _locate_bad_line(path, n_cols)
        raise ParseError(path, lineno, msg)
    if len(table) != int(meta.get("n_samples", len(table))):
        raise SchemaError(f"{path}: {len(table)} rows but metadata declares {meta['n_samples']}")

    meta = {k: v for k, v in meta.items() if k != "n_samples"}
    return WindowedDataset(table[:, :n_xi].copy(), table[:, n_xi].copy(),
                           table[:, n_xi + 1].astype(int), table[:, n_xi + 2].astype(int), meta)
