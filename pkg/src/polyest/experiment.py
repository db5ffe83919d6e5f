"""Experiment configuration and the in-memory generate -> fit -> evaluate pipeline.

The CLI stages in :mod:`polyest.cli` wrap these functions with file I/O; tests
and scripts can call them directly.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import baselines, evalkit, polyfit
from .dataset import (DEFAULT_WINDOWS, Scaler, WindowConfig, WindowedDataset, assemble_dataset,
                      fit_scaler, noisy_copy, split_by_scenario, split_fit_validation)
from .errors import ConfigurationError
from .scenarios import (STREAM_NOISE, ScenarioSetConfig, default_scenario_config,
                        generate_scenario_set, simulate_scenarios, substream)
from .systems import get_model

OUT_ENV = "POLYEST_OUT"
METHODS = ("plars", "knn")
# noise substream ids per data split
FIT, VALIDATION, TEST = 0, 1, 2


def default_out() -> str:
    return os.environ.get(OUT_ENV, "results")


@dataclass
class ExperimentConfig:
    """One (system, target, sigma_p, noise) cell plus every knob of the pipeline.

    Fields left at None take the benchmark defaults of the chosen system.
    """
    system: str = "lorentz"
    target: int = 1
    sigma_p: float = 0.0
    noise: float = 0.0
    seed: int = 0
    n_sc: Optional[int] = None
    t_f: Optional[float] = None
    x_min: Optional[tuple] = None
    x_max: Optional[tuple] = None
    N: Optional[int] = None
    m: Optional[int] = None
    method: str = "plars,knn"
    degree_grid: tuple = (1, 3, 5)
    window_w: int = 200
    keep_every: int = 20
    knn_grid: tuple = baselines.KNN_GRID
    passes: int = 500
    per_window_pick: int = 1
    stop_tol: float = 1e-4
    patience: int = 40
    max_active_ratio: float = 0.25
    select_tol: float = 1e-9
    out: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(f"unknown configuration key(s): {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from exc
        if not isinstance(d, dict):
            raise ConfigurationError(f"{path}: top level must be an object")
        return cls.from_dict(d)

    def resolved(self) -> "ExperimentConfig":
        """Copy with system defaults filled in and every field validated."""
        system = str(self.system).lower()
        if system == "lorenz":
            system = "lorentz"
        model = get_model(system)
        sc = default_scenario_config(system, self.sigma_p, self.seed)
        win = DEFAULT_WINDOWS[system]
        target = self.target
        if isinstance(target, str):
            target = {"1": 1, "2": 2, "x2": 1, "x3": 2}.get(target.lower())
        r = ExperimentConfig(**{**asdict(self),
                                "system": system, "target": target,
                                "sigma_p": float(self.sigma_p), "noise": float(self.noise),
                                "seed": int(self.seed),
                                "n_sc": int(self.n_sc if self.n_sc is not None else sc.n_sc),
                                "t_f": float(self.t_f if self.t_f is not None else sc.t_f),
                                "x_min": tuple(float(v) for v in (self.x_min or sc.x_min)),
                                "x_max": tuple(float(v) for v in (self.x_max or sc.x_max)),
                                "N": int(self.N or win.N), "m": int(self.m or win.m),
                                "degree_grid": tuple(int(v) for v in self.degree_grid),
                                "knn_grid": tuple(int(v) for v in self.knn_grid),
                                "out": self.out or default_out()})
        if r.target not in (1, 2):
            raise ConfigurationError(f"target: expected 1/x2 or 2/x3, got {self.target!r}")
        if r.noise < 0:
            raise ConfigurationError(f"noise: must be >= 0, got {r.noise}")
        if r.keep_every < 1:
            raise ConfigurationError(f"keep_every: must be >= 1, got {r.keep_every}")
        if not r.knn_grid or min(r.knn_grid) < 1:
            raise ConfigurationError("knn_grid: neighbor counts must be >= 1")
        bad = [m for m in r.methods if m not in METHODS]
        if bad or not r.methods:
            raise ConfigurationError(f"method: unknown method(s) {bad}; choose from {METHODS}")
        r.scenario_config().validate(model)
        WindowConfig(r.N, r.m)
        r.plars_config()
        return r

    @property
    def methods(self) -> list:
        return [m.strip() for m in str(self.method).split(",") if m.strip()]

    def scenario_config(self) -> ScenarioSetConfig:
        return ScenarioSetConfig(self.n_sc, self.t_f, self.sigma_p, tuple(self.x_min),
                                 tuple(self.x_max), self.seed)

    def window_config(self) -> WindowConfig:
        return WindowConfig(self.N, self.m)

    def plars_config(self) -> polyfit.PlarsConfig:
        return polyfit.PlarsConfig(window_w=self.window_w, degree_grid=self.degree_grid,
                                   passes=self.passes, per_window_pick=self.per_window_pick,
                                   stop_tol=self.stop_tol, patience=self.patience,
                                   max_active_ratio=self.max_active_ratio,
                                   select_tol=self.select_tol)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("x_min", "x_max", "degree_grid", "knn_grid"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d


def generate_datasets(cfg: ExperimentConfig):
    """Simulate the scenario set and return ``(scenarios, train, test)``."""
    model = get_model(cfg.system)
    scfg = cfg.scenario_config()
    scenarios = generate_scenario_set(model, scfg)
    trajectories = simulate_scenarios(model, scenarios, scfg.n_steps(model))
    ds = assemble_dataset(model, scenarios, trajectories, cfg.window_config(), cfg.target, cfg.sigma_p)
    ds.meta["seed"] = cfg.seed
    train, test = split_by_scenario(ds, 0.5)
    return scenarios, train, test


def noisy(ds: WindowedDataset, scaler: Scaler, cfg: ExperimentConfig, split: int) -> WindowedDataset:
    return noisy_copy(ds, scaler, cfg.noise, substream(cfg.seed, STREAM_NOISE, split))


def fit_models(cfg: ExperimentConfig, train: WindowedDataset) -> dict:
    """Fit every configured method on the 1-in-keep_every subset of ``train``.

    The scaler comes from the clean fit subset; noise is then added to the fit
    and validation features on the standardized scale.
    """
    fit, val = split_fit_validation(train, cfg.keep_every)
    scaler = fit_scaler(fit.features)
    fit_n = noisy(fit, scaler, cfg, FIT)
    val_n = noisy(val, scaler, cfg, VALIDATION)
    models = {}
    for method in cfg.methods:
        if method == "plars":
            model, scores = polyfit.select_hyperparameters(
                fit_n.features, fit_n.labels, val_n.features, val_n.labels,
                cfg.plars_config(), scaler=scaler)
        else:
            model, scores = baselines.select_knn(fit_n.features, fit_n.labels, val_n.features,
                                                 val_n.labels, cfg.knn_grid, scaler=scaler)
        models[method] = model
    return models


def evaluate_models(cfg: ExperimentConfig, models: dict, test: WindowedDataset) -> evalkit.Report:
    scaler = next(iter(models.values())).scaler
    test_n = noisy(test, scaler, cfg, TEST)
    return evalkit.build_report(models, test_n)


def run_cell(cfg: ExperimentConfig):
    """Generate, fit and evaluate one grid cell in memory."""
    cfg = cfg.resolved()
    _, train, test = generate_datasets(cfg)
    models = fit_models(cfg, train)
    return models, evaluate_models(cfg, models, test)


def model_to_dict(model) -> dict:
    return model.to_dict()


def model_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "plars":
        return polyfit.PolynomialModel.from_dict(d)
    if kind == "knn":
        return baselines.KnnModel.from_dict(d)
    raise ConfigurationError(f"unknown model kind {kind!r}")
