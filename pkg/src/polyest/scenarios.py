"""Randomized M-scenarios: initial state, excitation law and dispersed parameters."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ParseError
from .systems import ETC, LORENTZ, SystemModel, make_trajectory, simulate_batch

U0_RANGE = (-50.0, 50.0)
OMEGA_RANGE = (1.0, 10.0)
LAMBDA_RANGE = (0.1, 1.0)
SIGMA_P_GRID = (0.0, 0.05, 0.1)

# spawn-key tags keeping independent random streams apart
STREAM_SCENARIO = 1
STREAM_NOISE = 2


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator keyed by (seed, key...); independent of any other key."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


@dataclass(frozen=True)
class InputLaw:
    u0: float
    omega: float
    lam: float

    def __call__(self, t):
        return input_signal(self, t)


def input_signal(law: InputLaw, t):
    """Decaying sinusoid u0 sin(omega t) exp(-lambda t)."""
    t = np.asarray(t, dtype=float)
    return law.u0 * np.sin(law.omega * t) * np.exp(-law.lam * t)


def sample_input_law(rng: np.random.Generator) -> InputLaw:
    u0 = rng.uniform(*U0_RANGE)
    omega = rng.uniform(*OMEGA_RANGE)
    lam = rng.uniform(*LAMBDA_RANGE)
    return InputLaw(float(u0), float(omega), float(lam))


def sample_parameters(rng: np.random.Generator, p_nominal, sigma_p: float) -> np.ndarray:
    """Relative Gaussian dispersion: p_i = nominal_i * (1 + sigma_p * eta_i)."""
    if sigma_p < 0:
        raise ConfigurationError(f"sigma_p must be >= 0, got {sigma_p}")
    p_nominal = np.asarray(p_nominal, dtype=float)
    eta = rng.standard_normal(p_nominal.shape)
    if sigma_p == 0:
        return p_nominal.copy()
    return p_nominal * (1.0 + sigma_p * eta)


@dataclass(frozen=True)
class Scenario:
    x0: np.ndarray
    input_law: Optional[InputLaw]
    p: np.ndarray
    scenario_id: int

    def input_values(self, times, n_u: int) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        if n_u == 0:
            return np.zeros((len(times), 0))
        if self.input_law is None:
            raise ConfigurationError(f"scenario {self.scenario_id} has no input law")
        return input_signal(self.input_law, times).reshape(-1, 1)

    def to_record(self) -> dict:
        return {
            "id": int(self.scenario_id),
            "x0": [float(v) for v in self.x0],
            "law": None if self.input_law is None else asdict(self.input_law),
            "p": [float(v) for v in self.p],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Scenario":
        law = None if rec["law"] is None else InputLaw(**rec["law"])
        return cls(np.asarray(rec["x0"], dtype=float), law,
                   np.asarray(rec["p"], dtype=float), int(rec["id"]))


@dataclass
class ScenarioSetConfig:
    n_sc: int
    t_f: float
    sigma_p: float
    x_min: tuple
    x_max: tuple
    seed: int = 0

    def n_steps(self, model: SystemModel) -> int:
        ratio = self.t_f / model.tau
        M = int(round(ratio))
        if abs(ratio - M) > 1e-9 * max(1.0, ratio):
            raise ConfigurationError(f"t_f={self.t_f} is not a multiple of tau={model.tau}")
        return M

    def validate(self, model: SystemModel) -> None:
        if self.n_sc < 2:
            raise ConfigurationError(f"n_sc must be >= 2, got {self.n_sc}")
        if self.sigma_p < 0:
            raise ConfigurationError(f"sigma_p must be >= 0, got {self.sigma_p}")
        if len(self.x_min) != model.n_x or len(self.x_max) != model.n_x:
            raise ConfigurationError("state bounds must have one entry per state")
        if any(lo > hi for lo, hi in zip(self.x_min, self.x_max)):
            raise ConfigurationError("x_min must not exceed x_max")
        if self.n_steps(model) < 1:
            raise ConfigurationError("t_f must cover at least one sampling period")


def default_scenario_config(system: str, sigma_p: float = 0.0, seed: int = 0) -> ScenarioSetConfig:
    """Data-generation settings used for the two benchmarks."""
    if system == ETC:
        return ScenarioSetConfig(100, 3.0, sigma_p, (-0.5,) * 3, (0.5,) * 3, seed)
    if system == LORENTZ:
        return ScenarioSetConfig(250, 4.0, sigma_p, (-1.0,) * 3, (1.0,) * 3, seed)
    raise ConfigurationError(f"unknown system {system!r}")


def make_scenario(model: SystemModel, config: ScenarioSetConfig, scenario_id: int) -> Scenario:
    # draw order is fixed: state, input law, parameters
    rng = substream(config.seed, STREAM_SCENARIO, scenario_id)
    x0 = rng.uniform(np.asarray(config.x_min, float), np.asarray(config.x_max, float))
    law = sample_input_law(rng) if model.n_u else None
    p = sample_parameters(rng, model.p_nominal, config.sigma_p)
    return Scenario(x0, law, p, scenario_id)


def generate_scenario_set(model: SystemModel, config: ScenarioSetConfig) -> list[Scenario]:
    config.validate(model)
    return [make_scenario(model, config, i) for i in range(config.n_sc)]


def simulate_scenarios(model: SystemModel, scenarios, M: int):
    """Simulate every scenario in one batched integration.

    Returns a list aligned with ``scenarios`` holding a Trajectory, or None for
    scenarios that diverged.
    """
    if not scenarios:
        return []
    times = np.arange(M + 1) * model.tau
    x0 = np.stack([s.x0 for s in scenarios])
    p = np.stack([s.p for s in scenarios])
    u = np.stack([s.input_values(times, model.n_u) for s in scenarios])
    states, diverged_at = simulate_batch(model, x0, p, u, M)
    return [None if diverged_at[i] >= 0 else make_trajectory(model, states[i], u[i])
            for i in range(len(scenarios))]


def write_scenarios(path, scenarios) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in scenarios:
            fh.write(json.dumps(s.to_record()) + "\n")


def read_scenarios(path) -> list[Scenario]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(Scenario.from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(Path(path), lineno, f"bad scenario record ({exc})") from exc
    return out
