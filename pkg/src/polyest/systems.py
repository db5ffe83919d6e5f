"""Benchmark dynamics: the electronic throttle (ETC) and the Lorentz oscillator.

Both systems are exposed as immutable :class:`SystemModel` records together with
pure functions for the right-hand side, the measurement map and the observation
targets.  Integration is a fixed-step classical RK4 with the input held constant
over each sampling period.

All state/parameter functions broadcast over leading axes, so a batch of
scenarios can be advanced in one call with ``x`` of shape ``(B, 3)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, SimulationDiverged

ETC = "etc"
LORENTZ = "lorentz"

P_ATM = 101325.0
DIVERGENCE_CAP = 1e6

ETC_PARAM_NAMES = ("N_m", "J_m", "J_g", "b_m", "b_t", "K_sp",
                   "K_t", "R_p", "R_af", "L_a", "K_b", "R_a")
ETC_NOMINAL = (4.0, 0.0004, 0.005, 0.03, 3.4e-3, 0.4316,
               0.1045, 0.0015, 0.002, 0.003, 0.1051, 1.9)
LORENTZ_PARAM_NAMES = ("p1", "p2", "p3")
LORENTZ_NOMINAL = (10.0, 28.0, 3.34)


@dataclass(frozen=True)
class SystemModel:
    kind: str
    n_x: int
    n_u: int
    n_p: int
    n_y: int
    p_nominal: tuple
    tau: float
    param_names: tuple = field(default=())
    p_atm: float = P_ATM

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigurationError(f"sampling period must be positive, got {self.tau}")
        if len(self.p_nominal) != self.n_p:
            raise ConfigurationError("p_nominal length does not match n_p")
        if any(v <= 0 for v in self.p_nominal):
            raise ConfigurationError("nominal parameters must be strictly positive")

    @property
    def p_array(self) -> np.ndarray:
        return np.asarray(self.p_nominal, dtype=float)


def etc_model(p_atm: float = P_ATM) -> SystemModel:
    """Electronic throttle: x = (angle, angular rate, armature current), y = (angle, u)."""
    return SystemModel(ETC, n_x=3, n_u=1, n_p=12, n_y=2, p_nominal=ETC_NOMINAL,
                       tau=1e-3, param_names=ETC_PARAM_NAMES, p_atm=float(p_atm))


def lorentz_model() -> SystemModel:
    """Autonomous Lorentz oscillator measured through its first state."""
    return SystemModel(LORENTZ, n_x=3, n_u=0, n_p=3, n_y=1, p_nominal=LORENTZ_NOMINAL,
                       tau=1e-2, param_names=LORENTZ_PARAM_NAMES)


def get_model(name: str, **kwargs) -> SystemModel:
    key = name.lower()
    if key == ETC:
        return etc_model(**kwargs)
    if key in (LORENTZ, "lorenz"):
        return lorentz_model()
    raise ConfigurationError(f"unknown system {name!r}; expected 'etc' or 'lorentz'")


def _check_last_dim(arr, n, what):
    if arr.shape[-1] != n:
        raise ConfigurationError(f"{what} has trailing dimension {arr.shape[-1]}, expected {n}")


def etc_phi(x, p, p_atm: float = P_ATM):
    """Spring, friction and air-flow torque acting on the throttle plate.

    ``p`` holds the twelve throttle parameters in the order of
    :data:`ETC_PARAM_NAMES`; the atmospheric pressure is passed separately.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    n_m, b_m, b_t, k_sp = p[..., 0], p[..., 3], p[..., 4], p[..., 5]
    r_p, r_af = p[..., 7], p[..., 8]
    return (-k_sp * (x1 - math.pi / 2)
            - (n_m ** 2 * b_m + b_t) * x2
            - 2.0 * p_atm * (math.pi - x1) * r_p ** 2 * r_af * np.cos(x1) ** 2)


def rhs(model: SystemModel, x, u, p):
    """State derivative f(x, u, p) of ``model``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    _check_last_dim(x, model.n_x, "state")
    _check_last_dim(p, model.n_p, "parameter vector")
    if model.n_u:
        _check_last_dim(u, model.n_u, "input")

    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    if model.kind == ETC:
        n_m, j_m, j_g = p[..., 0], p[..., 1], p[..., 2]
        k_t, l_a, k_b, r_a = p[..., 6], p[..., 9], p[..., 10], p[..., 11]
        torque = etc_phi(x, p, model.p_atm) + n_m * k_t * x3
        dx2 = torque / (n_m ** 2 * j_m + j_g)
        dx3 = (-n_m * k_b * x2 - r_a * x3 + u[..., 0]) / l_a
        return np.stack([x2, dx2, dx3], axis=-1)
    if model.kind == LORENTZ:
        p1, p2, p3 = p[..., 0], p[..., 1], p[..., 2]
        return np.stack([p1 * (x2 - x1), x1 * (p2 - x3) - x2, x1 * x2 - p3 * x3], axis=-1)
    raise ConfigurationError(f"unknown system kind {model.kind!r}")


def measure(model: SystemModel, x, u=None):
    """Measurement vector: (angle, input) for ETC, first state for Lorentz."""
    x = np.asarray(x, dtype=float)
    _check_last_dim(x, model.n_x, "state")
    if model.kind == ETC:
        u = np.asarray(u, dtype=float)
        _check_last_dim(u, model.n_u, "input")
        return np.concatenate([x[..., :1], u], axis=-1)
    return x[..., :1].copy()


def target(model: SystemModel, x, which: int):
    """Observation target: ``which=1`` selects x2, ``which=2`` selects x3."""
    if which not in (1, 2):
        raise ConfigurationError(f"target id must be 1 or 2, got {which!r}")
    x = np.asarray(x, dtype=float)
    return x[..., which]


def rk4_step(derivative: Callable, x, u, p, tau: float, step: int = 0):
    """One classical Runge-Kutta step with ``u`` held over the whole interval."""
    if not tau > 0:
        raise ConfigurationError(f"step must be positive, got {tau}")
    x = np.asarray(x, dtype=float)
    k1 = derivative(x, u, p)
    k2 = derivative(x + 0.5 * tau * k1, u, p)
    k3 = derivative(x + 0.5 * tau * k2, u, p)
    k4 = derivative(x + tau * k3, u, p)
    x_next = x + (tau / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_next)):
        raise SimulationDiverged(step)
    return x_next


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    measurements: np.ndarray
    targets: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1


def simulate_batch(model: SystemModel, x0, p, inputs, M: int):
    """Integrate ``B`` scenarios side by side.

    Parameters
    ----------
    x0 : (B, n_x) initial states
    p : (B, n_p) parameter vectors
    inputs : (B, M + 1, n_u) input samples u(t_k)
    M : number of sampling periods

    Returns
    -------
    states : (B, M + 1, n_x) array; rows of diverged scenarios are NaN from the
        divergence step onwards
    diverged_at : (B,) int array, -1 where the scenario stayed bounded
    """
    if M < 1:
        raise ConfigurationError(f"M must be >= 1, got {M}")
    x = np.array(x0, dtype=float, ndmin=2)
    p = np.array(p, dtype=float, ndmin=2)
    B = x.shape[0]
    inputs = np.asarray(inputs, dtype=float).reshape(B, M + 1, model.n_u)
    _check_last_dim(x, model.n_x, "initial state")
    _check_last_dim(p, model.n_p, "parameter vector")

    states = np.empty((B, M + 1, model.n_x))
    states[:, 0] = x
    diverged_at = np.full(B, -1, dtype=int)
    alive = np.ones(B, dtype=bool)
    tau = model.tau

    def f(xs, us, ps):
        return rhs(model, xs, us, ps)

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(M):
            k1 = f(x, inputs[:, k], p)
            k2 = f(x + 0.5 * tau * k1, inputs[:, k], p)
            k3 = f(x + 0.5 * tau * k2, inputs[:, k], p)
            k4 = f(x + tau * k3, inputs[:, k], p)
            x = x + (tau / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            bad = alive & ~(np.all(np.isfinite(x), axis=1)
                            & np.all(np.abs(x) <= DIVERGENCE_CAP, axis=1))
            if bad.any():
                diverged_at[bad] = k + 1
                alive &= ~bad
                x[bad] = 0.0
            states[:, k + 1] = x
    for b in np.flatnonzero(diverged_at >= 0):
        states[b, diverged_at[b]:] = np.nan
    return states, diverged_at


def make_trajectory(model: SystemModel, states, inputs) -> Trajectory:
    M = states.shape[0] - 1
    times = np.arange(M + 1) * model.tau
    inputs = np.asarray(inputs, dtype=float).reshape(M + 1, model.n_u)
    meas = measure(model, states, inputs)
    targets = np.stack([target(model, states, 1), target(model, states, 2)], axis=-1)
    return Trajectory(times, states, inputs, meas, targets)


def simulate(model: SystemModel, scenario, M: int) -> Trajectory:
    """Simulate one scenario (anything exposing ``x0``, ``p`` and ``input_values``)."""
    times = np.arange(M + 1) * model.tau
    u = scenario.input_values(times, model.n_u)
    states, diverged_at = simulate_batch(model, scenario.x0, scenario.p, u[None], M)
    if diverged_at[0] >= 0:
        raise SimulationDiverged(diverged_at[0])
    return make_trajectory(model, states[0], u)
