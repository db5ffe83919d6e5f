import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from polyest.errors import ConfigurationError, SimulationDiverged
from polyest.systems import (ETC_NOMINAL, P_ATM, etc_model, get_model, lorentz_model, measure, rhs,
                             rk4_step, simulate, simulate_batch, target)


def etc_oracle(x, u, p, p_atm=P_ATM):
    """Scalar transcription of the throttle model."""
    n_m, j_m, j_g, b_m, b_t, k_sp, k_t, r_p, r_af, l_a, k_b, r_a = p
    x1, x2, x3 = x
    phi = (-k_sp * (x1 - math.pi / 2) - (n_m ** 2 * b_m + b_t) * x2
           - 2 * p_atm * (math.pi - x1) * r_p ** 2 * r_af * math.cos(x1) ** 2)
    return [x2,
            (phi + n_m * k_t * x3) / (n_m ** 2 * j_m + j_g),
            (-n_m * k_b * x2 - r_a * x3 + u) / l_a]


def test_nominal_values():
    etc = etc_model()
    assert etc.n_p == 12 and etc.n_y == 2 and etc.tau == 1e-3
    assert ETC_NOMINAL[0] == 4 and ETC_NOMINAL[5] == 0.4316 and ETC_NOMINAL[11] == 1.9
    lor = lorentz_model()
    assert lor.p_nominal == (10.0, 28.0, 3.34) and lor.tau == 1e-2 and lor.n_u == 0
    assert get_model("Lorenz") == lor
    with pytest.raises(ConfigurationError):
        get_model("pendulum")


def test_lorentz_rhs_by_hand():
    m = lorentz_model()
    f = rhs(m, [1.0, 2.0, 3.0], np.zeros(0), m.p_array)
    # 10(2-1), 1(28-3)-2, 1*2-3.34*3
    np.testing.assert_allclose(f, [10.0, 23.0, 2.0 - 10.02], rtol=0, atol=1e-12)


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(-50, 50),
       st.lists(st.floats(-0.3, 0.3), min_size=12, max_size=12))
def test_etc_rhs_matches_oracle(x, u, eta):
    m = etc_model()
    p = m.p_array * (1 + np.asarray(eta))
    got = rhs(m, np.asarray(x), np.array([u]), p)
    np.testing.assert_allclose(got, etc_oracle(x, u, p), rtol=1e-12, atol=1e-9)


def test_rhs_broadcasts_over_batches(rng):
    m = lorentz_model()
    x = rng.normal(size=(4, 7, 3))
    batched = rhs(m, x, np.zeros((4, 7, 0)), m.p_array)
    single = np.array([[rhs(m, x[i, j], np.zeros(0), m.p_array) for j in range(7)] for i in range(4)])
    np.testing.assert_array_equal(batched, single)


def test_dimension_checks():
    m = etc_model()
    with pytest.raises(ConfigurationError):
        rhs(m, np.zeros(2), np.zeros(1), m.p_array)
    with pytest.raises(ConfigurationError):
        rhs(m, np.zeros(3), np.zeros(1), m.p_array[:5])
    with pytest.raises(ConfigurationError):
        target(m, np.zeros(3), 3)


def test_measure_and_target():
    etc, lor = etc_model(), lorentz_model()
    x = np.array([0.1, 0.2, 0.3])
    np.testing.assert_array_equal(measure(etc, x, [5.0]), [0.1, 5.0])
    np.testing.assert_array_equal(measure(lor, x), [0.1])
    assert target(etc, x, 1) == 0.2 and target(lor, x, 2) == 0.3


def _decay_error(tau, x0, T=1.0):
    steps = int(round(T / tau))
    x = np.array([x0])
    for k in range(steps):
        x = rk4_step(lambda x, u, p: -x, x, None, None, tau, k)
    return abs(x[0] - x0 * math.exp(-T))


@given(st.sampled_from([0.1, 0.05, 0.04, 0.025, 0.02]), st.floats(0.5, 5.0))
def test_rk4_fourth_order(tau, x0):
    ratio = _decay_error(tau, x0) / _decay_error(tau / 2, x0)
    assert 14 <= ratio <= 18


def test_rk4_step_flags_non_finite():
    with pytest.raises(SimulationDiverged) as info:
        rk4_step(lambda x, u, p: x * np.inf, np.ones(3), None, None, 0.1, step=7)
    assert info.value.step == 7
    with pytest.raises(ConfigurationError):
        rk4_step(lambda x, u, p: x, np.ones(1), None, None, 0.0)


def test_batch_matches_stepwise(rng):
    m = etc_model()
    M = 50
    x0 = rng.uniform(-0.5, 0.5, size=(3, 3))
    p = m.p_array * (1 + 0.1 * rng.standard_normal((3, 12)))
    u = rng.uniform(-10, 10, size=(3, M + 1, 1))
    states, div = simulate_batch(m, x0, p, u, M)
    assert np.all(div == -1)
    for b in range(3):
        x = x0[b]
        for k in range(M):
            x = rk4_step(lambda xs, us, ps: rhs(m, xs, us, ps), x, u[b, k], p[b], m.tau, k)
        np.testing.assert_allclose(states[b, -1], x, rtol=1e-13, atol=1e-13)


def test_divergence_is_reported():
    m = lorentz_model()
    p = np.array([[10.0, 28.0, 3.34], [10.0, 28.0, -60.0]])   # negative damping explodes
    states, div = simulate_batch(m, np.ones((2, 3)), p, np.zeros((2, 401, 0)), 400)
    assert div[0] == -1 and div[1] > 0
    assert np.isnan(states[1, div[1]:]).all() and np.isfinite(states[1, :div[1]]).all()
    assert np.isfinite(states[0]).all()


class _Fixed:
    def __init__(self, x0, p, u=0.0):
        self.x0, self.p, self.u = np.asarray(x0, float), np.asarray(p, float), u

    def input_values(self, times, n_u):
        return np.full((len(times), n_u), self.u)


def test_simulate_trajectory_layout():
    m = etc_model()
    traj = simulate(m, _Fixed([0.1, 0.0, 0.0], m.p_array, 2.0), 20)
    assert traj.states.shape == (21, 3) and traj.measurements.shape == (21, 2)
    np.testing.assert_allclose(traj.times, np.arange(21) * 1e-3)
    np.testing.assert_array_equal(traj.targets[:, 0], traj.states[:, 1])
    np.testing.assert_array_equal(traj.measurements[:, 1], 2.0)
    with pytest.raises(SimulationDiverged):
        simulate(lorentz_model(), _Fixed([1, 1, 1], [10, 28, -60]), 400)
