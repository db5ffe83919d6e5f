import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from polyest.baselines import KnnModel
from polyest.dataset import WindowedDataset
from polyest.errors import ConfigurationError, DegenerateTargetError
from polyest.evalkit import (QUANTILES, build_report, comparison_ratio, percentile,
                             relative_percentile, render_csv)


def percentile_oracle(values, q):
    """Sort, then interpolate linearly at position (n - 1) q / 100."""
    s = sorted(float(v) for v in values)
    pos = (len(s) - 1) * q / 100.0
    lo = int(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (pos - lo) * (s[hi] - s[lo])


def test_percentile_oracle_on_random_vectors():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        v = rng.standard_exponential(int(rng.integers(1, 300))) * 10.0 ** rng.uniform(-3, 3)
        q = float(rng.uniform(0, 100))
        ref = percentile_oracle(v, q)
        worst = max(worst, abs(percentile(v, q) - ref) / max(1.0, abs(ref)))
    assert worst <= 1e-12


@given(hnp.arrays(np.float64, st.integers(1, 50), elements=st.floats(-1e6, 1e6)),
       st.floats(0, 100))
def test_percentile_property(v, q):
    ref = percentile_oracle(v, q)
    assert abs(percentile(v, q) - ref) <= 1e-12 * max(1.0, abs(ref))


def test_percentile_argument_checks():
    with pytest.raises(ValueError):
        percentile([], 50)
    with pytest.raises(ValueError):
        percentile([1.0], 101)
    assert percentile([3.0, 1.0, 2.0], 50) == 2.0 and percentile([0.0, 10.0], 80) == 8.0


@given(hnp.arrays(np.float64, st.integers(2, 60), elements=st.floats(-50, 50)),
       st.integers(0, 2 ** 16))
def test_relative_percentile_monotone_in_q(z, seed):
    if np.median(np.abs(z)) == 0:
        z = z + 1.0
    z_hat = z + np.random.default_rng(seed).normal(size=z.shape)
    p = [relative_percentile(z, z_hat, q) for q in (0, 25, 50, 80, 95, 99, 100)]
    assert all(b >= a for a, b in zip(p, p[1:]))


def test_relative_percentile_values_and_errors():
    z = np.array([1.0, -2.0, 3.0, -4.0, 5.0])
    err = np.array([0.0, 0.1, 0.2, 0.3, 0.4])
    assert relative_percentile(z, z - err, 50) == pytest.approx(0.2 / 3.0)
    with pytest.raises(DegenerateTargetError):
        relative_percentile(np.zeros(5), np.ones(5), 50)
    with pytest.raises(ConfigurationError):
        relative_percentile(z, z[:3], 50)


def test_comparison_ratio():
    assert comparison_ratio(0.2, 0.1) == pytest.approx(100 * 0.1 / 0.101)
    assert comparison_ratio(0.05, 0.1) < 0
    assert comparison_ratio(0.0, 0.0) == 0.0
    assert comparison_ratio(0.001, 0.0) == pytest.approx(100.0)


class Exact:
    n_xi = 2

    def predict(self, rows):
        return rows[:, 0] * 2


def small_test_set(rng):
    rows = rng.normal(size=(40, 2))
    return WindowedDataset(rows, rows[:, 0] * 2, np.zeros(40, int), np.arange(40),
                           {"system": "lorentz", "target": 1, "sigma_p": 0.05, "noise": 0.025})


def test_report_layout(rng):
    test = small_test_set(rng)
    knn = KnnModel(rng.normal(size=(30, 2)), rng.normal(size=30), 3)
    report = build_report({"knn": knn, "plars": Exact()}, test)
    assert [r.algorithm for r in report.rows] == ["plars", "knn"]
    assert list(report.rows[0].p) == list(QUANTILES) and report.rows[0].p[99] == 0.0
    assert {(c.algorithm, c.q) for c in report.comparisons} == {("knn", q) for q in QUANTILES}
    for c in report.comparisons:
        assert c.relative_pct == pytest.approx(comparison_ratio(report.rows[1].p[c.q], 0.0))
    text = report.to_text()
    assert "p50" in text and "p99" in text and "%" in text and "sigma_p=0.05" in text
    lines = render_csv(report).splitlines()
    assert lines[0] == "system,target,sigma_p,noise,algorithm,q,p_q,relative_pct,n_samples"
    assert len(lines) == 1 + 2 * len(QUANTILES)
    assert [line.split(",")[5] for line in lines[1:5]] == ["50", "80", "95", "99"]
    assert render_csv(report) == render_csv(build_report({"knn": knn, "plars": Exact()}, test))


def test_report_rejects_width_mismatch(rng):
    knn = KnnModel(rng.normal(size=(30, 3)), rng.normal(size=30), 3)
    with pytest.raises(ConfigurationError):
        build_report({"knn": knn}, small_test_set(rng))
