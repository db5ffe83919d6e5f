"""Relative error percentiles and plars-referenced comparison tables."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateTargetError

QUANTILES = (50, 80, 95, 99)
EPSILON = 0.001
REFERENCE = "plars"


def percentile(values, q: float) -> float:
    """Linear interpolation between order statistics at position (n-1) q/100."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("percentile of an empty vector")
    if not 0 <= q <= 100:
        raise ValueError(f"q must lie in [0, 100], got {q}")
    return float(np.percentile(values, q, method="linear"))


def relative_percentile(z, z_hat, q: float) -> float:
    """q-th percentile of |z - z_hat| divided by the median of |z|."""
    z = np.asarray(z, dtype=float)
    z_hat = np.asarray(z_hat, dtype=float)
    if z.shape != z_hat.shape or z.size == 0:
        raise ConfigurationError("targets and predictions must be non-empty and equally long")
    med = percentile(np.abs(z), 50)
    if med <= 0:
        raise DegenerateTargetError("median |z| is zero; relative errors are undefined")
    return percentile(np.abs(z - z_hat), q) / med


def comparison_ratio(p_algo: float, p_plars: float, epsilon: float = EPSILON) -> float:
    """Percent by which ``p_algo`` is worse than the plars reference (negative = better)."""
    return 100.0 * (p_algo - p_plars) / (p_plars + epsilon)


@dataclass
class MetricsReport:
    system: str
    target: int
    sigma_p: float
    noise: float
    algorithm: str
    p: dict
    n_samples: int


@dataclass
class ComparisonCell:
    algorithm: str
    q: int
    relative_pct: float


@dataclass
class Report:
    rows: list
    comparisons: list = field(default_factory=list)

    def to_text(self) -> str:
        return render_text(self)

    def to_csv(self) -> str:
        return render_csv(self)


def metrics_row(z, z_hat, algorithm: str, meta: dict, quantiles=QUANTILES) -> MetricsReport:
    z = np.asarray(z, dtype=float)
    p = {int(q): relative_percentile(z, z_hat, q) for q in quantiles}
    return MetricsReport(str(meta.get("system", "")), int(meta.get("target", 0)),
                         float(meta.get("sigma_p", 0.0)), float(meta.get("noise", 0.0)),
                         algorithm, p, len(z))


def build_report(models: dict, test, quantiles=QUANTILES, reference: str = REFERENCE) -> Report:
    """Score every model on the (noisy) test features against the clean labels.

    ``models`` maps algorithm name to anything with ``predict(rows)`` and an
    ``n_xi`` attribute.  The reference algorithm, when present, is reported in
    absolute terms and every other algorithm relative to it.
    """
    rows = []
    names = sorted(models, key=lambda n: n != reference)   # reference first, rest in order
    for name in names:
        model = models[name]
        if getattr(model, "n_xi", test.n_xi) != test.n_xi:
            raise ConfigurationError(f"model {name!r} expects {model.n_xi} features, "
                                     f"test set has {test.n_xi}")
        rows.append(metrics_row(test.labels, model.predict(test.features), name, test.meta, quantiles))
    comparisons = []
    ref = next((r for r in rows if r.algorithm == reference), None)
    if ref is not None:
        for r in rows:
            if r is ref:
                continue
            for q in quantiles:
                comparisons.append(ComparisonCell(r.algorithm, int(q),
                                                  comparison_ratio(r.p[q], ref.p[q])))
    return Report(rows, comparisons)


CSV_FIELDS = ("system", "target", "sigma_p", "noise", "algorithm", "q", "p_q",
              "relative_pct", "n_samples")


def csv_records(report: Report):
    rel = {(c.algorithm, c.q): c.relative_pct for c in report.comparisons}
    for r in report.rows:
        for q, val in r.p.items():
            pct = rel.get((r.algorithm, q))
            yield {"system": r.system, "target": r.target, "sigma_p": repr(r.sigma_p),
                   "noise": repr(r.noise), "algorithm": r.algorithm, "q": q, "p_q": repr(val),
                   "relative_pct": "" if pct is None else repr(pct), "n_samples": r.n_samples}


def render_csv(report: Report) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(csv_records(report))
    return buf.getvalue()


def render_text(report: Report, reference: str = REFERENCE) -> str:
    """Aligned table: reference row in absolute p_q, others as signed percentages."""
    if not report.rows:
        return "(empty report)\n"
    quantiles = list(report.rows[0].p)
    rel = {(c.algorithm, c.q): c.relative_pct for c in report.comparisons}
    has_ref = any(r.algorithm == reference for r in report.rows)
    head = report.rows[0]
    lines = [f"system={head.system} target=x{head.target + 1} sigma_p={head.sigma_p:g} "
             f"noise={head.noise:g} n_test={head.n_samples}"]
    header = ["algorithm"] + [f"p{q}" for q in quantiles]
    table = [header]
    for r in report.rows:
        if r.algorithm == reference or not has_ref:
            cells = [f"{r.p[q]:.4g}" for q in quantiles]
        else:
            cells = [f"{rel[(r.algorithm, q)]:+.1f}%" for q in quantiles]
        table.append([r.algorithm] + cells)
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    for row in table:
        lines.append("  ".join(cell.ljust(w) if i == 0 else cell.rjust(w)
                               for i, (cell, w) in enumerate(zip(row, widths))))
    return "\n".join(lines) + "\n"
