"""Spread of the robust-case p80 over seeds, with least-squares reference fits.

For one system at sigma_p=0.1 and noise=0.05 this prints, per seed, the plars
p80 together with two references:

* ``ols_fit_set``: plain least squares on every monomial of the selected
  degree, fitted on the same small fit set;
* ``ols_all_train``: the same but fitted on all training rows (20x more data),
  which approximates the best a polynomial of that degree can do here.

    python scripts/robust_seed_sweep.py lorentz --seeds 0 1 2 3
"""
import argparse

import numpy as np

from polyest.dataset import fit_scaler, split_fit_validation
from polyest.evalkit import relative_percentile
from polyest.experiment import (FIT, TEST, VALIDATION, ExperimentConfig, evaluate_models,
                                fit_models, generate_datasets, noisy)
from polyest.polyfit import monomial_columns, monomial_indices, ols_fit


def ols_reference(rows, labels, test_rows, test_labels, scaler, degree):
    idx = monomial_indices(rows.shape[1], degree)
    coef = ols_fit(monomial_columns(scaler.apply(rows), idx), labels)
    pred = monomial_columns(scaler.apply(test_rows), idx) @ coef
    return relative_percentile(test_labels, pred, 80)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("system", choices=("etc", "lorentz"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3])
    ap.add_argument("--sigma-p", type=float, default=0.1)
    ap.add_argument("--noise", type=float, default=0.05)
    args = ap.parse_args()

    print("seed  plars_p80  degree  knn_rel80  ols_fit_set  ols_all_train")
    for seed in args.seeds:
        cfg = ExperimentConfig(system=args.system, sigma_p=args.sigma_p, noise=args.noise,
                               seed=seed).resolved()
        _, train, test = generate_datasets(cfg)
        models = fit_models(cfg, train)
        report = evaluate_models(cfg, models, test)
        p80 = next(r.p[80] for r in report.rows if r.algorithm == "plars")
        rel = next(c.relative_pct for c in report.comparisons if c.q == 80)
        d = models["plars"].grid_degree

        fit, val = split_fit_validation(train, cfg.keep_every)
        scaler = fit_scaler(fit.features)
        fit_n, val_n = noisy(fit, scaler, cfg, FIT), noisy(val, scaler, cfg, VALIDATION)
        test_n = noisy(test, scaler, cfg, TEST)
        small = ols_reference(fit_n.features, fit_n.labels, test_n.features, test_n.labels, scaler, d)
        rows = np.concatenate([fit_n.features, val_n.features])
        labels = np.concatenate([fit_n.labels, val_n.labels])
        full = ols_reference(rows, labels, test_n.features, test_n.labels, scaler, d)
        print(f"{seed:4d}  {p80:9.4f}  {d:6d}  {rel:+8.1f}%  {small:11.4f}  {full:13.4f}")


if __name__ == "__main__":
    main()
