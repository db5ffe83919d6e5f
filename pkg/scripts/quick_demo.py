"""Small end-to-end run on the Lorentz oscillator (well under a minute).

    python scripts/quick_demo.py --sigma-p 0.05 --noise 0.025
"""
import argparse
import logging

from polyest.experiment import ExperimentConfig, run_cell


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sigma-p", type=float, default=0.05)
    ap.add_argument("--noise", type=float, default=0.025)
    ap.add_argument("--n-sc", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)

    cfg = ExperimentConfig(system="lorentz", target=1, sigma_p=args.sigma_p, noise=args.noise,
                           n_sc=args.n_sc, seed=args.seed, keep_every=5)
    models, report = run_cell(cfg)
    plars = models["plars"]
    print(f"plars: degree {plars.grid_degree}, {len(plars.coeffs)} monomials kept "
          f"out of {plars.info['n_candidates']}")
    print(f"knn: k={models['knn'].k}")
    print(report.to_text())


if __name__ == "__main__":
    main()
