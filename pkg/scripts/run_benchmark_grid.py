"""Full benchmark grid: both systems, both targets, dispersion x noise.

Thin wrapper over ``polyest reproduce``; every extra argument is forwarded.
Expect roughly an hour on one core for the whole grid (the ETC cells dominate).

    python scripts/run_benchmark_grid.py --out results/grid --jobs 4
    python scripts/run_benchmark_grid.py --system lorentz --target x2
"""
import sys

from polyest.cli import main

if __name__ == "__main__":
    sys.exit(main(["reproduce", *sys.argv[1:]]))
