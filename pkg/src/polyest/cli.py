"""Command line entry point: ``polyest generate | fit | evaluate | reproduce``.

Every stage reads and writes plain files under ``--out`` (default taken from
``$POLYEST_OUT``, then ``./results``).  Flags override keys of the optional
JSON ``--config`` file.

Exit codes: 0 success, 1 numerical or fitting failure, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, evalkit
from .dataset import export_dataset, import_dataset
from .errors import (CapacityError, ConfigurationError, DegenerateTargetError, NumericError,
                     ParseError, PolyestError, SchemaError, SimulationDiverged, SplitError)
from .experiment import (ExperimentConfig, default_out, evaluate_models, fit_models, generate_datasets,
                         model_from_dict)
from .scenarios import SIGMA_P_GRID, write_scenarios

log = logging.getLogger("polyest")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
NOISE_GRID = (0.0, 0.025, 0.05)
SYSTEMS = ("etc", "lorentz")
TARGETS = (1, 2)
_USAGE_ERRORS = (ConfigurationError, SchemaError, ParseError, SplitError, FileNotFoundError,
                 ValueError, TypeError)
_FIT_ERRORS = (NumericError, DegenerateTargetError, SimulationDiverged, CapacityError)

# flag name -> ExperimentConfig field
_OVERRIDES = {
    "system": "system", "target": "target", "sigma_p": "sigma_p", "noise": "noise",
    "seed": "seed", "out": "out", "method": "method", "degree_grid": "degree_grid",
    "window": "window_w", "keep_every": "keep_every", "knn_grid": "knn_grid",
    "n_sc": "n_sc", "t_f": "t_f",
}


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("experiment")
    g.add_argument("--config", help="JSON file with ExperimentConfig keys")
    g.add_argument("--system", choices=SYSTEMS)
    g.add_argument("--target", help="1/x2 or 2/x3")
    g.add_argument("--sigma-p", type=float, help="relative parameter dispersion")
    g.add_argument("--noise", type=float, help="measurement noise std (standardized scale)")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="output directory (default: $POLYEST_OUT or ./results)")
    g.add_argument("--method", help="comma-separated subset of plars,knn")
    g.add_argument("--degree-grid", type=_int_list, help="e.g. 1,3,5")
    g.add_argument("--window", type=int, help="plars candidate window size")
    g.add_argument("--keep-every", type=int, help="fit-set stride over the training rows")
    g.add_argument("--knn-grid", type=_int_list, help="e.g. 1,3,5,10")
    g.add_argument("--n-sc", type=int, help="number of scenarios")
    g.add_argument("--t-f", type=float, help="scenario duration in seconds")
    g.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="polyest", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="simulate scenarios, write train/test files")

    f = sub.add_parser("fit", parents=[common], help="fit estimators on a training file")
    f.add_argument("--train", help="training CSV (default: OUT/train.csv)")

    e = sub.add_parser("evaluate", parents=[common], help="score model files on a test file")
    e.add_argument("--models", nargs="+", help="model JSON files (default: OUT/models/*.json)")
    e.add_argument("--test", help="test CSV (default: OUT/test.csv)")

    r = sub.add_parser("reproduce", parents=[common], help="run the full benchmark grid")
    r.add_argument("--jobs", type=int, default=1, help="cells run in parallel")
    r.add_argument("--cells", type=int, help="only run the first K cells (1 = nominal smoke cell)")
    r.add_argument("--sigma-grid", help="comma-separated dispersion levels")
    r.add_argument("--noise-grid", help="comma-separated noise levels")
    return p


def merged_config(args) -> ExperimentConfig:
    """Config file (if any) with command line flags layered on top, unresolved."""
    base = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    updates = {field: getattr(args, flag) for flag, field in _OVERRIDES.items()
               if getattr(args, flag, None) is not None}
    return replace(base, **updates)


def resolve_config(args) -> ExperimentConfig:
    return merged_config(args).resolved()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _provenance(cfg: ExperimentConfig, **extra) -> dict:
    return {"config": cfg.to_dict(), "seed": cfg.seed, "version": __version__, **extra}


def _check_schema(meta: dict, cfg: ExperimentConfig, path) -> None:
    for key, want in (("system", cfg.system), ("target", cfg.target), ("N", cfg.N), ("m", cfg.m)):
        if key in meta and meta[key] != want:
            raise SchemaError(f"{path}: dataset {key}={meta[key]!r} but config has {want!r}")


# ------------------------------------------------------------------ stages

def cmd_generate(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    scenarios, train, test = generate_datasets(cfg)
    echo = _provenance(cfg)
    for name, ds in (("train", train), ("test", test)):
        ds.meta["config"] = echo["config"]
        export_dataset(ds, out / f"{name}.csv")
    write_scenarios(out / "scenarios.jsonl", scenarios)
    _write_json(out / "config.json", echo)
    log.info("wrote %d train / %d test rows to %s", len(train), len(test), out)
    return {"train": out / "train.csv", "test": out / "test.csv"}


def cmd_fit(cfg: ExperimentConfig, train_path=None) -> list:
    out = Path(cfg.out)
    train_path = Path(train_path or out / "train.csv")
    if not train_path.exists():
        raise FileNotFoundError(f"training file not found: {train_path}")
    train = import_dataset(train_path)
    _check_schema(train.meta, cfg, train_path)
    models = fit_models(cfg, train)
    (out / "models").mkdir(parents=True, exist_ok=True)
    written = []
    for name, model in models.items():
        path = out / "models" / f"{name}.json"
        d = model.to_dict()
        d["provenance"] = _provenance(cfg, train=str(train_path), n_train=len(train))
        path.write_text(json.dumps(d) + "\n", encoding="utf-8")
        written.append(path)
        log.info("wrote %s", path)
    return written


def load_models(paths) -> dict:
    models = {}
    for path in paths:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"model file not found: {path}")
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(path, exc.lineno, exc.msg) from exc
        try:
            models[d.get("kind", path.stem)] = model_from_dict(d)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: malformed model file ({exc})") from exc
    return models


def _write_report(report: evalkit.Report, out: Path, stem: str, echo: dict) -> None:
    (out / f"{stem}.csv").write_text(report.to_csv(), encoding="utf-8")
    head = f"# seed={echo['seed']} config={json.dumps(echo['config'], sort_keys=True)}\n"
    (out / f"{stem}.txt").write_text(head + report.to_text(), encoding="utf-8")
    _write_json(out / f"{stem}.meta.json", echo)


def cmd_evaluate(cfg: ExperimentConfig, model_paths=None, test_path=None) -> evalkit.Report:
    out = Path(cfg.out)
    if not model_paths:
        model_paths = sorted((out / "models").glob("*.json"))
        if not model_paths:
            raise FileNotFoundError(f"model file not found: no *.json under {out / 'models'}")
    models = load_models(model_paths)
    test_path = Path(test_path or out / "test.csv")
    if not test_path.exists():
        raise FileNotFoundError(f"test file not found: {test_path}")
    test = import_dataset(test_path)
    _check_schema(test.meta, cfg, test_path)
    report = evaluate_models(cfg, models, test)
    out.mkdir(parents=True, exist_ok=True)
    _write_report(report, out, "report", _provenance(cfg, models=[str(p) for p in model_paths],
                                                      test=str(test_path)))
    return report


# ------------------------------------------------------------------ reproduce

def grid_cells(cfg: ExperimentConfig, systems=None, targets=None,
               sigmas=SIGMA_P_GRID, noises=NOISE_GRID) -> list:
    """Every (system, target, sigma_p, noise) cell in a fixed order, nominal first.

    ``cfg`` is the unresolved base config: fields it leaves at None take each
    system's own defaults.
    """
    base = cfg.to_dict()
    return [{**base, "system": system, "target": target, "sigma_p": float(sp), "noise": float(nz)}
            for system in systems or SYSTEMS
            for target in targets or TARGETS
            for sp in sigmas
            for nz in noises]


def cell_name(c: dict) -> str:
    return f"{c['system']}_x{c['target'] + 1}_sp{c['sigma_p']:g}_noise{c['noise']:g}"


def run_grid_cell(cell: dict) -> dict:
    """Generate, fit and evaluate one cell; never raises."""
    name = cell_name(cell)
    try:
        cfg = ExperimentConfig.from_dict(cell).resolved()
        out = Path(cfg.out) / "cells" / name
        out.mkdir(parents=True, exist_ok=True)
        _, train, test = generate_datasets(cfg)
        models = fit_models(cfg, train)
        report = evaluate_models(cfg, models, test)
        echo = _provenance(cfg)
        (out / "models").mkdir(exist_ok=True)
        for method, model in models.items():
            d = model.to_dict()
            d["provenance"] = echo
            (out / "models" / f"{method}.json").write_text(json.dumps(d) + "\n", encoding="utf-8")
        _write_report(report, out, "report", echo)
        extra = {m: getattr(mod, "grid_degree", None) or getattr(mod, "k", None)
                 for m, mod in models.items()}
        return {"name": name, "status": "ok", "csv": report.to_csv(), "hyper": extra}
    except Exception as exc:   # recorded; the remaining cells still run
        log.error("cell %s failed: %s", name, exc)
        return {"name": name, "status": f"failed: {type(exc).__name__}: {exc}", "csv": "", "hyper": {}}


SUMMARY_FIELDS = ("cell",) + evalkit.CSV_FIELDS + ("hyper", "status")


def summarize(results: list) -> tuple[str, str]:
    """Deterministic summary CSV plus a text table laid out like the figures.

    Text layout: one block per (system, target), one line per (sigma_p, noise)
    with the plars percentiles followed by each baseline's relative change.
    """
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
    writer.writeheader()
    lines, block = [], None
    for res in results:
        hyper = ";".join(f"{k}={v}" for k, v in sorted(res["hyper"].items()))
        recs = list(csv.DictReader(io.StringIO(res["csv"]))) if res["csv"] else []
        if not recs:
            writer.writerow({"cell": res["name"], "status": res["status"], "hyper": hyper})
        for rec in recs:
            writer.writerow({"cell": res["name"], **rec, "hyper": hyper, "status": res["status"]})
        key = res["name"].split("_sp")[0]
        if key != block:
            block = key
            qs = [f"p{q}" for q in evalkit.QUANTILES]
            lines += ["", f"== {key}", "sigma_p  noise   " + " ".join(f"{q:>9}" for q in qs)
                      + "   knn vs plars (%)"]
        sp, nz = res["name"].split("_sp")[1].split("_noise")
        if not recs:
            lines.append(f"{sp:<8} {nz:<7} {res['status']}")
            continue
        ref = {int(r["q"]): float(r["p_q"]) for r in recs if r["algorithm"] == evalkit.REFERENCE}
        rel = {int(r["q"]): float(r["relative_pct"]) for r in recs
               if r["algorithm"] != evalkit.REFERENCE and r["relative_pct"]}
        cells = " ".join(f"{ref[q]:9.4g}" if q in ref else f"{'-':>9}" for q in evalkit.QUANTILES)
        rels = " ".join(f"{rel[q]:+7.1f}" if q in rel else f"{'-':>7}" for q in evalkit.QUANTILES)
        lines.append(f"{sp:<8} {nz:<7} {cells}   {rels}   {hyper}")
    return buf.getvalue(), "\n".join(lines).lstrip("\n") + "\n"


def _float_list(text, default):
    if text is None:
        return default
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigurationError(f"expected comma-separated numbers, got {text!r}")


def cmd_reproduce(cfg: ExperimentConfig, jobs: int = 1, n_cells=None, systems=None,
                  targets=None, sigmas=SIGMA_P_GRID, noises=NOISE_GRID) -> list:
    cfg = replace(cfg, out=cfg.out or default_out())
    if jobs < 1:
        raise ConfigurationError(f"jobs: must be >= 1, got {jobs}")
    cells = grid_cells(cfg, systems, targets, sigmas, noises)
    if n_cells is not None:
        if n_cells < 1:
            raise ConfigurationError(f"cells: must be >= 1, got {n_cells}")
        cells = cells[:n_cells]
    for c in cells:   # fail fast on configuration problems
        ExperimentConfig.from_dict(c).resolved()
    if jobs == 1:
        results = [run_grid_cell(c) for c in cells]
    else:
        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_grid_cell, cells))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    table, text = summarize(results)
    (out / "summary.csv").write_text(table, encoding="utf-8")
    (out / "summary.txt").write_text(text, encoding="utf-8")
    _write_json(out / "summary.meta.json", _provenance(cfg, cells=[cell_name(c) for c in cells]))
    return results


# ------------------------------------------------------------------ main

def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "reproduce":
            # the grid owns system/target/sigma_p/noise; flags only narrow it
            cfg = merged_config(args)
            systems = [args.system] if args.system else None
            targets = [cfg.resolved().target] if args.target is not None else None
            cfg = replace(cfg, out=cfg.out or default_out())
            results = cmd_reproduce(cfg, args.jobs, args.cells, systems, targets,
                                    _float_list(args.sigma_grid, SIGMA_P_GRID),
                                    _float_list(args.noise_grid, NOISE_GRID))
            failed = [r for r in results if r["status"] != "ok"]
            print(f"{len(results) - len(failed)}/{len(results)} cells ok; summary in "
                  f"{Path(cfg.out) / 'summary.txt'}")
            return EXIT_FAILURE if failed else EXIT_OK
        cfg = resolve_config(args)
        if args.command == "generate":
            paths = cmd_generate(cfg)
            print(f"wrote {paths['train']} and {paths['test']}")
        elif args.command == "fit":
            for path in cmd_fit(cfg, args.train):
                print(f"wrote {path}")
        elif args.command == "evaluate":
            print(cmd_evaluate(cfg, args.models, args.test).to_text(), end="")
        return EXIT_OK
    except _FIT_ERRORS as exc:
        print(f"polyest {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except _USAGE_ERRORS as exc:
        print(f"polyest {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PolyestError as exc:
        print(f"polyest {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":   # pragma: no cover
    sys.exit(main())
