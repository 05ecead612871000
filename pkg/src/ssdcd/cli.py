"""Command-line entry point: generate, superstructure, discover, evaluate, bench."""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import admm, dcd, graphs, metrics, scm
from . import superstructure as ss

log = logging.getLogger("ssdcd")

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_PARTIAL = 0, 1, 2, 3

BENCH_METHODS = {"alvgl": "alvgl+dcd", "glasso": "glasso+dcd", "lvgl": "lvgl+dcd", "none": "dcd-full"}

DEFAULTS = {
    "out": "out",
    "seed": [0],
    "repeats": 1,
    "d": [10],
    "degree": [1.0],
    "n": [1000],
    "noise": ["gaussian"],
    "graph": ["er"],
    "latents": [0],
    "method": "alvgl",
    "methods": ["alvgl", "none"],
    "lambda_s": 0.05,
    "lambda_l": 0.05,
    "lambda_rule": "fixed",
    "tau_edge": ss.DEFAULT_TAU_EDGE,
    "tau_rank": 0.01,
    "max_iters": 500,
    "ridge": None,
    "lambda1": None,
    "omega": 0.3,
    "workers": 1,
    "mask": "full",
    "mode": "directed",
    "children_per_latent": 2,
    "truth": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _grid_flags(p, single=False):
    nargs = None if single else "+"
    p.add_argument("--d", type=int, nargs=nargs)
    p.add_argument("--degree", type=float, nargs=nargs)
    p.add_argument("--n", type=int, nargs=nargs)
    p.add_argument("--noise", choices=scm.NOISE_FAMILIES, nargs=nargs)
    p.add_argument("--graph", choices=("er", "sf", "bp"), nargs=nargs)
    p.add_argument("--latents", type=int, nargs=nargs)
    p.add_argument("--seed", type=int, nargs="+", help="one or more master seeds")
    p.add_argument("--repeats", type=int, help="expand each seed s into s, s+1, ...")
    p.add_argument("--children-per-latent", type=int)


def _admm_flags(p):
    p.add_argument("--lambda-s", type=float)
    p.add_argument("--lambda-l", type=float)
    p.add_argument("--lambda-rule", choices=("fixed", "rate"),
                   help="rate: rescale both lambdas by sqrt(log d / n) relative to d=50, n=1000")
    p.add_argument("--tau-edge", type=float)
    p.add_argument("--tau-rank", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--ridge", type=float)


def _dcd_flags(p):
    p.add_argument("--lambda1", type=float)
    p.add_argument("--omega", type=float)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path, help="JSON file of option defaults; flags win")
    common.add_argument("--out", type=Path)
    common.add_argument("-v", "--verbose", action="store_true")

    top = _Parser(prog="ssdcd", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    kw = dict(parents=[common], argument_default=argparse.SUPPRESS)
    p = sub.add_parser("generate", help="synthesize datasets and ground-truth graphs", **kw)
    _grid_flags(p)

    p = sub.add_parser("superstructure", help="learn a super-structure mask from data", **kw)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--truth", type=Path)
    p.add_argument("--method", choices=ss.METHODS)
    _admm_flags(p)

    p = sub.add_parser("discover", help="fit a DAG under a mask", **kw)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--mask", help="mask CSV/JSON path, or 'full'")
    _dcd_flags(p)

    p = sub.add_parser("evaluate", help="score a predicted graph against the truth", **kw)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--mode", choices=("directed", "skeleton"))
    p.add_argument("--seconds", type=float)

    p = sub.add_parser("bench", help="run the full pipeline over a grid", **kw)
    _grid_flags(p)
    p.add_argument("--method", dest="methods", nargs="+", choices=tuple(BENCH_METHODS))
    p.add_argument("--workers", type=int)
    _admm_flags(p)
    _dcd_flags(p)
    return top


def resolve_options(args: argparse.Namespace) -> dict:
    """Built-in defaults, overridden by the --config file, overridden by flags."""
    opts = dict(DEFAULTS)
    given = vars(args)
    cfg_path = given.get("config")
    if cfg_path is not None:
        try:
            cfg = json.loads(Path(cfg_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {cfg_path}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        for k, v in cfg.items():
            key = k.replace("-", "_")
            if key in ("seeds",):
                key = "seed"
            if key not in DEFAULTS:
                raise UsageError(f"unknown config key {k!r}")
            opts[key] = v
    opts.update({k: v for k, v in given.items() if k != "config"})
    for key in ("seed", "d", "degree", "n", "noise", "graph", "latents", "methods"):
        if not isinstance(opts[key], list):
            opts[key] = [opts[key]]
    return opts


def _seeds(opts) -> list[int]:
    base = [int(s) for s in opts["seed"]]
    reps = int(opts["repeats"])
    if reps < 1:
        raise UsageError("--repeats must be positive")
    seeds = [s + r for s in base for r in range(reps)]
    if len(set(seeds)) != len(seeds):
        raise UsageError("seeds must be distinct")
    return seeds


def grid_cells(opts) -> list[dict]:
    cells = []
    for graph, d, degree, n, noise, lat in itertools.product(
        opts["graph"], opts["d"], opts["degree"], opts["n"], opts["noise"], opts["latents"]
    ):
        cells.append({"graph": graph, "d": int(d), "degree": float(degree), "n": int(n),
                      "noise": noise, "latents": int(lat)})
    if not cells:
        raise UsageError("experiment grid is empty")
    return cells


def cell_id(cell: dict) -> str:
    return (f"{cell['graph']}_d{cell['d']}_deg{cell['degree']:g}_n{cell['n']}"
            f"_{cell['noise']}_l{cell['latents']}")


def _simulate(cell: dict, seed: int, opts) -> scm.Dataset:
    return scm.simulate(cell["graph"], cell["d"], cell["degree"], cell["n"], cell["noise"],
                        cell["latents"], seed, children_per_latent=int(opts["children_per_latent"]))


def _admm_config(opts, d: int, n: int) -> admm.AdmmConfig:
    ls, ll = float(opts["lambda_s"]), float(opts["lambda_l"])
    if opts["lambda_rule"] == "rate":
        ls = admm.rate_scaled_lambda(d, n, ls)
        ll = admm.rate_scaled_lambda(d, n, ll)
    return admm.AdmmConfig(lambda_s=ls, lambda_l=ll, tau_rank=float(opts["tau_rank"]),
                           max_iter=int(opts["max_iters"]), ridge=opts["ridge"])


def _dcd_config(opts) -> dcd.DcdConfig:
    return dcd.DcdConfig(lambda1=opts["lambda1"], omega=float(opts["omega"]))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


# --------------------------------------------------------------------------- #
# subcommands


def cmd_generate(opts) -> int:
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for cell in grid_cells(opts):
        for seed in _seeds(opts):
            stem = f"{cell_id(cell)}_s{seed}"
            data = _simulate(cell, seed, opts)
            scm.save_matrix_csv(out / f"{stem}.data.csv", data.X)
            graphs.graph_to_json(data.truth, out / f"{stem}.truth.json")
            entries.append({**cell, "seed": seed, "data": f"{stem}.data.csv", "truth": f"{stem}.truth.json"})
    _write_json(out / "manifest.json", {"artifacts": entries})
    print(f"wrote {len(entries)} dataset(s) to {out}")
    return EXIT_OK


def cmd_superstructure(opts) -> int:
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    data = scm.load_dataset_csv(opts["data"])
    cov = scm.empirical_covariance(data)
    cfg = _admm_config(opts, data.d, data.n)
    if opts["method"] == "glasso" and opts["ridge"] is None:
        cfg.ridge = 0.0
    t0 = time.perf_counter()
    mask = ss.learn(cov, opts["method"], cfg, float(opts["tau_edge"]))
    seconds = time.perf_counter() - t0
    ss.save_mask(mask, out / "mask.csv")
    ss.save_mask(mask, out / "mask.json")
    mask.decomposition.save(out)
    diag = {"method": opts["method"], "tau_edge": mask.tau_edge, "edge_count": mask.edge_count,
            "seconds": seconds, "decomposition": mask.decomposition.summary()}
    if opts["truth"] is not None:
        diag["validation"] = ss.validate(mask, graphs.graph_from_json(Path(opts["truth"])))
    _write_json(out / "diagnostics.json", diag)
    print(json.dumps(diag, sort_keys=True))
    return EXIT_OK


def cmd_discover(opts) -> int:
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    data = scm.load_dataset_csv(opts["data"])
    mask = "full" if opts["mask"] == "full" else ss.load_mask(opts["mask"])
    res = dcd.fit(data, mask, _dcd_config(opts))
    res.save(out)
    print(json.dumps(res.summary(), sort_keys=True))
    return EXIT_OK


def cmd_evaluate(opts) -> int:
    truth = graphs.graph_from_json(Path(opts["truth"]))
    pred = graphs.graph_from_json(Path(opts["pred"]))
    rep = metrics.evaluate(pred.directed, truth, opts["mode"], opts.get("seconds"))
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    print(rep.to_json(out / "report.json"), end="")
    return EXIT_OK


def run_one(task: dict) -> dict:
    """One (cell, seed, method) pipeline run; never raises."""
    cell, seed, method, opts = task["cell"], task["seed"], task["method"], task["opts"]
    row = {"method": BENCH_METHODS[method], "d": cell["d"], "degree": cell["degree"], "n": cell["n"],
           "noise": cell["noise"], "seed": seed, "graph": cell["graph"], "latents": cell["latents"]}
    try:
        data = _simulate(cell, seed, opts)
        if method == "none":
            mask, ss_seconds = "full", 0.0
            row["mask_edges"] = data.d * (data.d - 1) // 2
        else:
            cfg = _admm_config(opts, data.d, data.n)
            if method == "glasso" and opts["ridge"] is None:
                cfg.ridge = 0.0
            t0 = time.perf_counter()
            mask = ss.learn(scm.empirical_covariance(data), method, cfg, float(opts["tau_edge"]))
            ss_seconds = time.perf_counter() - t0
            v = ss.validate(mask, data.truth)
            row["mask_edges"] = v["edge_count"]
            row["mask_recall"] = v["recall"]
        res = dcd.fit(data, mask, _dcd_config(opts))
        rep = metrics.evaluate(res.graph, data.truth, "directed", res.seconds)
        row.update(precision=rep.precision, recall=rep.recall, f1=rep.f1, seconds=res.seconds,
                   ss_seconds=ss_seconds, h_final=res.h_final, status="ok", error="")
    except (admm.SolverError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        row.update(precision="", recall="", f1="", seconds="", ss_seconds="", h_final="",
                   status="error", error=f"{type(exc).__name__}: {exc}")
    return row


def _mean_std(xs):
    if not xs:
        return "", ""
    return statistics.fmean(xs), (statistics.stdev(xs) if len(xs) > 1 else 0.0)


def aggregate(rows: list[dict]) -> tuple[list[dict], list[dict]]:
    """Per (cell, method): F1 statistics (deterministic) and timing statistics."""
    keyf = lambda r: (r["graph"], int(r["d"]), float(r["degree"]), int(r["n"]), r["noise"],
                      int(r["latents"]), r["method"])
    groups: dict = {}
    for r in rows:
        groups.setdefault(keyf(r), []).append(r)
    agg, timing = [], []
    for key in sorted(groups):
        rs = groups[key]
        ok = [r for r in rs if r["status"] == "ok"]
        base = dict(zip(("graph", "d", "degree", "n", "noise", "latents", "method"), key))
        f1m, f1s = _mean_std([float(r["f1"]) for r in ok])
        pm, _ = _mean_std([float(r["precision"]) for r in ok])
        rm, _ = _mean_std([float(r["recall"]) for r in ok])
        agg.append({**base, "runs": len(rs), "failures": len(rs) - len(ok), "f1_mean": f1m, "f1_std": f1s,
                    "precision_mean": pm, "recall_mean": rm})
        secs = [float(r["seconds"]) for r in ok]
        sm, sd = _mean_std(secs)
        ssm, _ = _mean_std([float(r["ss_seconds"]) for r in ok])
        timing.append({**base, "runs": len(rs), "seconds_mean": sm, "seconds_std": sd,
                       "seconds_median": statistics.median(secs) if secs else "", "ss_seconds_mean": ssm})
    return agg, timing


AGG_COLUMNS = ("graph", "d", "degree", "n", "noise", "latents", "method", "runs", "failures",
               "f1_mean", "f1_std", "precision_mean", "recall_mean")
TIMING_COLUMNS = ("graph", "d", "degree", "n", "noise", "latents", "method", "runs",
                  "seconds_mean", "seconds_std", "seconds_median", "ss_seconds_mean")


def cmd_bench(opts) -> int:
    out = Path(opts["out"])
    (out / "runs").mkdir(parents=True, exist_ok=True)
    methods = list(dict.fromkeys(opts["methods"]))
    for m in methods:
        if m not in BENCH_METHODS:
            raise UsageError(f"unknown method {m!r}")
    run_opts = {k: v for k, v in opts.items() if k not in ("out", "config")}
    tasks, paths = [], []
    for cell in grid_cells(opts):
        for seed in _seeds(opts):
            for m in methods:
                path = out / "runs" / cell_id(cell) / f"s{seed}" / f"{BENCH_METHODS[m]}.json"
                paths.append(path)
                if not path.exists():
                    tasks.append(({"cell": cell, "seed": seed, "method": m, "opts": run_opts}, path))
    log.info("%d runs, %d to compute", len(paths), len(tasks))
    workers = max(1, int(opts["workers"]))

    def store(row, path):
        path.parent.mkdir(parents=True, exist_ok=True)
        _write_json(path, row)

    if workers == 1 or len(tasks) <= 1:
        for task, path in tasks:
            store(run_one(task), path)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for (task, path), row in zip(tasks, pool.map(run_one, [t for t, _ in tasks])):
                store(row, path)

    rows = [json.loads(p.read_text()) for p in paths]
    metrics.rows_to_csv(rows, out / "runs.csv")
    agg, timing = aggregate(rows)
    metrics.rows_to_csv(agg, out / "aggregate.csv", AGG_COLUMNS)
    metrics.rows_to_csv(timing, out / "timing.csv", TIMING_COLUMNS)
    failures = sum(r["status"] != "ok" for r in rows)
    summary = {"runs": len(rows), "computed": len(tasks), "failures": failures,
               "methods": [BENCH_METHODS[m] for m in methods],
               "cells": [cell_id(c) for c in grid_cells(opts)], "timing": timing}
    _write_json(out / "summary.json", summary)
    print(f"{len(rows)} runs ({len(tasks)} computed, {failures} failed); tables in {out}")
    return EXIT_PARTIAL if failures else EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "superstructure": cmd_superstructure,
    "discover": cmd_discover,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(args)
        opts.pop("verbose", None)
        return COMMANDS[args.command](opts)
    except UsageError as exc:
        print(f"ssdcd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except admm.SolverError as exc:
        ctx = ", ".join(f"{k}={v}" for k, v in exc.context.items() if np.isscalar(v))
        print(f"ssdcd: solver failure: {exc}" + (f" ({ctx})" if ctx else ""), file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, ValueError) as exc:
        print(f"ssdcd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
