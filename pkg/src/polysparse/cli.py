"""Command-line entry point: ``polysparse <command> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import warnings
from pathlib import Path

from . import __version__
from .bench import DESK_GRID, aggregate, grid_tasks, run_grid
from .generate import FULL_GRID, GenParams, generate
from .instance import instance_to_dict, load_instance
from .reconstruction import verify_realizations
from .solvers import Budget, gap_lp, kp_fractional_greedy, solve_exact
from .sparsifier import (
    Global,
    LpDriven,
    PerKnapsack,
    QueryResult,
    Sampled,
    SparsifyParams,
    lp_driven_params,
    sparsify,
)
from .stochastic import eval_sparsifier

log = logging.getLogger("polysparse")


def _dump(doc, out: str | None):
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _budget(args) -> Budget | None:
    if args.budget_nodes is None and args.budget_ms is None:
        return None
    return Budget(args.budget_nodes, None if args.budget_ms is None else args.budget_ms / 1000.0)


def _load_query(path) -> QueryResult:
    doc = json.loads(Path(path).read_text())
    return QueryResult.from_dict(doc.get("query", doc))


def _instance_doc(gp: GenParams) -> dict:
    inst, info = generate(gp, return_log=True)
    doc = instance_to_dict(inst)
    doc["generator"] = {**gp.to_dict(), **info}
    return doc


def _gen_params(args) -> GenParams:
    """Flags override fields given in ``--params`` (a JSON file or literal)."""
    base = {}
    if args.params:
        path = Path(args.params)
        base = json.loads(path.read_text() if path.exists() else args.params)
        base = base.get("generator", base)
        known = {f.name for f in dataclasses.fields(GenParams)}
        base = {k: v for k, v in base.items() if k in known}
    flags = {
        "n": args.n,
        "m": args.m,
        "rho": args.rho,
        "redundancy_target": args.redundancy,
        "value_marginal": args.value_marginal,
        "weight_marginal": args.weight_marginal,
    }
    merged = {**base, **{k: v for k, v in flags.items() if v is not None}}
    merged.setdefault("seed", args.seed)
    if args.seed_given:
        merged["seed"] = args.seed
    if "n" not in merged:
        raise SystemExit("gen needs --n (or n in --params)")
    merged.setdefault("m", 1)
    return GenParams.from_dict(merged)


def cmd_gen(args):
    if args.grid:
        if args.out in (None, "-"):
            raise SystemExit("gen --grid needs --out DIRECTORY")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        grid = FULL_GRID.scaled(args.scale) if args.scale != 1.0 else FULL_GRID
        for iid, gp in grid_tasks(grid, args.seed):
            try:
                doc = _instance_doc(gp)
            except ValueError as exc:
                log.warning("%s skipped: %s", iid, exc)
                continue
            _dump(doc, str(out / f"{iid}.json"))
        return
    _dump(_instance_doc(_gen_params(args)), args.out)


def cmd_solve(args):
    inst = load_instance(args.instance)
    if args.method == "lp":
        lp = gap_lp(inst)
        doc = {
            "method": "lp",
            "value": lp.value,
            "y": lp.y.tolist(),
            "iterations": lp.iterations,
        }
    elif args.method == "greedy":
        if inst.m != 1:
            raise SystemExit("--method greedy is the fractional knapsack bound and needs m = 1")
        doc = {
            "method": "greedy",
            "value": kp_fractional_greedy(inst.values[:, 0], inst.weights[:, 0], inst.capacities[0]),
        }
    else:
        res = solve_exact(inst, _budget(args), canonical=not args.no_canonical)
        doc = {"method": "exact", **res.to_dict()}
    _dump(doc, args.out)


def _oracle(args):
    if args.oracle == "lp":
        return LpDriven(args.oracle_value[0] if args.oracle_value else None)
    if args.oracle == "global":
        if not args.oracle_value:
            raise SystemExit("--oracle global needs --oracle-value")
        return Global(args.oracle_value[0])
    if args.oracle == "per":
        if not args.oracle_value:
            raise SystemExit("--oracle per needs one --oracle-value per knapsack")
        return PerKnapsack(args.oracle_value)
    return Sampled(args.oracle_trials, args.seed)


def cmd_sparsify(args):
    inst = load_instance(args.instance)
    if args.lp_driven:
        params = lp_driven_params(inst, args.epsilon)
    else:
        practical = any(x is not None for x in (args.alpha, args.tau_override, args.K)) or args.mode == "practical"
        params = SparsifyParams(
            epsilon=args.epsilon,
            p=args.p,
            oracle=_oracle(args),
            mode="practical" if practical else "theory",
            rounds_alpha=args.alpha,
            tau_override=args.tau_override,
            K_override=args.K,
        )
    qr = sparsify(inst, params, algorithm=args.algorithm)
    _dump({**qr.to_dict(), "params": params.to_dict()}, args.out)


def cmd_eval(args):
    inst = load_instance(args.instance)
    qr = _load_query(args.query_file)
    res = eval_sparsifier(inst, qr.Q, args.p, args.trials, args.seed, _budget(args))
    _dump(res.to_dict(), args.out)


def cmd_verify(args):
    inst = load_instance(args.instance)
    qr = _load_query(args.query)
    if args.epsilon is not None and abs(args.epsilon - qr.epsilon) > 1e-12:
        raise SystemExit(f"--epsilon {args.epsilon} differs from the query set's {qr.epsilon}")
    p = args.p if args.p is not None else qr.p
    rep = verify_realizations(inst, qr, p, args.trials, args.seed)
    _dump(rep.to_dict(), args.out)


def _progress(k, total, row):
    log.info("[%d/%d] %s %s", k, total, row["instance_id"], row["status"])


def cmd_bench_run(args):
    if args.grid == "full":
        warnings.warn(
            "the full grid has 6720 rows with n up to 10000; expect days of compute",
            stacklevel=1,
        )
        grid = FULL_GRID
    else:
        grid = DESK_GRID
    out = args.out or "results.csv"
    overrides = {
        k: tuple(getattr(args, k)) for k in ("n", "m", "rho", "redundancy") if getattr(args, k)
    }
    if args.replicates:
        overrides["replicates"] = args.replicates
    if overrides:
        grid = dataclasses.replace(grid, **overrides)
    run_grid(grid, out, args.seed, args.scale, args.threads, args.epsilon, _budget(args), _progress)
    log.info("wrote %s", out)


def cmd_bench_aggregate(args):
    bins = [float(x) for x in args.bin_edges.split(",")] if args.bin_edges else args.bins
    res = aggregate(args.csv, args.out or "aggregate", args.window, bins)
    print(res["summary"].to_string(index=False))


def _add_budget(p):
    p.add_argument("--budget-nodes", type=int, default=None, help="node budget for exact solves")
    p.add_argument("--budget-ms", type=float, default=None, help="wall-clock budget in milliseconds")


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (default 0)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes (default 1)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output path (default stdout)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    ap = argparse.ArgumentParser(prog="polysparse", description=__doc__, parents=[common])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a copula GAP instance")
    p.add_argument("--params", default=None, help="GenParams as a JSON file or literal; flags override")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--redundancy", type=float, default=None)
    p.add_argument("--value-marginal", default=None, help="uniform, truncnormal or e.g. Uniform(0,100)")
    p.add_argument("--weight-marginal", default=None)
    p.add_argument("--grid", action="store_true", help="write every full-grid instance into --out")
    p.add_argument("--scale", type=float, default=1.0, help="multiply grid n values by this factor")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", parents=[common], help="solve an instance exactly")
    p.add_argument("instance")
    p.add_argument("--method", choices=("exact", "lp", "greedy"), default="exact")
    p.add_argument("--no-canonical", action="store_true", help="skip lexicographic tie-breaking")
    _add_budget(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sparsify", parents=[common], help="build a query set")
    p.add_argument("instance")
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--algorithm", choices=("auto", "kp", "gap"), default="auto")
    p.add_argument("--mode", choices=("theory", "practical"), default="theory")
    p.add_argument("--oracle", choices=("lp", "global", "per", "sampled"), default="lp")
    p.add_argument("--oracle-value", type=float, nargs="+", default=None)
    p.add_argument("--oracle-trials", type=int, default=200)
    p.add_argument("--alpha", type=int, default=None, help="number of selection rounds (practical mode)")
    p.add_argument("--tau-override", type=float, default=None, help="bucket fill factor (practical mode)")
    p.add_argument("--K", type=int, default=None, help="number of value buckets (practical mode)")
    p.add_argument("--lp-driven", action="store_true", help="benchmark settings (p=1, one pass, tau=1)")
    p.set_defaults(func=cmd_sparsify)

    p = sub.add_parser("eval", parents=[common], help="Monte Carlo approximation ratio of a query set")
    p.add_argument("instance")
    p.add_argument("--query-file", required=True, help="QueryResult JSON from sparsify")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--trials", type=int, default=500)
    _add_budget(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", parents=[common], help="replay the reconstruction and check its invariants")
    p.add_argument("instance")
    p.add_argument("query")
    p.add_argument("--p", type=float, default=None, help="activation probability (default: the query's)")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="experiment pipeline")
    bsub = p.add_subparsers(dest="bench_command", required=True)
    b = bsub.add_parser("run", parents=[common], help="run the grid and write a CSV")
    b.add_argument("--grid", choices=("desk", "full"), default="desk")
    b.add_argument("--scale", type=float, default=1.0, help="multiply every n by this factor")
    b.add_argument("--n", type=int, nargs="+", default=None, help="override the grid's n values")
    b.add_argument("--m", type=int, nargs="+", default=None)
    b.add_argument("--rho", type=float, nargs="+", default=None)
    b.add_argument("--redundancy", type=float, nargs="+", default=None)
    b.add_argument("--replicates", type=int, default=None)
    b.add_argument("--epsilon", type=float, default=0.2)
    _add_budget(b)
    b.set_defaults(func=cmd_bench_run)
    b = bsub.add_parser("aggregate", parents=[common], help="summary and plot-data tables")
    b.add_argument("csv")
    b.add_argument("--window", type=int, default=None, help="rolling-median window (default min(501, rows))")
    b.add_argument("--bins", type=int, default=10, help="number of log10 redundancy bins")
    b.add_argument("--bin-edges", default=None, help="comma-separated redundancy bin edges")
    b.set_defaults(func=cmd_bench_aggregate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.seed_given = hasattr(args, "seed")
    for name, default in (("seed", 0), ("threads", 1), ("out", None), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(
        level=logging.INFO if args.verbose or args.func is cmd_bench_run else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
