"""Experiment pipeline: three runs per instance, grid orchestration, CSV and
plot-data aggregation."""

from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .generate import GenParams, GridSpec, derive_seed, generate, parse_marginal
from .instance import GapInstance, restrict
from .solvers import Budget, gap_exact
from .sparsifier import lp_driven_params, sparsify_gap

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
COLUMNS = (
    "schema_version", "instance_id", "n", "m", "rho", "redundancy_target",
    "value_marginal", "weight_marginal", "seed", "opt_full", "t_full_s",
    "opt_sparse", "t_sparse_s", "opt_full_cut", "approx_ratio", "speedup",
    "etr", "redundancy_realized", "query_size", "lp_degree_bound", "status",
)
# columns that depend on the wall clock; everything else is a pure function
# of the master seed
TIME_COLUMNS = ("t_full_s", "t_sparse_s", "opt_full_cut", "speedup", "etr")

STATUS_OK = "optimal"
STATUS_INCOMPLETE = "incomplete"  # method A ran out of budget
STATUS_SPARSE_INCOMPLETE = "sparse_incomplete"

DESK_GRID = GridSpec(
    n=(100, 200, 500),
    m=(1, 2),
    rho=(-0.5, 0.0, 0.5),
    redundancy=(0.5, 2, 8, 22),
    marginals=(("uniform", "uniform"),),
    replicates=3,
)
DEFAULT_NODE_BUDGET = 1_000_000


@dataclass
class ExperimentRecord:
    instance_id: str
    params: GenParams
    opt_full: float
    t_full: float
    opt_sparse: float
    t_sparse: float
    opt_full_cut: float
    redundancy: float
    query_size: int
    lp_degree_bound: float
    status: str

    @property
    def approx_ratio(self) -> float:
        return self.opt_sparse / self.opt_full if self.opt_full > 0 else 1.0

    @property
    def speedup(self) -> float:
        return self.t_full / self.t_sparse if self.t_sparse > 0 else math.inf

    @property
    def etr(self) -> float:
        return self.opt_sparse / self.opt_full_cut if self.opt_full_cut > 0 else math.inf

    def row(self) -> dict:
        p = self.params
        return {
            "schema_version": SCHEMA_VERSION,
            "instance_id": self.instance_id,
            "n": p.n,
            "m": p.m,
            "rho": p.rho,
            "redundancy_target": p.redundancy_target,
            "value_marginal": str(p.value_marginal),
            "weight_marginal": str(p.weight_marginal),
            "seed": p.seed,
            "opt_full": _fmt(self.opt_full),
            "t_full_s": _fmt(self.t_full),
            "opt_sparse": _fmt(self.opt_sparse),
            "t_sparse_s": _fmt(self.t_sparse),
            "opt_full_cut": _fmt(self.opt_full_cut),
            "approx_ratio": _fmt(self.approx_ratio),
            "speedup": _fmt(self.speedup),
            "etr": _fmt(self.etr),
            "redundancy_realized": _fmt(self.redundancy),
            "query_size": self.query_size,
            "lp_degree_bound": _fmt(self.lp_degree_bound),
            "status": self.status,
        }


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return repr(float(x))


def run_three(
    inst: GapInstance,
    params: GenParams | None = None,
    instance_id: str = "",
    epsilon: float = 0.2,
    budget: Budget | None = None,
) -> ExperimentRecord:
    """Exact solve, sparsify-then-solve, and time-capped exact solve.

    ``budget`` limits methods A and B.  Method C gets the measured
    end-to-end time of method B as its wall-clock budget.
    """
    if params is None:
        params = GenParams(n=inst.n, m=inst.m)
    budget = budget or Budget(max_nodes=DEFAULT_NODE_BUDGET)

    t0 = time.perf_counter()
    full = gap_exact(inst, budget, canonical=False)
    t_full = time.perf_counter() - t0

    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sp = lp_driven_params(inst, epsilon)
        qr = sparsify_gap(inst, sp)
    sub, _ = restrict(inst, qr.Q)
    sparse = gap_exact(sub, budget, canonical=False)
    t_sparse = time.perf_counter() - t0

    cut = gap_exact(inst, Budget(max_wall_time=t_sparse), canonical=False)

    if not full.optimal:
        status = STATUS_INCOMPLETE
    elif not sparse.optimal:
        status = STATUS_SPARSE_INCOMPLETE
    else:
        status = STATUS_OK
    size = len(full.assignment)
    return ExperimentRecord(
        instance_id=instance_id,
        params=params,
        opt_full=float(full.value),
        t_full=t_full,
        opt_sparse=float(sparse.value),
        t_sparse=t_sparse,
        opt_full_cut=float(cut.value),
        redundancy=inst.n / size if size else math.inf,
        query_size=int(qr.Q.size),
        lp_degree_bound=float(qr.lp_degree_bound),
        status=status,
    )


def grid_tasks(grid: GridSpec, master_seed: int) -> list[tuple[str, GenParams]]:
    tasks = []
    for s, (n, m, rho, target, (vname, wname)) in enumerate(grid.settings()):
        for rep in range(grid.replicates):
            gp = GenParams(
                n=n, m=m, rho=rho, redundancy_target=target,
                value_marginal=parse_marginal(vname), weight_marginal=parse_marginal(wname, "weight"),
                seed=derive_seed(master_seed, s, rep),
            )
            iid = f"n{n}_m{m}_rho{rho:g}_r{target:g}_{vname}_{wname}_rep{rep}"
            tasks.append((iid, gp))
    return tasks


def _run_task(task) -> dict:
    iid, gp, epsilon, budget = task
    try:
        inst = generate(gp)
        rec = run_three(inst, gp, iid, epsilon, budget)
        return rec.row()
    except Exception as exc:  # recorded per row, the grid keeps going
        log.warning("row %s failed: %s", iid, exc)
        row = {c: "" for c in COLUMNS}
        row.update(
            schema_version=SCHEMA_VERSION, instance_id=iid, n=gp.n, m=gp.m, rho=gp.rho,
            redundancy_target=gp.redundancy_target, value_marginal=str(gp.value_marginal),
            weight_marginal=str(gp.weight_marginal), seed=gp.seed,
            status=f"error: {type(exc).__name__}: {exc}",
        )
        return row


def run_grid(
    grid: GridSpec,
    out_path,
    master_seed: int = 0,
    scale: float = 1.0,
    threads: int = 1,
    epsilon: float = 0.2,
    budget: Budget | None = None,
    progress=None,
) -> Path:
    """Run every (setting, replicate) and write one CSV row each.

    Rows are written in task order by this process alone, whatever the
    worker count.
    """
    if scale != 1.0:
        grid = grid.scaled(scale)
    budget = budget or Budget(max_nodes=DEFAULT_NODE_BUDGET)
    tasks = [(iid, gp, epsilon, budget) for iid, gp in grid_tasks(grid, master_seed)]
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
        writer.writeheader()
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                rows = pool.map(_run_task, tasks)
                for k, row in enumerate(rows):
                    writer.writerow(row)
                    fh.flush()
                    if progress:
                        progress(k + 1, len(tasks), row)
        else:
            for k, task in enumerate(tasks):
                row = _run_task(task)
                writer.writerow(row)
                fh.flush()
                if progress:
                    progress(k + 1, len(tasks), row)
    return out_path


# -- aggregation ----------------------------------------------------------------------


def read_results(path) -> pd.DataFrame:
    df = pd.read_csv(path, keep_default_na=False, na_values=["", "nan"])
    if df.empty:
        raise ValueError(f"{path}: no result rows")
    missing = [c for c in COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    for c in ("opt_full", "t_full_s", "opt_sparse", "t_sparse_s", "opt_full_cut",
              "approx_ratio", "speedup", "etr", "redundancy_realized", "lp_degree_bound"):
        df[c] = pd.to_numeric(df[c].replace("inf", np.inf), errors="coerce")
    return df


def _means(df: pd.DataFrame) -> dict:
    etr = df["etr"]
    finite = etr[np.isfinite(etr)]
    return {
        "rows": int(len(df)),
        "approx_ratio_mean": float(df["approx_ratio"].mean()) if len(df) else math.nan,
        "speedup_mean": float(df["speedup"].mean()) if len(df) else math.nan,
        "speedup_median": float(df["speedup"].median()) if len(df) else math.nan,
        "etr_mean": float(finite.mean()) if len(finite) else math.nan,
        "etr_inf_count": int((~np.isfinite(etr)).sum()),
    }


def summary_table(df: pd.DataFrame, slice_r: float = 4.0, slice_m: int = 1, slice_n: int = 1000) -> pd.DataFrame:
    """Means overall and on the high-redundancy slice ``r > 4, m > 1, n > 1000``."""
    ok = df[df["status"] == STATUS_OK]
    sl = ok[(ok["redundancy_realized"] > slice_r) & (ok["m"] > slice_m) & (ok["n"] > slice_n)]
    rows = [
        {"subset": "all", **_means(ok)},
        {"subset": f"r>{slice_r:g},m>{slice_m},n>{slice_n}", **_means(sl)},
    ]
    return pd.DataFrame(rows)


def rolling_speedup(df: pd.DataFrame, window: int | None = None) -> pd.DataFrame:
    """Centred rolling median of speedup against realized redundancy."""
    ok = df[df["status"] == STATUS_OK].sort_values(["redundancy_realized", "instance_id"], kind="stable")
    w = window or min(501, len(ok))
    w = max(1, min(w, len(ok)))
    out = ok[["instance_id", "n", "m", "redundancy_realized", "speedup"]].reset_index(drop=True)
    out["rolling_median_speedup"] = out["speedup"].rolling(w, center=True, min_periods=1).median()
    return out


def etr_bins(df: pd.DataFrame, bins=10, r_max: float = 50.0) -> pd.DataFrame:
    """ETR summaries over equal-width log10 bins of realized redundancy.

    ``bins`` is a bin count or an explicit sequence of edges on the
    redundancy axis.  Rows with ``r > r_max`` or an infinite ETR are left
    out of the statistics; the latter are counted per bin.
    """
    ok = df[(df["status"] == STATUS_OK) & (df["redundancy_realized"] <= r_max)]
    r = ok["redundancy_realized"].to_numpy(dtype=float)
    if np.isscalar(bins):
        if not len(r):
            return pd.DataFrame(columns=["bin_lo", "bin_hi", "count", "inf_count", "mean", "median", "q1", "q3"])
        lo, hi = math.log10(r.min()), math.log10(r.max())
        if hi <= lo:
            hi = lo + 1e-9
        edges = 10 ** np.linspace(lo, hi, int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    idx = np.clip(np.searchsorted(edges, r, side="right") - 1, 0, len(edges) - 2)
    inside = (r >= edges[0]) & (r <= edges[-1])
    rows = []
    etr = ok["etr"].to_numpy(dtype=float)
    for b in range(len(edges) - 1):
        sel = inside & (idx == b)
        vals = etr[sel]
        fin = vals[np.isfinite(vals)]
        stats = (
            (float(fin.mean()), float(np.median(fin)), float(np.quantile(fin, 0.25)), float(np.quantile(fin, 0.75)))
            if fin.size else (math.nan,) * 4
        )
        rows.append({
            "bin_lo": float(edges[b]), "bin_hi": float(edges[b + 1]),
            "count": int(fin.size), "inf_count": int(vals.size - fin.size),
            "mean": stats[0], "median": stats[1], "q1": stats[2], "q3": stats[3],
        })
    return pd.DataFrame(rows)


def aggregate(csv_path, out_dir=None, window: int | None = None, bins=10) -> dict:
    """Build the summary table and both plot-data tables; optionally write them."""
    df = read_results(csv_path)
    result = {
        "summary": summary_table(df),
        "rolling_speedup": rolling_speedup(df, window),
        "etr_bins": etr_bins(df, bins),
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, table in result.items():
            table.to_csv(out_dir / f"{name}.csv", index=False)
    return result


def directionality(df: pd.DataFrame) -> dict:
    """Mean approx ratio and the two m = 2 speedup medians used as a sanity check."""
    ok = df[df["status"] == STATUS_OK]
    m2 = ok[ok["m"] == 2]
    hi = m2[m2["redundancy_realized"] > 4]["speedup"]
    lo = m2[m2["redundancy_realized"] <= 2]["speedup"]
    return {
        "approx_ratio_mean": float(ok["approx_ratio"].mean()) if len(ok) else math.nan,
        "speedup_median_high_r": float(hi.median()) if len(hi) else math.nan,
        "speedup_median_low_r": float(lo.median()) if len(lo) else math.nan,
        "rows_high_r": int(len(hi)),
        "rows_low_r": int(len(lo)),
    }
