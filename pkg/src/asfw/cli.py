"""Command line experiment runner.

``asfw --problem wong2 --max-inner 2 --out runs/wong2`` solves one problem and
writes ``trace.csv`` and ``summary.csv``. ``asfw --suite tables --out runs``
executes a batch of runs and aggregates their summaries into table files.

Exit codes: 0 success, 1 usage error, 2 solver error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .abstape import TapeError
from .lp import LPError
from .problems import PROBLEMS, DatasetError, lasso_report, make_problem
from .solver import VARIANTS, SolveConfig, SolverError, estimate_curvature, solve

__all__ = [
    "ConfigError",
    "RunSpec",
    "RunResult",
    "parse_config",
    "run_experiment",
    "run_suite",
    "SUITES",
    "main",
]

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3

TRACE_COLUMNS = ("t", "f", "h_t", "g_hat", "L_t", "G_t", "inner_iters", "pivot_cum", "elapsed_ms", "exact_flag")
SUMMARY_COLUMNS = (
    "problem", "n", "variant", "max_inner", "max_outer", "tol", "rho", "seed",
    "f_final", "f_ref", "iterations", "total_pivots", "stop_reason",
    "certified", "C_f_est", "intercept", "mse",
)
TRACE_HEADER = (
    "# row t holds f(x_t), h_t = f(x_t) - f_ref, the dual gap estimate g_hat at x_t and L_t;"
    " G_t = f(x_{t+1}) - L_t is therefore one step ahead of f;"
    " the last row carries the final iterate; elapsed_ms is wall clock and not reproducible\n"
)


class ConfigError(ValueError):
    """Unknown key, invalid value or missing problem."""


@dataclass(frozen=True)
class RunSpec:
    problem: str = ""
    n: int | None = None
    variant: str = "relaxed"
    max_inner: int = 2
    max_outer: int = 50000
    tol: float = 1e-6
    seed: int = 0
    out: str = "asfw-out"
    rho: float | None = None
    hb_window: int | None = None
    curvature_samples: int = 256

    def __post_init__(self):
        if self.problem and self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for name in ("max_inner", "max_outer", "curvature_samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.n is not None and self.n < 1:
            raise ConfigError("n must be positive")
        if self.hb_window is not None and self.hb_window < 1:
            raise ConfigError("hb_window must be positive")
        if not (self.tol >= 0 and math.isfinite(self.tol)):
            raise ConfigError("tol must be a finite non-negative number")
        if self.rho is not None:
            if not (self.rho >= 0 and math.isfinite(self.rho)):
                raise ConfigError("rho must be a finite non-negative number")
            if self.problem and self.problem != "lasso":
                raise ConfigError("rho applies to the lasso problem only")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def config(self) -> SolveConfig:
        return SolveConfig(
            variant=self.variant, max_outer=self.max_outer, max_inner=self.max_inner,
            dual_gap_tol=self.tol, hb_window=self.hb_window, seed=self.seed,
            curvature_samples=self.curvature_samples, keep_iterates=False,
        )


@dataclass
class RunResult:
    spec: RunSpec
    summary: dict
    trace_path: Path
    summary_path: Path


# config key -> value parser; suite and jobs are handled by main
_KEYS = {
    "problem": str,
    "n": int,
    "variant": str,
    "max_inner": int,
    "max_outer": int,
    "tol": float,
    "rho": float,
    "hb_window": int,
    "seed": int,
    "out": str,
    "curvature_samples": int,
}
_EXTRA_KEYS = ("suite", "jobs")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _arg_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="asfw", description="Abs-smooth Frank-Wolfe experiments.")
    p.add_argument("--config", help="flat key=value file with the same keys as the flags")
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--n", type=str)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--max-inner", dest="max_inner", type=str)
    p.add_argument("--max-outer", dest="max_outer", type=str)
    p.add_argument("--tol", type=str, help="dual gap tolerance")
    p.add_argument("--rho", type=str, help="LASSO regularization weight")
    p.add_argument("--hb-window", dest="hb_window", type=str)
    p.add_argument("--seed", type=str)
    p.add_argument("--out", type=str)
    p.add_argument("--curvature-samples", dest="curvature_samples", type=str)
    p.add_argument("--suite", choices=SUITES)
    p.add_argument("--jobs", type=str, help="parallel runs for --suite")
    return p


def _read_config_file(path) -> dict:
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _KEYS and key not in _EXTRA_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = val
    return values


def _convert(key, raw):
    if raw is None or raw == "":
        return None
    if key in _EXTRA_KEYS:
        return raw
    try:
        if _KEYS[key] is int:
            val = float(raw)
            if not val.is_integer():
                raise ValueError
            return int(val)
        return _KEYS[key](raw)
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for {key}") from None


def _resolve(argv) -> tuple[dict, dict]:
    """Merged settings (file first, flags override) split into spec fields and extras."""
    ns = _arg_parser().parse_args(list(argv))
    raw = _read_config_file(ns.config) if ns.config else {}
    for key in list(_KEYS) + list(_EXTRA_KEYS):
        val = getattr(ns, key, None)
        if val is not None:
            raw[key] = val
    fields = {}
    extras = {}
    for key, val in raw.items():
        conv = _convert(key, val)
        if conv is None:
            continue
        (extras if key in _EXTRA_KEYS else fields)[key] = conv
    return fields, extras


def parse_config(args=()) -> RunSpec:
    """Build a :class:`RunSpec` from command line flags and/or a ``--config`` file.

    Unset fields take the defaults (relaxed variant, two inner iterations,
    50000 outer iterations, tolerance 1e-6). The problem may be left empty
    here; :func:`run_experiment` requires it.
    """
    fields, _ = _resolve(args)
    return RunSpec(**fields)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    if x is None:
        return ""
    return str(x)


def _write_csv(path: Path, columns, rows, header: str = "") -> None:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _trace_rows(trace):
    for r in trace.records:
        yield {
            "t": r.t, "f": float(r.f_t), "h_t": float(r.h_t), "g_hat": float(r.g_hat),
            "L_t": float(r.L_t), "G_t": float(r.G_t), "inner_iters": r.inner_iters,
            "pivot_cum": r.pivot_cum, "elapsed_ms": round(1000.0 * r.elapsed, 3), "exact_flag": bool(r.exact),
        }


def run_experiment(spec: RunSpec) -> RunResult:
    """Solve one configured problem and write ``trace.csv`` and ``summary.csv`` to ``spec.out``."""
    if not spec.problem:
        raise ConfigError("no problem given (use --problem)")
    try:
        problem = make_problem(spec.problem, spec.n, spec.rho)
    except DatasetError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    config = spec.config()
    curvature = None
    if spec.variant != "subgradient_fw":
        curvature = estimate_curvature(problem, spec.curvature_samples, spec.seed)
    try:
        trace = solve(problem, config, curvature)
    except (LPError, TapeError, SolverError) as exc:
        raise SolverError(f"{spec.problem}: {exc}") from exc
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "problem": problem.name, "n": problem.n, "variant": spec.variant,
        "max_inner": spec.max_inner, "max_outer": spec.max_outer, "tol": spec.tol,
        "rho": spec.rho, "seed": spec.seed, "f_final": float(trace.f_final),
        "f_ref": problem.f_ref, "iterations": trace.iterations,
        "total_pivots": trace.total_pivots, "stop_reason": trace.stop_reason,
        "certified": trace.certified,
        "C_f_est": trace.curvature.C_f_est if trace.curvature else None,
        "intercept": None, "mse": None,
    }
    if problem.meta and "A" in problem.meta:
        summary.update(lasso_report(problem, trace.x_final))
    trace_path = out / "trace.csv"
    summary_path = out / "summary.csv"
    _write_csv(trace_path, TRACE_COLUMNS, _trace_rows(trace), TRACE_HEADER)
    _write_csv(summary_path, SUMMARY_COLUMNS, [summary])
    return RunResult(spec, summary, trace_path, summary_path)


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

SUITES = ("tables", "figures", "lasso", "all")

_TABLE_COLUMNS = {
    "table1": ("problem", "n", "f_ref", "max_inner", "iterations", "f_final", "total_pivots", "stop_reason"),
    "table2": ("problem", "n", "f_ref", "max_inner", "iterations", "f_final", "total_pivots", "stop_reason"),
    "table4": (
        "problem", "n", "f_ref", "asfw_iterations", "asfw_f", "asfw_stop",
        "sgfw_iterations", "sgfw_f", "sgfw_stop",
    ),
    "table5": ("rho", "iterations", "intercept", "mse", "total_pivots", "stop_reason"),
}


def _suite_specs(suite: str) -> dict:
    """Table name -> list of ``(run id, RunSpec)`` in table order."""
    tables = {}
    if suite in ("tables", "all"):
        rows = []
        for name, n in (("maxq", 20), ("wong2", None), ("cb3i", 500)):
            for k in (2, 10, 100):
                rows.append((f"{name}_inner{k}", RunSpec(problem=name, n=n, max_inner=k)))
        tables["table1"] = rows
        tables["table2"] = [
            (f"mifflin2_inner{k}", RunSpec(problem="mifflin2", n=200, max_inner=k)) for k in (2, 10)
        ]
        rows = []
        for name, n, budget in (("maxq", 20, 20001), ("wong2", None, 10001), ("cb3i", 300, 10001), ("mifflin2", 1000, 10001)):
            rows.append((f"{name}_asfw", RunSpec(problem=name, n=n, max_inner=2)))
            rows.append((f"{name}_sgfw", RunSpec(problem=name, n=n, variant="subgradient_fw", max_outer=budget)))
        tables["table4"] = rows
    if suite in ("lasso", "all"):
        tables["table5"] = [
            (f"lasso_rho{rho:g}", RunSpec(problem="lasso", rho=rho, max_inner=2)) for rho in (0.1, 0.5, 1.0, 5.0, 10.0)
        ]
    if suite in ("figures", "all"):
        tables["figures"] = [
            (name, RunSpec(problem=name, n=n, max_inner=2))
            for name, n in (("maxq", 20), ("wong2", None), ("cb3i", 500), ("mifflin2", 200))
        ]
    return tables


def _table_rows(table: str, results: list) -> list:
    if table in ("table1", "table2"):
        return [r.summary for r in results]
    if table == "table5":
        return [r.summary for r in results]
    rows = []
    for asfw, sgfw in zip(results[0::2], results[1::2]):
        a, s = asfw.summary, sgfw.summary
        rows.append({
            "problem": a["problem"], "n": a["n"], "f_ref": a["f_ref"],
            "asfw_iterations": a["iterations"], "asfw_f": a["f_final"], "asfw_stop": a["stop_reason"],
            "sgfw_iterations": s["iterations"], "sgfw_f": s["f_final"], "sgfw_stop": s["stop_reason"],
        })
    return rows


def run_suite(suite: str, out=".", jobs: int = 1, overrides: dict | None = None) -> list:
    """Run every experiment of ``suite`` and write one table file per table.

    Each run writes into ``out/<table>/<run id>/``. ``overrides`` replaces
    RunSpec fields in every run (for example a smaller ``max_outer``).
    Returns the paths of the aggregated files.
    """
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; expected one of {SUITES}")
    if jobs < 1:
        raise ConfigError("jobs must be positive")
    out = Path(out)
    plan = []
    for table, rows in _suite_specs(suite).items():
        for run_id, spec in rows:
            fields = dict(overrides or {})
            fields["out"] = str(out / table / run_id)
            plan.append((table, replace(spec, **fields)))
    if jobs == 1:
        results = [run_experiment(spec) for _, spec in plan]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_experiment, [spec for _, spec in plan]))
    written = []
    by_table = {}
    for (table, _), res in zip(plan, results):
        by_table.setdefault(table, []).append(res)
    for table, res in by_table.items():
        if table == "figures":
            written.extend(r.trace_path for r in res)
            continue
        path = out / f"{table}.csv"
        _write_csv(path, _TABLE_COLUMNS[table], _table_rows(table, res))
        written.append(path)
    return written


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        fields, extras = _resolve(argv)
        jobs = int(extras.get("jobs", 1) or 1)
        if "suite" in extras:
            suite = extras["suite"]
            out = fields.pop("out", ".")
            overrides = {k: v for k, v in fields.items() if k not in ("problem", "n", "rho", "variant", "max_inner")}
            for path in run_suite(suite, out, jobs, overrides):
                print(path)
            return EXIT_OK
        spec = RunSpec(**fields)
        res = run_experiment(spec)
    except ConfigError as exc:
        print(f"asfw: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, LPError, TapeError) as exc:
        print(f"asfw: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, DatasetError) as exc:
        print(f"asfw: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    s = res.summary
    print(f"{s['problem']}: f = {s['f_final']!r} after {s['iterations']} iterations "
          f"({s['total_pivots']} pivots, stop: {s['stop_reason']})")
    print(res.summary_path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
