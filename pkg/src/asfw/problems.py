"""Benchmark problems: MAXQ, Wong 2, chained CB3 I, chained Mifflin 2 and
LASSO regression on the diabetes data.

Each maker returns a :class:`Problem` holding the traced objective, the box,
the usual starting point and, where one is known, a reference optimum.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .aasm import Polytope
from .abstape import Tape, affine, absolute, evaluate, exp, maximum, trace

__all__ = [
    "Problem",
    "Dataset",
    "DatasetError",
    "make_maxq",
    "make_wong2",
    "make_cb3i",
    "make_mifflin2",
    "make_lasso",
    "load_csv_dataset",
    "load_diabetes",
    "lasso_report",
    "make_problem",
    "PROBLEMS",
]

MIFFLIN2_REF = {200: -140.86, 1000: -706.55}


@dataclass(frozen=True)
class Problem:
    name: str
    n: int
    tape: Tape
    C: Polytope
    start: np.ndarray
    f_ref: float | None = None
    convex: bool = True
    # extra data for reporting (LASSO design, intercept)
    meta: dict | None = None

    def __post_init__(self):
        start = np.asarray(self.start, dtype=float)
        object.__setattr__(self, "start", start)
        if start.shape != (self.n,) or self.tape.input_dim != self.n or self.C.n != self.n:
            raise ValueError("dimension mismatch between tape, box and start")
        if not self.C.contains(start, tol=0.0):
            raise ValueError(f"{self.name}: start point outside C")

    def f(self, x) -> float:
        return evaluate(self.tape, x).y


def make_maxq(n: int = 20) -> Problem:
    """``max_i x_i^2`` on ``[-20, 20]^n`` as a chain of pairwise maxima."""
    if n < 1:
        raise ValueError("n must be positive")

    def fn(x):
        out = x[0] ** 2
        for i in range(1, n):
            out = maximum(out, x[i] ** 2)
        return out

    half = math.ceil(n / 2)
    start = np.array([i if i <= half else -i for i in range(1, n + 1)], dtype=float)
    return Problem("maxq", n, trace(fn, n), Polytope.box(-20, 20, n), start, 0.0)


def _wong2_f1(x):
    return (
        x[0] ** 2 + x[1] ** 2 + x[0] * x[1] - 14.0 * x[0] - 16.0 * x[1] + (x[2] - 10.0) ** 2
        + 4.0 * (x[3] - 5.0) ** 2 + (x[4] - 3.0) ** 2 + 2.0 * (x[5] - 1.0) ** 2 + 5.0 * x[6] ** 2
        + 7.0 * (x[7] - 11.0) ** 2 + 2.0 * (x[8] - 10.0) ** 2 + (x[9] - 7.0) ** 2 + 45.0
    )


def _wong2_terms(x):
    """The eight bracketed increments of f_2, ..., f_9 over f_1."""
    return [
        3.0 * (x[0] - 2.0) ** 2 + 4.0 * (x[1] - 3.0) ** 2 + 2.0 * x[2] ** 2 - 7.0 * x[3] - 120.0,
        5.0 * x[0] ** 2 + 8.0 * x[1] + (x[2] - 6.0) ** 2 - 2.0 * x[3] - 40.0,
        0.5 * (x[0] - 8.0) ** 2 + 2.0 * (x[1] - 4.0) ** 2 + 3.0 * x[4] ** 2 - x[5] - 30.0,
        x[0] ** 2 + 2.0 * (x[1] - 2.0) ** 2 - 2.0 * x[0] * x[1] + 14.0 * x[4] - 6.0 * x[5],
        4.0 * x[0] + 5.0 * x[1] - 3.0 * x[6] + 9.0 * x[7] - 105.0,
        10.0 * x[0] - 8.0 * x[1] - 17.0 * x[6] + 2.0 * x[7],
        -3.0 * x[0] + 6.0 * x[1] + 12.0 * (x[8] - 8.0) ** 2 - 7.0 * x[9],
        -8.0 * x[0] + 2.0 * x[1] + 5.0 * x[8] - 2.0 * x[9] - 12.0,
    ]


def make_wong2(only_f1: bool = False) -> Problem:
    """Max of the nine Wong 2 quadratics on ``[-10, 10]^10``.

    ``only_f1`` keeps the first (smooth) quadratic alone.
    """

    def fn(x):
        f1 = _wong2_f1(x)
        if only_f1:
            return f1
        out = f1
        for g in _wong2_terms(x):
            out = maximum(out, f1 + 10.0 * g)
        return out

    start = np.array([2, 3, 5, 5, 1, 2, 7, 3, 6, 10], dtype=float)
    name = "wong2_f1" if only_f1 else "wong2"
    return Problem(name, 10, trace(fn, 10), Polytope.box(-10, 10, 10), start, None if only_f1 else 24.3062)


def make_cb3i(n: int = 500) -> Problem:
    """Chained CB3 I on ``[-5, 5]^n``; each term is a three-way max."""
    if n < 2:
        raise ValueError("n must be at least 2")

    def fn(x):
        out = None
        for i in range(n - 1):
            u, w = x[i], x[i + 1]
            t1 = u ** 4 + w ** 2
            t2 = (2.0 - u) ** 2 + (2.0 - w) ** 2
            t3 = 2.0 * exp(w - u)
            term = maximum(maximum(t1, t2), t3)
            out = term if out is None else out + term
        return out

    return Problem("cb3i", n, trace(fn, n), Polytope.box(-5, 5, n), np.full(n, 2.0), 2.0 * (n - 1))


def make_mifflin2(n: int = 200) -> Problem:
    """Chained Mifflin 2 on ``[-3, 3]^n`` (non-convex)."""
    if n < 2:
        raise ValueError("n must be at least 2")

    def fn(x):
        out = None
        for i in range(n - 1):
            q = x[i] ** 2 + x[i + 1] ** 2 - 1.0
            term = -x[i] + 2.0 * q + 1.75 * absolute(q)
            out = term if out is None else out + term
        return out

    return Problem("mifflin2", n, trace(fn, n), Polytope.box(-3, 3, n), np.ones(n), MIFFLIN2_REF.get(n), convex=False)


# ---------------------------------------------------------------------------
# LASSO
# ---------------------------------------------------------------------------


class DatasetError(ValueError):
    """Malformed dataset file."""


@dataclass(frozen=True)
class Dataset:
    A: np.ndarray
    y: np.ndarray
    column_names: tuple

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if A.ndim != 2 or A.shape[0] != y.shape[0]:
            raise DatasetError("design matrix and response differ in row count")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(y))):
            raise DatasetError("missing or non-finite values")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", y)

    @property
    def p(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


def _standardize(A):
    A = A - A.mean(axis=0)
    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0] = 1.0
    return A / norms


def load_csv_dataset(path) -> Dataset:
    """Read a numeric CSV whose last column is the response.

    A leading ``# standardized`` comment declares the predictors centered
    and unit-norm; the loader then only verifies the column means.
    Otherwise the predictors are centered and scaled to unit Euclidean norm.
    """
    path = Path(path)
    standardized = False
    header = None
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                if header is None and "standardized" in text.lower():
                    standardized = True
                continue
            cells = next(csv.reader([text]))
            if header is None:
                header = tuple(c.strip() for c in cells)
                if len(header) < 2:
                    raise DatasetError(f"line {lineno}: need at least one predictor and a response")
                continue
            if len(cells) != len(header):
                raise DatasetError(f"line {lineno}: expected {len(header)} columns, got {len(cells)}")
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise DatasetError(f"line {lineno}: non-numeric cell") from None
    if header is None or not rows:
        raise DatasetError(f"{path}: no data rows")
    data = np.array(rows, dtype=float)
    A, y = data[:, :-1], data[:, -1]
    if standardized:
        if np.max(np.abs(A.mean(axis=0))) > 1e-6:
            raise DatasetError(f"{path}: flagged standardized but column means are not zero")
    else:
        A = _standardize(A)
    return Dataset(A, y, header)


def load_diabetes() -> Dataset:
    """The 442 x 10 diabetes regression data shipped with the package."""
    ref = resources.files("asfw") / "data" / "diabetes.csv"
    with resources.as_file(ref) as path:
        return load_csv_dataset(path)


def make_lasso(data: Dataset, rho: float, bound: float = 1000.0) -> Problem:
    """``1/2 |A x - (y - mean(y))|^2 + rho |x|_1`` on ``[-bound, bound]^n``.

    The quadratic is taped through a thin QR factorization of ``A`` so the
    tape grows with ``n`` rather than with the number of samples.
    """
    if rho < 0:
        raise ValueError("rho must be non-negative")
    if bound <= 0:
        raise ValueError("bound must be positive")
    if data.p == 0:
        raise DatasetError("empty dataset")
    A = data.A
    n = data.n
    intercept = float(data.y.mean())
    yc = data.y - intercept
    Q, R = np.linalg.qr(A, mode="reduced")
    qy = Q.T @ yc
    const = 0.5 * max(float(yc @ yc - qy @ qy), 0.0)
    rows = [(list(R[k]), -float(qy[k])) for k in range(R.shape[0])]

    def fn(x):
        out = None
        for coef, off in rows:
            r = affine(coef, off, x)
            term = 0.5 * r ** 2
            out = term if out is None else out + term
        out = out + const
        if rho > 0:
            for i in range(n):
                out = out + rho * absolute(x[i])
        return out

    meta = {"A": A, "y": data.y, "intercept": intercept, "rho": float(rho)}
    return Problem(f"lasso_rho{rho:g}", n, trace(fn, n), Polytope.box(-bound, bound, n), np.zeros(n), None, meta=meta)


def lasso_report(problem: Problem, x) -> dict:
    """Intercept and mean squared error of the fitted LASSO coefficients."""
    meta = problem.meta or {}
    if "A" not in meta:
        raise ValueError("not a LASSO problem")
    x = np.asarray(x, dtype=float)
    pred = meta["A"] @ x + meta["intercept"]
    mse = float(np.mean((meta["y"] - pred) ** 2))
    return {"intercept": meta["intercept"], "mse": mse}


PROBLEMS = ("maxq", "wong2", "cb3i", "mifflin2", "lasso")


def make_problem(name: str, n: int | None = None, rho: float | None = None) -> Problem:
    """Registry lookup used by the command line runner."""
    if name == "maxq":
        return make_maxq(20 if n is None else n)
    if name == "wong2":
        if n not in (None, 10):
            raise ValueError("wong2 is defined for n = 10 only")
        return make_wong2()
    if name == "cb3i":
        return make_cb3i(500 if n is None else n)
    if name == "mifflin2":
        return make_mifflin2(200 if n is None else n)
    if name == "lasso":
        return make_lasso(load_diabetes(), 1.0 if rho is None else rho)
    raise ValueError(f"unknown problem {name!r}; expected one of {PROBLEMS}")
