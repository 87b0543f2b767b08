"""Dense bounded-variable primal simplex.

Solves ``min c.x  s.t.  G x <= h, E x = e, lb <= x <= ub`` with a
two-phase tableau method. The tableau covers structural columns, one slack
per row and artificials for rows the starting point violates. The working
state can be kept and updated by a rank-one change of the rows, which lets
the piecewise linear solver re-solve neighbouring pieces cheaply.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.linalg.blas import dger

from . import _kernel_py

OPTIMAL = 0
UNBOUNDED = 1
PIVOT_LIMIT = 2

FEAS_TOL = 1e-8
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
# refactor once the stored values disagree with the rows by this much
DRIFT_TOL = 1e-9


def _load_kernel():
    if os.environ.get("ASFW_PURE_PYTHON", "") not in ("", "0"):
        return _kernel_py.iterate, "python"
    try:
        from . import _kernel
    except ImportError:
        return _kernel_py.iterate, "python"
    return _kernel.iterate, "cython"


_iterate, KERNEL = _load_kernel()


class LPError(RuntimeError):
    """The simplex iteration failed to terminate."""


@dataclass
class LPProblem:
    c: np.ndarray
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    E: np.ndarray | None = None
    e: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.shape[0]
        self.G = np.zeros((0, n)) if self.G is None else np.asarray(self.G, dtype=float).reshape(-1, n)
        self.h = np.zeros(0) if self.h is None else np.asarray(self.h, dtype=float).ravel()
        self.E = np.zeros((0, n)) if self.E is None else np.asarray(self.E, dtype=float).reshape(-1, n)
        self.e = np.zeros(0) if self.e is None else np.asarray(self.e, dtype=float).ravel()
        self.lb = np.asarray(self.lb, dtype=float).ravel() if self.lb is not None else None
        self.ub = np.asarray(self.ub, dtype=float).ravel() if self.ub is not None else None
        if self.lb is None or self.ub is None:
            raise ValueError("finite variable bounds are required")
        if self.h.shape[0] != self.G.shape[0] or self.e.shape[0] != self.E.shape[0]:
            raise ValueError("constraint rows and right-hand sides differ in length")
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("bounds must match the number of variables")
        if not (np.all(np.isfinite(self.lb)) and np.all(np.isfinite(self.ub))):
            raise ValueError("finite variable bounds are required")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.c.shape[0]


@dataclass
class LPSolution:
    status: str
    x: np.ndarray
    objective_value: float
    pivot_count: int
    # structural/slack columns in the final basis, usable as a hint
    basis: np.ndarray = field(repr=False, default=None)


@dataclass
class SimplexState:
    """Working tableau ``T = B^{-1} A`` with primal values and basis.

    Columns: ``[0, n)`` structural, ``[n, n+m)`` slacks (``h - G x``),
    then the artificials still present.
    """

    G: np.ndarray
    h: np.ndarray
    c: np.ndarray
    T: np.ndarray
    d: np.ndarray
    x: np.ndarray
    basis: np.ndarray
    where: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    art_sign: np.ndarray
    art_row: np.ndarray
    pivots: int = 0
    bland: bool = False

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[0]

    @property
    def primal(self) -> np.ndarray:
        return self.x[: self.n].copy()

    @property
    def value(self) -> float:
        return float(self.c @ self.x[: self.n])

    def copy(self) -> "SimplexState":
        return SimplexState(
            self.G.copy(), self.h.copy(), self.c.copy(), self.T.copy(), self.d.copy(),
            self.x.copy(), self.basis.copy(), self.where.copy(), self.lo.copy(),
            self.hi.copy(), self.art_sign.copy(), self.art_row.copy(), self.pivots, self.bland,
        )

    def full_matrix(self) -> np.ndarray:
        m, n = self.m, self.n
        A = np.zeros((m, self.T.shape[1]))
        A[:, :n] = self.G
        A[:, n:n + m] = np.eye(m)
        A[self.art_row, n + m + np.arange(self.art_row.size)] = self.art_sign
        return A

    def _activity(self, x, absolute=False) -> np.ndarray:
        """``A @ x`` (or ``|A| @ |x|``) without forming the full matrix."""
        n, m = self.n, self.m
        G = np.abs(self.G) if absolute else self.G
        xs = np.abs(x) if absolute else x
        out = G @ xs[:n] + xs[n:n + m]
        if self.art_row.size:
            sign = np.abs(self.art_sign) if absolute else self.art_sign
            np.add.at(out, self.art_row, sign * xs[n + m:])
        return out

    def reduced_costs(self, c=None) -> np.ndarray:
        c = self.c if c is None else c
        cf = np.zeros(self.T.shape[1])
        cf[: self.n] = c
        return cf - cf[self.basis] @ self.T

    def is_optimal(self, d=None) -> bool:
        d = self.d if d is None else d
        nb = self.where < 0
        mov = self.lo < self.hi
        bad = (nb & mov & (self.where == -1) & (d < -OPT_TOL)) | (nb & mov & (self.where == -2) & (d > OPT_TOL))
        return not bad.any()

    def run(self, max_pivots=None):
        n_rows = self.m
        if max_pivots is None:
            max_pivots = 50 * (self.n + n_rows) + 1000
        bland_after = 10 * (self.n + n_rows) + 10
        status, piv, bland = _iterate(
            self.T, self.d, self.x, self.basis, self.where, self.lo, self.hi,
            OPT_TOL, PIVOT_TOL, int(max_pivots), int(bland_after), bool(self.bland),
        )
        self.pivots += int(piv)
        self.bland = bool(bland)
        return status

    def refactor(self) -> None:
        """Rebuild the tableau and basic values from the basis."""
        A = self.full_matrix()
        lu = lu_factor(A[:, self.basis], check_finite=False)
        self.T = np.ascontiguousarray(lu_solve(lu, A, check_finite=False))
        nb = self.where < 0
        rhs = self.h - A[:, nb] @ self.x[nb]
        self.x[self.basis] = lu_solve(lu, rhs, check_finite=False)
        self.d = self.reduced_costs()

    def residual(self) -> float:
        """Largest bound or row violation of the structurals, relative to magnitude."""
        return self._health()[1]

    def _health(self) -> tuple[float, float]:
        """``(drift, residual)`` from one pass over the rows."""
        n, m = self.n, self.m
        xs = self.x[:n]
        act = self.G @ xs
        absact = np.abs(self.G) @ np.abs(xs)
        slack = self.x[n:n + m]
        full = act + slack
        absfull = absact + np.abs(slack)
        if self.art_row.size:
            art = self.x[n + m:]
            np.add.at(full, self.art_row, self.art_sign * art)
            np.add.at(absfull, self.art_row, np.abs(art))
        drift = float(np.max(np.abs(full - self.h) / (1.0 + np.abs(self.h) + absfull), initial=0.0))
        lo, hi = self.lo[:n], self.hi[:n]
        viol_bounds = float(np.max(np.maximum(lo - xs, xs - hi) / (1.0 + np.abs(xs)), initial=0.0))
        sl = self.h - act
        slo, shi = self.lo[n:n + m], self.hi[n:n + m]
        with np.errstate(invalid="ignore"):
            viol = np.maximum(slo - sl, sl - shi)
        viol_rows = float(np.max(viol / (1.0 + np.abs(self.h) + absact), initial=0.0))
        return drift, max(viol_bounds, viol_rows, 0.0)

    def _repair(self, rows) -> bool:
        """Phase 1 from the current basis for the basic variables of ``rows``.

        Each violating basic variable is moved to its nearest bound and
        replaced in the basis by a temporary artificial column. Returns
        False when the artificials cannot all be driven out at zero.
        """
        n, m = self.n, self.m
        N = self.T.shape[1]
        k = rows.size
        T = np.zeros((m, N + k))
        T[:, :N] = self.T
        x = np.concatenate([self.x, np.zeros(k)])
        lo = np.concatenate([self.lo, np.zeros(k)])
        hi = np.concatenate([self.hi, np.full(k, np.inf)])
        where = np.concatenate([self.where, np.full(k, -1, dtype=np.int64)])
        basis = self.basis.copy()
        for j, r in enumerate(rows):
            col = basis[r]
            val = x[col]
            if val < lo[col]:
                bound, flag = lo[col], -1
            else:
                bound, flag = hi[col], -2
            sgn = 1.0 if val > bound else -1.0
            # x_col + sgn * a = val in row r, so a = |val - bound| once x_col sits at the bound
            T[r] *= sgn
            T[r, N + j] = 1.0
            x[col] = bound
            where[col] = flag
            x[N + j] = abs(val - bound)
            basis[r] = N + j
            where[N + j] = r
        c1 = np.zeros(N + k)
        c1[N:] = 1.0
        d = c1 - c1[basis] @ T
        status, piv, _ = _iterate(
            T, d, x, basis, where, lo, hi, OPT_TOL, PIVOT_TOL,
            50 * (n + m) + 1000, 10 * (n + m) + 10, False,
        )
        self.pivots += int(piv)
        if status != OPTIMAL or np.any(where[N:] >= 0):
            return False
        if float(x[N:].sum()) > FEAS_TOL * (1.0 + float(np.abs(self.h).max(initial=0.0))):
            return False
        self.T = np.ascontiguousarray(T[:, :N])
        self.x = x[:N]
        self.basis = basis
        self.where = where[:N]
        return True

    def drift(self) -> float:
        """Relative mismatch between the row equations and the stored values."""
        return self._health()[0]

    def polish(self) -> int:
        """Refactor and re-optimize when round-off has built up; returns the status."""
        drift, resid = self._health()
        if drift <= DRIFT_TOL and resid <= 1e-7:
            return OPTIMAL
        self.refactor()
        status = self.run()
        if status == OPTIMAL and self.residual() > 1e-7:
            return PIVOT_LIMIT
        return status

    def rank_one_update(self, u, q, dh, dc, slack_hi=None, precheck=False):
        """Solve the LP with rows ``G + u q^T``, rhs ``h + dh``, cost ``c + dc``.

        Keeps the current basis and applies the Sherman-Morrison update to
        the tableau, then re-optimizes. Basic values pushed outside their
        bounds by the new rows are repaired by a short phase 1 from the same
        basis. Returns the new state, or ``None`` when the basis becomes
        (nearly) singular or the repair fails, in which case the caller
        should solve from scratch. With ``precheck`` the reduced costs
        of the updated basis are formed first, and ``UNCHANGED`` is returned
        without copying the tableau if the basis stays optimal.
        """
        n, m = self.n, self.m
        N = self.T.shape[1]
        # B^{-1} u from the slack block, reading only the columns where u is nonzero
        nzu = np.flatnonzero(u)
        y = self.T[:, n + nzu] @ u[nzu]
        qfull = np.zeros(N)
        qfull[:n] = q
        qB = qfull[self.basis]
        beta = 1.0 + float(qB @ y)
        if abs(beta) < 1e-9:
            return None
        r = qfull - _sparse_rows(qB, self.T)
        hi = self.hi
        where = self.where
        if slack_hi is not None:
            hi = hi.copy()
            hi[n:n + m] = slack_hi
            # an equality slack that became an inequality leaves its upper bound
            where = where.copy()
            where[(where == -2) & ~np.isfinite(hi)] = -1
        # reduced costs are linear in the cost vector, so only dc is priced
        dcf = np.zeros(N)
        dcf[:n] = dc
        cf = np.zeros(N)
        cf[:n] = self.c + dc
        cB = cf[self.basis]
        d_new = self.d + dcf - _sparse_rows(dcf[self.basis], self.T) - (float(cB @ y) / beta) * r
        if precheck:
            nb = where < 0
            mov = self.lo < hi
            bad = nb & mov & (((where == -1) & (d_new < -OPT_TOL)) | ((where == -2) & (d_new > OPT_TOL)))
            if not bad.any():
                return UNCHANGED
        new = self.copy()
        new.pivots = 0
        new.hi = hi.copy() if hi is self.hi else hi
        new.where = where.copy() if where is self.where else where
        # in-place rank-one update on the Fortran view of the tableau
        dger(1.0 / beta, r, y, a=new.T.T, overwrite_a=True)
        new.G[nzu] += np.outer(u[nzu], q)
        new.h += dh
        new.c += dc
        nb = new.where < 0
        new.x[nb] = np.where(new.where[nb] == -1, new.lo[nb], new.hi[nb])
        rhs = new.h - new._activity(np.where(nb, new.x, 0.0))
        new.x[new.basis] = new.T[:, n:n + m] @ rhs
        xb = new.x[new.basis]
        # small violations are repaired rather than clipped so rows stay exact
        tol = 1e-10 * (1.0 + np.abs(xb))
        viol = (xb < new.lo[new.basis] - tol) | (xb > new.hi[new.basis] + tol)
        if viol.any():
            if not new._repair(np.flatnonzero(viol)):
                return None
            new.d = new.reduced_costs()
        else:
            new.d = d_new
        xb = new.x[new.basis]
        new.x[new.basis] = np.clip(xb, new.lo[new.basis], new.hi[new.basis])
        new.bland = False
        status = new.run()
        if status != OPTIMAL:
            return None
        if new.polish() != OPTIMAL:
            return None
        return new


UNCHANGED = "unchanged"


def _sparse_rows(v, T):
    """``v @ T`` touching only the rows where ``v`` is nonzero."""
    idx = np.flatnonzero(v)
    if idx.size * 4 > v.size:
        return v @ T
    return v[idx] @ T[idx]


def build_state(G, h, c, lb, ub, slack_hi, basis_hint=None) -> SimplexState:
    """Starting tableau; structurals sit at a bound, rows that fail get an artificial."""
    G = np.ascontiguousarray(G, dtype=float)
    m, n = G.shape
    h = np.asarray(h, dtype=float)
    x0 = np.asarray(lb, dtype=float).copy()
    where0 = np.full(n, -1, dtype=np.int64)
    if basis_hint is not None:
        # nonbasic structurals at the bound indicated by the hint
        hint = np.asarray(basis_hint, dtype=np.int64)
        if hint.shape == (n,):
            at_hi = hint == -2
            x0[at_hi] = ub[at_hi]
            where0[at_hi] = -2
    rho = h - G @ x0
    ok = (rho >= -FEAS_TOL) & (rho <= slack_hi + FEAS_TOL)
    bad = np.flatnonzero(~ok)
    k = bad.size
    N = n + m + k
    sign = np.where(rho[bad] > 0, 1.0, -1.0)
    T = np.zeros((m, N))
    T[:, :n] = G
    T[:, n:n + m] = np.eye(m)
    # rows led by an artificial are scaled so its column is a unit vector
    T[bad] *= sign[:, None]
    T[bad, n + m + np.arange(k)] = 1.0
    x = np.zeros(N)
    x[:n] = x0
    x[n:n + m] = np.where(ok, np.clip(rho, 0.0, slack_hi), 0.0)
    x[n + m:] = np.abs(rho[bad])
    basis = np.arange(n, n + m, dtype=np.int64)
    basis[bad] = n + m + np.arange(k)
    where = np.full(N, -1, dtype=np.int64)
    where[:n] = where0
    where[basis] = np.arange(m)
    lo = np.zeros(N)
    lo[:n] = lb
    hi = np.full(N, np.inf)
    hi[:n] = ub
    hi[n:n + m] = slack_hi
    c = np.asarray(c, dtype=float)
    return SimplexState(
        G, h.copy(), c.copy(), T, np.zeros(N), x, basis, where, lo, hi,
        sign, bad.astype(np.int64),
    )


def solve_state(G, h, c, lb, ub, slack_hi, basis_hint=None) -> tuple[SimplexState, str]:
    """Two-phase solve; returns the final state and a status string."""
    st = build_state(G, h, c, lb, ub, slack_hi, basis_hint)
    n, m = st.n, st.m
    k = st.art_row.size
    if k:
        c1 = np.zeros(st.T.shape[1])
        c1[n + m:] = 1.0
        st.d = c1 - c1[st.basis] @ st.T
        status = st.run()
        if status == PIVOT_LIMIT:
            raise LPError("phase 1 hit the pivot limit")
        limit = FEAS_TOL * (1.0 + float(np.abs(h).max(initial=0.0)))
        if float(st.x[n + m:].sum()) > limit and st.drift() > DRIFT_TOL:
            # long degenerate phase 1 runs drift; judge infeasibility on a fresh factorization
            st.refactor()
            st.d = c1 - c1[st.basis] @ st.T
            if st.run() == PIVOT_LIMIT:
                raise LPError("phase 1 hit the pivot limit")
        if float(st.x[n + m:].sum()) > limit:
            return st, "infeasible"
        st.hi[n + m:] = 0.0
        st.x[n + m:] = np.minimum(st.x[n + m:], 0.0)
        keep = np.ones(st.T.shape[1], dtype=bool)
        drop = n + m + np.flatnonzero(st.where[n + m:] < 0)
        keep[drop] = False
        if drop.size:
            remap = np.cumsum(keep) - 1
            st.T = np.ascontiguousarray(st.T[:, keep])
            st.x = st.x[keep]
            st.lo = st.lo[keep]
            st.hi = st.hi[keep]
            st.where = st.where[keep]
            st.basis = remap[st.basis].astype(np.int64)
            alive = st.where[n + m:] >= 0
            rem = np.flatnonzero(keep[n + m:])
            st.art_row = st.art_row[rem]
            st.art_sign = st.art_sign[rem]
            assert alive.all()
        st.bland = False
    st.d = st.reduced_costs()
    status = st.run()
    if status == UNBOUNDED:
        return st, "unbounded"
    if status == PIVOT_LIMIT:
        raise LPError("phase 2 hit the pivot limit")
    if st.polish() != OPTIMAL:
        raise LPError("re-optimization after refactoring failed")
    return st, "optimal"


def solve_lp(problem: LPProblem, basis_hint=None) -> LPSolution:
    """Minimize ``problem.c @ x`` over the polyhedron.

    Status is ``"optimal"`` or ``"infeasible"`` (bounds are finite, so the
    problem cannot be unbounded). ``basis_hint`` is the ``basis`` field of an
    earlier solution of a problem with the same shape; it only chooses the
    starting bounds of the structurals.
    """
    p = problem
    G = np.vstack([p.G, p.E])
    h = np.concatenate([p.h, p.e])
    slack_hi = np.concatenate([np.full(p.G.shape[0], np.inf), np.zeros(p.E.shape[0])])
    st, status = solve_state(G, h, p.c, p.lb, p.ub, slack_hi, basis_hint)
    x = st.primal
    if status != "optimal":
        return LPSolution(status, x, float("nan"), st.pivots, st.where[: p.n].copy())
    return LPSolution(status, x, float(p.c @ x), st.pivots, st.where[: p.n].copy())
