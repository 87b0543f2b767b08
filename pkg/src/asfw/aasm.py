"""Active signature method for abs-linear models over a polytope.

The model ``v -> delta(form, alpha (v - x0))`` is linear on the closure of
each signature domain, so minimizing it there is one LP. The method walks
from the signature of the anchor to adjacent signatures while that lowers
the model value, and stops when no single flip of an active kink helps or
when the inner budget runs out.

Adjacent pieces differ from the current one by a rank-one change of the LP
rows (every switching variable after the flipped kink shifts by a multiple
of the flipped one), so probes reuse the current tableau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .lp.core import UNCHANGED, SimplexState, solve_state
from .plmodel import AbsLinearForm, delta, restrict_to_signature, signature, step_form

__all__ = ["Polytope", "PLSolveResult", "minimize_pl", "local_opt_check", "next_signature"]

ACTIVE_TOL = 1e-9


@dataclass(frozen=True)
class Polytope:
    """Box ``lb <= x <= ub`` intersected with optional rows ``G x <= h``."""

    lb: np.ndarray
    ub: np.ndarray
    G: np.ndarray | None = None
    h: np.ndarray | None = None

    def __post_init__(self):
        lb = np.asarray(self.lb, dtype=float).ravel()
        ub = np.asarray(self.ub, dtype=float).ravel()
        if lb.shape != ub.shape:
            raise ValueError("lb and ub differ in length")
        if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
            raise ValueError("polytope bounds must be finite")
        if np.any(lb > ub):
            raise ValueError("lb exceeds ub")
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)
        n = lb.size
        G = np.zeros((0, n)) if self.G is None else np.asarray(self.G, dtype=float).reshape(-1, n)
        h = np.zeros(0) if self.h is None else np.asarray(self.h, dtype=float).ravel()
        if G.shape[0] != h.shape[0]:
            raise ValueError("G and h differ in length")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)

    @classmethod
    def box(cls, lo, hi, n):
        return cls(np.full(n, float(lo)), np.full(n, float(hi)))

    @property
    def n(self) -> int:
        return self.lb.size

    @property
    def has_rows(self) -> bool:
        return self.G.shape[0] > 0

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.ub - self.lb))

    def contains(self, x, tol=1e-8) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lb - tol) or np.any(x > self.ub + tol):
            return False
        return bool(np.all(self.G @ x <= self.h + tol))


@dataclass
class PLSolveResult:
    v: np.ndarray
    model_value: float
    inner_iters: int
    pivot_total: int
    exact: bool
    sigma: np.ndarray = field(repr=False, default=None)


def _pow2_scale(v) -> float:
    """Power of two near ``max|v|`` (1 for a zero vector)."""
    m = float(np.max(np.abs(v), initial=0.0))
    if m == 0.0 or not math.isfinite(m):
        return 1.0
    return math.ldexp(1.0, math.frexp(m)[1] - 1)


class _Piece:
    """One signature LP together with its solved simplex state."""

    def __init__(self, g: AbsLinearForm, C: Polytope, sigma, grad, offset, zrows, zoff, rho, scale, state):
        self.g = g
        self.C = C
        self.sigma = sigma
        self.grad = grad
        self.offset = offset
        self.zrows = zrows
        self.zoff = zoff
        self.rho = rho
        self.scale = scale
        self.state = state
        self._P = None

    @property
    def v(self) -> np.ndarray:
        return self.state.primal

    @property
    def value(self) -> float:
        return float(self.grad @ self.state.x[: self.g.n] + self.offset)

    def slack_hi(self, sigma=None):
        sigma = self.sigma if sigma is None else sigma
        hi = np.full(self.state.m, np.inf)
        hi[: sigma.size][sigma == 0] = 0.0
        return hi

    def P(self):
        if self._P is None:
            g = self.g
            self._P = np.eye(g.s) - g.M - g.L * self.sigma[None, :].astype(float)
        return self._P

    def active(self) -> np.ndarray:
        s = self.g.s
        slack = self.state.x[self.g.n:self.g.n + s]
        return np.flatnonzero((self.sigma == 0) | (slack <= ACTIVE_TOL))


def _lp_rows(g, C, sigma, zrows, zoff):
    sg = np.where(sigma == 0, 1.0, sigma.astype(float))
    raw = -sg[:, None] * zrows
    rho = np.array([1.0 / _pow2_scale(r) for r in raw]) if g.s else np.zeros(0)
    G = np.vstack([rho[:, None] * raw, C.G])
    h = np.concatenate([rho * sg * zoff, C.h])
    return G, h, rho


def _cold_piece(g: AbsLinearForm, C: Polytope, sigma, scale=None):
    """Solve the LP of ``sigma`` from scratch; ``None`` if it is infeasible."""
    sigma = np.asarray(sigma, dtype=np.int8)
    piece = restrict_to_signature(g, sigma)
    G, h, rho = _lp_rows(g, C, sigma, piece.zrows, piece.zoff)
    if scale is None:
        scale = _pow2_scale(piece.grad)
    slack_hi = np.full(G.shape[0], np.inf)
    slack_hi[: g.s][sigma == 0] = 0.0
    state, status = solve_state(G, h, piece.grad / scale, C.lb, C.ub, slack_hi)
    out = _Piece(g, C, sigma, piece.grad, piece.offset, piece.zrows, piece.zoff, rho, scale, state)
    return out, status, state.pivots


def _flip(piece: _Piece, i: int, tau: int, precheck: bool):
    """Re-solve with kink ``i`` moved to sign ``tau``.

    Returns ``(new_piece_or_None, pivots, no_descent)``; ``no_descent`` is set
    when the current point provably stays optimal.
    """
    g = piece.g
    sigma = piece.sigma
    s = g.s
    si = float(sigma[i])
    dlt = tau - si
    lcol = g.L[:, i]
    w = np.zeros(s)
    if lcol.any():
        w = solve_triangular(piece.P(), lcol * dlt, lower=True, unit_diagonal=True, check_finite=False)
        w[: i + 1] = 0.0
    sgf = np.where(sigma == 0, 1.0, sigma.astype(float))
    kappa = g.b[i] * dlt + float((g.b * sigma)[i + 1:] @ w[i + 1:])
    q = piece.zrows[i]
    p = piece.zoff[i]
    m = piece.state.m
    u = np.zeros(m)
    u[:s] = -piece.rho * sgf * w
    u[i] = piece.rho[i] * (sgf[i] - tau)
    dh = -u * p
    dc = (kappa / piece.scale) * q
    new_sigma = sigma.copy()
    new_sigma[i] = tau
    slack_hi = piece.slack_hi(new_sigma)
    res = piece.state.rank_one_update(u, q, dh, dc, slack_hi=slack_hi, precheck=precheck)
    if res is UNCHANGED:
        return None, 0, True
    if res is None:
        new, status, piv = _cold_piece(g, piece.C, new_sigma, piece.scale)
        if status != "optimal":
            return None, piv, False
        return new, piv, False
    if w.any():
        zrows = piece.zrows + np.outer(w, q)
        zoff = piece.zoff + w * p
    else:
        zrows, zoff = piece.zrows, piece.zoff
    new = _Piece(g, piece.C, new_sigma, piece.grad + kappa * q, piece.offset + kappa * p, zrows, zoff, piece.rho, piece.scale, res)
    return new, res.pivots, False


def _targets(sigma_i):
    if sigma_i == 0:
        return (1, -1)
    return (-int(sigma_i),)


def _search(piece: _Piece, first_only: bool):
    """Best single flip of an active kink.

    Returns ``(best_piece_or_None, pivots)``. With ``first_only`` the scan stops
    at the first flip that lowers the value.
    """
    cur = piece.value
    tol = 1e-10 * (1.0 + abs(cur))
    best, best_dec = None, tol
    pivots = 0
    for i in piece.active():
        for tau in _targets(piece.sigma[i]):
            cand, piv, _ = _flip(piece, int(i), tau, precheck=True)
            pivots += piv
            if cand is None:
                continue
            dec = cur - cand.value
            if dec > best_dec:
                best, best_dec = cand, dec
                if first_only:
                    return best, pivots
    return best, pivots


def _prepare(form, C, x0, alpha):
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (form.n,) or C.n != form.n:
        raise ValueError("dimension mismatch between form, polytope and anchor")
    g = step_form(form, alpha)
    return g


def minimize_pl(form: AbsLinearForm, C: Polytope, x0, alpha: float = 1.0, max_inner: int = 100) -> PLSolveResult:
    """Minimize ``v -> delta(form, alpha (v - x0))`` over ``C``.

    ``x0`` must coincide with ``form.anchor``. Starts at the signature of
    ``x0`` and follows the best single-kink flip while it lowers the value by
    more than ``1e-10 (1 + |value|)``. ``exact`` reports whether the returned
    point passed the local optimality check; for convex models it is then a
    global minimizer.
    """
    if max_inner < 1:
        raise ValueError("max_inner must be at least 1")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    x0 = np.asarray(x0, dtype=float)
    if not np.array_equal(x0, form.anchor):
        raise ValueError("x0 must be the anchor of the form")
    g = _prepare(form, C, x0, alpha)
    sigma0 = signature(g, x0)
    piece, status, pivots = _cold_piece(g, C, sigma0)
    if status != "optimal":
        raise RuntimeError("signature LP at the anchor is infeasible; is x0 in C?")
    inner = 1
    while True:
        final = inner >= max_inner
        nxt, piv = _search(piece, first_only=final)
        pivots += piv
        if nxt is None:
            exact = True
            break
        if final:
            exact = False
            break
        piece = nxt
        inner += 1
    v = piece.v
    np.clip(v, C.lb, C.ub, out=v)
    mv = delta(form, alpha * (v - x0))
    return PLSolveResult(v, float(mv), inner, int(pivots), exact, piece.sigma.copy())


def _cold_probes(form, C, v, sigma, alpha, first_only):
    """Solve every single-flip neighbour of ``sigma`` at ``v`` from scratch.

    Returns the list of ``(decrease, kink, sign)`` that beat the tolerance,
    in scan order.
    """
    g = _prepare(form, C, form.anchor, alpha)
    sigma = np.asarray(sigma, dtype=np.int8)
    v = np.asarray(v, dtype=float)
    piece = restrict_to_signature(g, sigma)
    cur = piece.objective(v)
    tol = 1e-10 * (1.0 + abs(cur))
    z = piece.zrows @ v + piece.zoff
    rows = np.abs(piece.zrows).max(axis=1, initial=0.0) if g.s else np.zeros(0)
    active = np.flatnonzero((sigma == 0) | (np.abs(z) <= ACTIVE_TOL * np.maximum(rows, 1.0)))
    found = []
    for i in active:
        for tau in _targets(sigma[i]):
            nsig = sigma.copy()
            nsig[i] = tau
            cand, status, _ = _cold_piece(g, C, nsig)
            if status != "optimal":
                continue
            dec = cur - cand.value
            if dec > tol:
                found.append((dec, int(i), tau, nsig))
                if first_only:
                    return found
    return found


def local_opt_check(form: AbsLinearForm, C: Polytope, v, sigma, alpha: float = 1.0) -> bool:
    """True iff no single flip of a kink active at ``v`` lowers the model.

    The model is ``w -> delta(form, alpha (w - form.anchor))`` and ``v`` should
    be LP-optimal on the closure of ``sigma`` intersected with ``C``.
    """
    return not _cold_probes(form, C, v, sigma, alpha, first_only=True)


def next_signature(form: AbsLinearForm, C: Polytope, v, sigma, alpha: float = 1.0) -> np.ndarray:
    """Adjacent signature with the largest decrease (ties: lowest kink, +1 first)."""
    found = _cold_probes(form, C, v, sigma, alpha, first_only=False)
    if not found:
        raise ValueError("v is locally optimal; no descending adjacent signature")
    best = found[0]
    for cand in found[1:]:
        if cand[0] > best[0]:
            best = cand
    return best[3].copy()
