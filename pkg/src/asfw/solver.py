"""Outer loops: relaxed and heavy-ball abs-smooth Frank-Wolfe, plus a
subgradient Frank-Wolfe baseline.

All loops use the open-loop schedule ``a_t = 2t + 2``, ``A_t = (t+1)(t+2)``,
``alpha_t = a_t / A_t`` and record one :class:`IterRecord` per iteration.
Row ``t`` of a trace holds ``f(x_t)``, the dual gap estimate computed at
``x_t``, the lower bound ``L_t`` and ``G_t = f(x_{t+1}) - L_t``. A terminal
row carries the final iterate.

Certificates need a curvature constant. It is estimated by sampling (see
:func:`estimate_curvature`), so the reported ``G_t`` is only as reliable as
that estimate.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .aasm import Polytope, minimize_pl
from .abstape import abs_linearize, evaluate, subgradient
from .lp.core import solve_state
from .plmodel import AbsLinearForm, aggregate, delta, eval_pl, restrict_to_signature, step_form

__all__ = [
    "SolveConfig",
    "IterRecord",
    "Trace",
    "CurvatureEstimate",
    "SolverError",
    "step_schedule",
    "estimate_curvature",
    "dual_gap",
    "adgt_update",
    "ADGTState",
    "run_asfw",
    "run_hb_asfw",
    "run_subgradient_fw",
    "solve",
]

VARIANTS = ("vanilla", "relaxed", "heavyball", "subgradient_fw")
CURVATURE_STEPS = (1.0, 0.5, 0.25, 0.125, 0.0625)
UNLIMITED = 10**9


class SolverError(RuntimeError):
    """A run could not be carried out as configured."""


@dataclass
class SolveConfig:
    variant: str = "relaxed"
    max_outer: int = 50000
    max_inner: int = 2
    dual_gap_tol: float = 1e-6
    hb_window: int | None = None
    seed: int = 0
    curvature_samples: int = 256
    # derived quantities reported per iteration, never enforced
    epsilon_report: bool = True
    # enumerate signatures to measure the inner suboptimality when s is at most this
    audit_max_s: int = 0
    hb_stop_every: int = 50
    hb_max_kinks: int = 2000
    keep_iterates: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("max_outer and max_inner must be at least 1")
        if self.dual_gap_tol < 0:
            raise ValueError("dual_gap_tol must be non-negative")
        if self.hb_window is not None and self.hb_window < 1:
            raise ValueError("hb_window must be positive")
        if self.curvature_samples < 1:
            raise ValueError("curvature_samples must be positive")


@dataclass
class IterRecord:
    t: int
    x_t: np.ndarray | None
    f_t: float
    g_hat: float
    L_t: float
    G_t: float
    E_t: float
    pivot_cum: int
    inner_iters: int
    elapsed: float
    exact: bool
    eps_hat: float = float("nan")
    h_t: float = float("nan")


@dataclass
class CurvatureEstimate:
    C_f_est: float
    gamma_est: float
    samples: int


@dataclass
class Trace:
    problem: str
    variant: str
    records: list = field(default_factory=list)
    x_final: np.ndarray | None = None
    f_final: float = float("nan")
    stop_reason: str = ""
    curvature: CurvatureEstimate | None = None
    # False when L_t misses terms (heavy-ball window) or the inner error is unknown
    certified: bool = True
    certificate: str = "convex"

    @property
    def iterations(self) -> int:
        """Number of outer steps taken (the terminal row is not a step)."""
        return max(len(self.records) - 1, 0)

    @property
    def total_pivots(self) -> int:
        return self.records[-1].pivot_cum if self.records else 0

    def column(self, name: str) -> np.ndarray:
        name = {"f": "f_t", "exact_flag": "exact"}.get(name, name)
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def steps(self) -> list:
        """Records of actual iterations, without the terminal row."""
        return self.records[:-1]


def step_schedule(t: int):
    """``(a_t, A_t, alpha_t)`` for iteration ``t``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    a = 2 * t + 2
    A = (t + 1) * (t + 2)
    return float(a), float(A), a / A


def _sample_point(rng, C: Polytope):
    for _ in range(1000):
        x = rng.uniform(C.lb, C.ub)
        if not C.has_rows or C.contains(x, tol=0.0):
            return x
    raise SolverError("could not sample a feasible point of C by rejection")


def estimate_curvature(problem, samples: int = 256, seed: int = 0) -> CurvatureEstimate:
    """Sampled curvature constant of ``problem.tape`` on ``problem.C``.

    For random ``x, v`` in ``C`` and ``alpha`` in {1, 1/2, 1/4, 1/8, 1/16},
    with ``y = x + alpha (v - x)``, takes the largest
    ``2 |f(y) - f(x) - delta_x(y - x)| / alpha^2`` and the largest
    ``|f(y) - f(x) - delta_x(y - x)| / |y - x|^2``.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng(seed)
    tape, C = problem.tape, problem.C
    cf = 0.0
    gamma = 0.0
    for _ in range(samples):
        x = _sample_point(rng, C)
        v = _sample_point(rng, C)
        form = abs_linearize(tape, x)
        fx = form.anchor_value
        for alpha in CURVATURE_STEPS:
            dx = alpha * (v - x)
            err = abs(evaluate(tape, x + dx).y - fx - delta(form, dx))
            cf = max(cf, 2.0 * err / alpha**2)
            nrm = float(dx @ dx)
            if nrm > 0:
                gamma = max(gamma, err / nrm)
    return CurvatureEstimate(cf, gamma, samples)


def dual_gap(form: AbsLinearForm, alpha: float, v) -> float:
    """``-delta(form, alpha (v - x_t)) / alpha`` with ``x_t = form.anchor``."""
    v = np.asarray(v, dtype=float)
    return -delta(form, alpha * (v - form.anchor)) / alpha


def _enumerated_min(form, C, alpha):
    """Global minimum of the step model over every full signature (small s)."""
    g = step_form(form, alpha)
    best = math.inf
    for sig in itertools.product((-1, 1), repeat=g.s):
        sig = np.array(sig, dtype=np.int8)
        piece = restrict_to_signature(g, sig)
        G = np.vstack([-piece.rows, C.G])
        h = np.concatenate([piece.rhs, C.h])
        st, status = solve_state(G, h, piece.grad, C.lb, C.ub, np.full(G.shape[0], np.inf))
        if status == "optimal":
            best = min(best, eval_pl(g, st.primal))
    return best


@dataclass
class ADGTState:
    """Running sums behind the lower bound ``L_t``."""

    sum_af: float = 0.0
    sum_model: float = 0.0
    prev_AG: float = 0.0


def adgt_update(state: ADGTState, t: int, f_t: float, model: float, C_f: float, variant: str = "convex",
                eps: float = 0.0, f_next: float | None = None, hb_phi: float | None = None):
    """Advance the ADGT sums with iteration ``t`` and return ``(L_t, G_t, E_t)``.

    ``model`` is ``delta(x_t; alpha_t (v_t - x_t))``. ``variant`` selects the
    lower bound: ``"convex"`` (relaxed method on a convex function),
    ``"heavyball"`` (``hb_phi`` is the aggregate ``Phi_t(v_t)``) or
    ``"pwlin"`` (only the piecewise linear model is assumed convex).
    ``E_t`` is the bound on ``A_t G_t - A_{t-1} G_{t-1}``. ``G_t`` is NaN when
    ``f_next`` is not known.
    """
    if C_f is None or not math.isfinite(C_f):
        raise ValueError("a finite curvature estimate is required for certificates")
    a, A, alpha = step_schedule(t)
    eps = 0.0 if eps is None or not math.isfinite(eps) else eps
    state.sum_af += a * f_t
    if variant == "convex":
        state.sum_model += a * (model / alpha - 0.5 * alpha * C_f * (1.0 + eps))
        lower = state.sum_af + state.sum_model
        E = a * a / A * C_f * (1.0 + eps)
    elif variant == "heavyball":
        if hb_phi is None:
            raise ValueError("heavy-ball bound needs Phi_t(v_t)")
        state.sum_model += a * 0.5 * alpha * C_f
        eta = eps * a * alpha * C_f
        lower = state.sum_af + hb_phi - state.sum_model - eta
        E = a * a / A * C_f * (1.0 + eps)
    elif variant == "pwlin":
        state.sum_model += a * (model / alpha - 0.5 * C_f - 0.5 * alpha * eps * C_f)
        lower = state.sum_af + state.sum_model
        E = a * a / (2.0 * A) * C_f * (1.0 + 2.0 * eps) + 0.5 * a * C_f
    else:
        raise ValueError(f"unknown certificate variant {variant!r}")
    L = lower / A
    if f_next is None:
        return L, float("nan"), E
    G = f_next - L
    state.prev_AG = A * G
    return L, G, E


def _check_start(problem):
    x = np.asarray(problem.start, dtype=float).copy()
    if not problem.C.contains(x, tol=1e-12):
        raise SolverError("start point is not in C")
    return x


def _combine(x, v, t, C):
    """``x_{t+1} = (A_{t-1}/A_t) x_t + (a_t/A_t) v_t``, kept inside the box."""
    a, A, _ = step_schedule(t)
    A_prev = t * (t + 1)
    xn = (A_prev / A) * x + (a / A) * v
    np.clip(xn, C.lb, C.ub, out=xn)
    return xn


def _h(problem, f):
    return f - problem.f_ref if problem.f_ref is not None else float("nan")


def _curvature(problem, config, curvature):
    if curvature is None:
        curvature = estimate_curvature(problem, config.curvature_samples, config.seed)
    return curvature


def _terminal(trace, problem, t, x, fx, pivots, inner, t0, config):
    trace.records.append(IterRecord(
        t, x.copy() if config.keep_iterates else None, fx, float("nan"), float("nan"),
        float("nan"), float("nan"), pivots, inner, time.perf_counter() - t0, False,
        h_t=_h(problem, fx),
    ))
    trace.x_final = x.copy()
    trace.f_final = fx


def run_asfw(problem, config: SolveConfig | None = None, curvature: CurvatureEstimate | None = None) -> Trace:
    """Relaxed ASFW: each step minimizes the current abs-linear model with AASM."""
    config = config or SolveConfig()
    x = _check_start(problem)
    tape, C = problem.tape, problem.C
    # vanilla ASFW solves every subproblem to local optimality
    max_inner = UNLIMITED if config.variant == "vanilla" else config.max_inner
    curvature = _curvature(problem, config, curvature)
    Cf = curvature.C_f_est
    cert = "convex" if problem.convex else "pwlin"
    trace = Trace(problem.name, config.variant, curvature=curvature, certificate=cert)
    adgt = ADGTState()
    t0 = time.perf_counter()
    pivots = 0
    form = abs_linearize(tape, x)
    fx = form.anchor_value
    trace.stop_reason = "max_outer"
    for t in range(config.max_outer):
        _, A, alpha = step_schedule(t)
        res = minimize_pl(form, C, x, alpha, max_inner)
        pivots += res.pivot_total
        model = res.model_value
        ghat = -model / alpha
        if res.exact:
            eps = 0.0
        elif config.audit_max_s and form.s <= config.audit_max_s and Cf > 0:
            best = _enumerated_min(form, C, alpha)
            eps = max(0.0, 2.0 * (model - best) / (alpha**2 * Cf))
        else:
            eps = float("nan")
            trace.certified = False
        if res.exact and ghat <= config.dual_gap_tol:
            L, _, E = adgt_update(adgt, t, fx, model, Cf, cert, eps)
            trace.records.append(IterRecord(
                t, x.copy() if config.keep_iterates else None, fx, ghat, L, float("nan"), E,
                pivots, res.inner_iters, time.perf_counter() - t0, res.exact, eps, _h(problem, fx),
            ))
            trace.stop_reason = "dual_gap"
            trace.x_final = x.copy()
            trace.f_final = fx
            return trace
        xn = _combine(x, res.v, t, C)
        form_n = abs_linearize(tape, xn)
        fn = form_n.anchor_value
        L, G, E = adgt_update(adgt, t, fx, model, Cf, cert, eps, f_next=fn)
        trace.records.append(IterRecord(
            t, x.copy() if config.keep_iterates else None, fx, ghat, L, G, E,
            pivots, res.inner_iters, time.perf_counter() - t0, res.exact, eps, _h(problem, fx),
        ))
        x, fx, form = xn, fn, form_n
    _terminal(trace, problem, config.max_outer, x, fx, pivots, 0, t0, config)
    return trace


def run_hb_asfw(problem, config: SolveConfig | None = None, curvature: CurvatureEstimate | None = None) -> Trace:
    """Heavy-ball ASFW: each step minimizes the weighted sum of all past models.

    With ``hb_window = k`` only the last ``k`` models enter the aggregate;
    the lower bound then covers the window only and the trace is marked as
    not certified. Stopping uses the single-model dual gap at ``x_t``,
    evaluated every ``hb_stop_every`` iterations.
    """
    config = config or SolveConfig(variant="heavyball")
    x = _check_start(problem)
    tape, C = problem.tape, problem.C
    curvature = _curvature(problem, config, curvature)
    Cf = curvature.C_f_est
    trace = Trace(problem.name, "heavyball", curvature=curvature, certificate="heavyball")
    if not problem.convex:
        trace.certified = False
    t0 = time.perf_counter()
    pivots = 0
    forms, fvals, weights, steps = [], [], [], []
    form = abs_linearize(tape, x)
    fx = form.anchor_value
    trace.stop_reason = "max_outer"
    for t in range(config.max_outer):
        a, A, alpha = step_schedule(t)
        forms.append(form)
        fvals.append(fx)
        weights.append(a)
        steps.append(alpha)
        lo = 0 if config.hb_window is None else max(0, len(forms) - config.hb_window)
        if lo > 0:
            trace.certified = False
        blk = slice(lo, None)
        s_total = sum(f.s for f in forms[blk])
        if s_total > config.hb_max_kinks:
            raise SolverError(
                f"aggregate model has {s_total} switching variables (cap {config.hb_max_kinks}); "
                "set hb_window to bound the number of stacked models"
            )
        ghat = float("nan")
        if len(forms[blk]) == 1:
            # a single block is the vanilla step model scaled by a_t / alpha_t
            res = minimize_pl(form, C, x, alpha, config.max_inner)
            phi_v = weights[-1] * res.model_value / alpha
            ghat = -res.model_value / alpha
            stop_exact = res.exact
        else:
            phi = aggregate(forms[blk], weights[blk], steps[blk], at=x)
            res = minimize_pl(phi, C, x, 1.0, config.max_inner)
            phi_v = res.model_value + phi.anchor_value
            stop_exact = False
            if config.hb_stop_every and t % config.hb_stop_every == 0:
                probe = minimize_pl(form, C, x, alpha, config.max_inner)
                pivots += probe.pivot_total
                ghat = -probe.model_value / alpha
                stop_exact = probe.exact
        pivots += res.pivot_total
        if res.exact:
            eps = 0.0
        else:
            eps = float("nan")
            trace.certified = False
        sum_af = float(np.dot(weights[blk], fvals[blk]))
        curv = float(sum(w * s for w, s in zip(weights[blk], steps[blk]))) * 0.5 * Cf
        eta = 0.0 if not math.isfinite(eps) else eps * a * alpha * Cf
        L = (sum_af + phi_v - curv - eta) / A
        E = a * a / A * Cf * (1.0 + (eps if math.isfinite(eps) else 0.0))
        if stop_exact and ghat <= config.dual_gap_tol:
            trace.records.append(IterRecord(
                t, x.copy() if config.keep_iterates else None, fx, ghat, L, float("nan"), E,
                pivots, res.inner_iters, time.perf_counter() - t0, res.exact, eps, _h(problem, fx),
            ))
            trace.stop_reason = "dual_gap"
            trace.x_final = x.copy()
            trace.f_final = fx
            return trace
        xn = _combine(x, res.v, t, C)
        form_n = abs_linearize(tape, xn)
        fn = form_n.anchor_value
        trace.records.append(IterRecord(
            t, x.copy() if config.keep_iterates else None, fx, ghat, L, fn - L, E,
            pivots, res.inner_iters, time.perf_counter() - t0, res.exact, eps, _h(problem, fx),
        ))
        x, fx, form = xn, fn, form_n
    _terminal(trace, problem, config.max_outer, x, fx, pivots, 0, t0, config)
    return trace


def _linear_min(g, C: Polytope):
    """``argmin_{v in C} g.v``; sign rule on a box (ties go to the lower bound)."""
    if not C.has_rows:
        return np.where(g < 0, C.ub, C.lb), 0
    st, status = solve_state(C.G, C.h, g, C.lb, C.ub, np.full(C.G.shape[0], np.inf))
    if status != "optimal":
        raise SolverError("linear minimization over C failed")
    return st.primal, st.pivots


def run_subgradient_fw(problem, config: SolveConfig | None = None) -> Trace:
    """Classical Frank-Wolfe driven by one subgradient per iterate.

    ``g_hat`` is the usual gap ``<g_t, x_t - v_t>``; no certificates are
    produced (``L_t`` and ``G_t`` stay NaN).
    """
    config = config or SolveConfig(variant="subgradient_fw")
    x = _check_start(problem)
    tape, C = problem.tape, problem.C
    trace = Trace(problem.name, "subgradient_fw", certified=False, certificate="none")
    t0 = time.perf_counter()
    pivots = 0
    fx = evaluate(tape, x).y
    trace.stop_reason = "max_outer"
    nan = float("nan")
    for t in range(config.max_outer):
        g = subgradient(tape, x)
        v, piv = _linear_min(g, C)
        pivots += piv
        gap = float(g @ (x - v))
        rec = IterRecord(t, x.copy() if config.keep_iterates else None, fx, gap, nan, nan, nan,
                         pivots, 0, time.perf_counter() - t0, True, h_t=_h(problem, fx))
        trace.records.append(rec)
        if gap <= config.dual_gap_tol:
            trace.stop_reason = "dual_gap"
            trace.x_final = x.copy()
            trace.f_final = fx
            return trace
        x = _combine(x, v, t, C)
        fx = evaluate(tape, x).y
    _terminal(trace, problem, config.max_outer, x, fx, pivots, 0, t0, config)
    return trace


def solve(problem, config: SolveConfig, curvature: CurvatureEstimate | None = None) -> Trace:
    """Dispatch on ``config.variant``."""
    if config.variant in ("vanilla", "relaxed"):
        return run_asfw(problem, config, curvature)
    if config.variant == "heavyball":
        return run_hb_asfw(problem, config, curvature)
    return run_subgradient_fw(problem, config)
