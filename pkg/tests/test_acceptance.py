"""Acceptance criteria 1 to 11, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed together at
the end of the session (see ``conftest.py``). The long benchmark runs are
cached so that later criteria reuse them.
"""

import functools
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from asfw.aasm import Polytope, minimize_pl
from asfw.abstape import abs_linearize
from asfw.problems import lasso_report, make_problem
from asfw.solver import UNLIMITED, SolveConfig, estimate_curvature, run_asfw, run_hb_asfw, solve
from conftest import ACCEPTANCE
from oracles import enumerate_signatures, random_convex_tape, wong2_minimum

pytestmark = pytest.mark.acceptance

HERE = os.path.dirname(__file__)

# problem, n, rho, solver settings
RUNS = {
    "maxq_inner100": ("maxq", 20, None, dict(max_inner=100, max_outer=50000)),
    "wong2_inner2": ("wong2", None, None, dict(max_inner=2, max_outer=5000)),
    "wong2_exact": ("wong2", None, None, dict(variant="vanilla", max_outer=5000)),
    "cb3i_inner2": ("cb3i", 500, None, dict(max_inner=2, max_outer=50)),
    "cb3i_exact": ("cb3i", 500, None, dict(variant="vanilla", max_outer=50)),
    "mifflin2_inner2": ("mifflin2", 200, None, dict(max_inner=2, max_outer=5000)),
    "mifflin2_inner10": ("mifflin2", 200, None, dict(max_inner=10, max_outer=5000)),
    "maxq_sgfw": ("maxq", 20, None, dict(variant="subgradient_fw", max_outer=20001)),
    "wong2_sgfw": ("wong2", None, None, dict(variant="subgradient_fw", max_outer=10001)),
    "lasso_rho0.1": ("lasso", None, 0.1, dict(max_inner=2, max_outer=50000)),
    "lasso_rho1": ("lasso", None, 1.0, dict(max_inner=2, max_outer=50000)),
    "lasso_rho10": ("lasso", None, 10.0, dict(max_inner=2, max_outer=50000)),
}


@functools.lru_cache(maxsize=None)
def run(key):
    """``(problem, trace, seconds)`` for one of RUNS, computed once."""
    name, n, rho, kw = RUNS[key]
    prob = make_problem(name, n, rho)
    t0 = time.perf_counter()
    tr = solve(prob, SolveConfig(keep_iterates=False, **kw))
    return prob, tr, time.perf_counter() - t0


@functools.lru_cache(maxsize=None)
def wong2_star():
    prob = make_problem("wong2")
    value, _ = wong2_minimum(prob.start, prob.C.lb, prob.C.ub)
    return value


def report(number, ok, detail):
    ACCEPTANCE[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def slope(t, y):
    """Least-squares slope of log y against log t over the positive entries."""
    keep = y > 0
    return float(np.polyfit(np.log(t[keep]), np.log(y[keep]), 1)[0])


def certificate_violations(prob, tr, f_ref):
    """Iterations where f(x_{t+1}) - f_ref exceeds G_t by more than 1e-8."""
    bad = 0
    for r, nxt in zip(tr.steps(), tr.records[1:]):
        if math.isfinite(r.G_t) and nxt.f_t - f_ref > r.G_t + 1e-8:
            bad += 1
    return bad


def rate_violations(tr):
    """Iterations ``t >= 1`` with G_t (t + 2) > 4 C_f (1 + eps) 1.05."""
    Cf = tr.curvature.C_f_est
    bad = 0
    for r in tr.steps():
        if r.t >= 1 and math.isfinite(r.G_t):
            eps = r.eps_hat if math.isfinite(r.eps_hat) else 0.0
            if r.G_t * (r.t + 2) > 4.0 * Cf * (1.0 + eps) * 1.05:
                bad += 1
    return bad


def test_criterion_01_maxq():
    prob, tr, secs = run("maxq_inner100")
    ok = tr.f_final <= 1e-5 and tr.iterations <= 50000 and secs <= 300.0
    assert report(1, ok, f"MAXQ(20) inner 100: f = {tr.f_final:.3e} after {tr.iterations} iterations in {secs:.0f} s")


def test_criterion_02_wong2():
    prob, tr, _ = run("wong2_inner2")
    err = abs(tr.f_final - 24.3062)
    ok = err <= 1e-3 and tr.iterations <= 5000
    assert report(2, ok, f"Wong 2 inner 2: f = {tr.f_final:.6f} (|f - 24.3062| = {err:.1e}) after {tr.iterations} iterations")


def test_criterion_03_cb3i():
    prob, tr, _ = run("cb3i_inner2")
    err = abs(tr.f_final - 998.0)
    ok = err <= 1e-3 and tr.iterations <= 50
    assert report(3, ok, f"CB3 I(500) inner 2: f = {tr.f_final:.9f} after {tr.iterations} iterations")


def test_criterion_04_mifflin2():
    _, a, _ = run("mifflin2_inner2")
    _, b, _ = run("mifflin2_inner10")
    errs = [abs(tr.f_final + 140.86) for tr in (a, b)]
    agree = abs(a.f_final - b.f_final)
    ok = max(errs) <= 1e-2 and agree <= 1e-3 and max(a.iterations, b.iterations) <= 5000
    assert report(4, ok, f"Mifflin 2(200): f = {a.f_final:.5f} / {b.f_final:.5f} (inner 2 / 10), "
                         f"difference {agree:.1e}, pivots {a.total_pivots} / {b.total_pivots}")


def test_criterion_05_rates():
    parts, ok = [], True
    for key, f_star in (("maxq_inner100", 0.0), ("wong2_inner2", None)):
        prob, tr, _ = run(key)
        rows = tr.steps()
        t = np.array([r.t for r in rows], float)
        g = np.array([r.g_hat for r in rows])
        f = np.array([r.f_t for r in rows])
        if f_star is None:
            # the tabulated 24.3062 is rounded; use a tight reference minimum
            f_star = min(wong2_star(), float(f.min()))
        sel = t >= 100
        s_dual = slope(t[sel], g[sel])
        s_primal = slope(t[sel], f[sel] - f_star)
        ok &= s_dual <= -0.9 and s_primal <= -1.0
        parts.append(f"{prob.name}: dual slope {s_dual:.2f}, primal slope {s_primal:.2f}")
    assert report(5, ok, "; ".join(parts))


def test_criterion_06_certificates():
    parts, ok = [], True
    for key in ("maxq_inner100", "wong2_inner2", "wong2_exact", "cb3i_inner2", "cb3i_exact"):
        prob, tr, _ = run(key)
        bad = certificate_violations(prob, tr, prob.f_ref)
        exact = all(r.exact for r in tr.steps())
        rate_bad = rate_violations(tr) if exact else 0
        ok &= bad == 0 and rate_bad == 0
        rate = f", rate bound violations {rate_bad}" if exact else ""
        parts.append(f"{key}: {bad} certificate violations{rate}")
    assert report(6, ok, "; ".join(parts))


def test_criterion_07_heavyball():
    prob = make_problem("maxq", 20)
    cur = estimate_curvature(prob, 256)
    hb = run_hb_asfw(prob, SolveConfig(variant="heavyball", max_outer=50, max_inner=100), cur)
    first_hb = run_hb_asfw(prob, SolveConfig(variant="heavyball", max_outer=1, max_inner=100), cur)
    first_va = run_asfw(prob, SolveConfig(variant="vanilla", max_outer=1), cur)
    same = np.array_equal(first_hb.x_final, first_va.x_final) and first_hb.records[0].g_hat == first_va.records[0].g_hat
    bad = certificate_violations(prob, hb, prob.f_ref)
    rate_bad = rate_violations(hb)
    ok = same and bad == 0 and rate_bad == 0 and hb.certified
    assert report(7, ok, f"HB-ASFW MAXQ(20), {hb.iterations} iterations: first step identical = {same}, "
                         f"certificate violations {bad}, rate bound violations {rate_bad}")


def random_instance(rng):
    n = int(rng.integers(1, 5))
    tape = random_convex_tape(rng, n, 6)
    lb = -rng.uniform(0.5, 3.0, n)
    ub = rng.uniform(0.5, 3.0, n)
    if rng.random() < 0.5:
        G = rng.normal(size=(1, n))
        C = Polytope(lb, ub, G=G, h=np.array([abs(float(rng.normal())) + 0.1]))
    else:
        C = Polytope(lb, ub)
    x0 = np.zeros(n)
    for _ in range(100):
        x0 = rng.uniform(lb, ub)
        if C.contains(x0):
            break
    else:
        x0 = np.zeros(n)
    return tape, C, x0, float(rng.choice([1.0, 0.5, 0.25]))


def test_criterion_08_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst, count, kinks = 0.0, 0, 0
    while count < 200:
        tape, C, x0, alpha = random_instance(rng)
        if tape.s > 6:
            continue
        form = abs_linearize(tape, x0)
        res = minimize_pl(form, C, x0, alpha, UNLIMITED)
        ref, _ = enumerate_signatures(form, C, x0, alpha)
        worst = max(worst, abs(res.model_value - ref) / (1.0 + abs(ref)))
        kinks += form.s
        count += 1
    secs = time.perf_counter() - t0
    ok = worst <= 1e-8 and secs <= 60.0
    assert report(8, ok, f"{count} random convex models ({kinks} kinks): worst relative error {worst:.1e} in {secs:.1f} s")


def test_criterion_09_subgradient_baseline():
    _, sg_maxq, _ = run("maxq_sgfw")
    _, sg_wong, _ = run("wong2_sgfw")
    _, asfw_maxq, _ = run("maxq_inner100")
    _, asfw_wong, _ = run("wong2_inner2")
    asfw_ok = asfw_maxq.f_final <= 1e-5 and abs(asfw_wong.f_final - 24.3062) <= 1e-3
    ok = sg_maxq.f_final > 1.0 and sg_wong.f_final > 30.0 and asfw_ok
    assert report(9, ok, f"subgradient FW: MAXQ(20) f = {sg_maxq.f_final:.4g} after {sg_maxq.iterations} (needs > 1), "
                         f"Wong 2 f = {sg_wong.f_final:.4f} after {sg_wong.iterations} (needs > 30); "
                         f"ASFW f = {asfw_maxq.f_final:.2e} / {asfw_wong.f_final:.5f}")


# iterations and simplex pivots of the reference LASSO runs
LASSO_TABLE = {0.1: (17692, 178381), 1.0: (19063, 192378), 10.0: (20976, 211394)}


def test_criterion_10_lasso():
    parts, ok = [], True
    for rho, (iters, pivots) in LASSO_TABLE.items():
        prob, tr, _ = run(f"lasso_rho{rho:g}")
        rep = lasso_report(prob, tr.x_final)
        within = iters / 10 <= tr.iterations <= iters * 10 and pivots / 10 <= tr.total_pivots <= pivots * 10
        ok &= abs(rep["intercept"] - 152.13348) <= 1e-3 and 2859.0 <= rep["mse"] <= 2879.0 and within
        parts.append(f"rho {rho:g}: intercept {rep['intercept']:.5f}, MSE {rep['mse']:.3f}, "
                     f"{tr.iterations} iterations, {tr.total_pivots} pivots")
    assert report(10, ok, "; ".join(parts))


PROPERTY_TESTS = [
    "test_abstape.py::test_delta_zero_and_anchor_agreement",
    "test_abstape.py::test_smooth_delta_matches_finite_differences",
    "test_abstape.py::test_subgradient_matches_finite_differences",
    "test_plmodel.py::test_convex_forms_are_sublinear_in_the_step",
    "test_plmodel.py::test_aggregate_matches_direct_sum",
    "test_lp.py::test_matches_vertex_enumeration",
    "test_lp.py::test_infeasibility_agrees_with_oracle",
    "test_aasm.py::test_random_convex_models_match_enumeration",
    "test_aasm.py::test_budget_respected_and_monotone",
    "test_solver.py::test_primal_progress_per_iteration",
    "test_solver.py::test_inexact_gap_lower_bound",
    "test_solver.py::test_telescoping_and_certificates",
    "test_solver.py::test_curvature_is_zero_on_piecewise_linear_tape",
    "test_solver.py::test_iterates_stay_feasible",
    "test_problems.py::test_midpoint_convexity",
    "test_cli.py::test_trace_is_deterministic",
    "test_cli.py::test_trace_and_summary_files",
]


def test_criterion_11_property_suites():
    ids = [os.path.join(HERE, p) for p in PROPERTY_TESTS]
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *ids],
                          capture_output=True, text=True, cwd=HERE)
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    assert report(11, proc.returncode == 0, f"{len(PROPERTY_TESTS)} property tests: {tail}")
