import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asfw.abstape import abs_linearize, absolute, affine, maximum, trace
from asfw.aasm import Polytope, local_opt_check, minimize_pl, next_signature
from asfw.plmodel import delta, signature, step_form
from oracles import enumerate_signatures, random_convex_tape


def example1_form():
    tape = trace(lambda x: maximum(x[0] ** 2, x[1] ** 2), 2)
    return abs_linearize(tape, np.array([-2.0, 1.0]))


def test_example1_global_minimum():
    form = example1_form()
    C = Polytope.box(-5, 5, 2)
    res = minimize_pl(form, C, form.anchor, 1.0, 100)
    ref, _ = enumerate_signatures(form, C, form.anchor, 1.0, with_zero=True)
    assert res.exact
    assert abs(res.model_value - ref) <= 1e-8
    assert C.contains(res.v)
    assert abs(res.model_value - delta(form, res.v - form.anchor)) <= 1e-10


def test_smooth_form_is_linear_minimization():
    tape = trace(lambda x: 3.0 * x[0] - 2.0 * x[1] + x[2] ** 2, 3)
    form = abs_linearize(tape, np.array([0.5, 0.0, 1.0]))
    C = Polytope(np.array([-1.0, -2.0, 0.0]), np.array([1.0, 2.0, 3.0]))
    res = minimize_pl(form, C, form.anchor, 1.0, 5)
    assert res.inner_iters == 1 and res.exact
    np.testing.assert_allclose(res.v, [-1.0, 2.0, 0.0])


def _kink_model(weights, anchor):
    n = len(weights)

    def fn(x):
        out = None
        for i, w in enumerate(weights):
            term = absolute(x[i]) + (-w) * x[i]
            out = term if out is None else out + term
        return out

    return abs_linearize(trace(fn, n), np.asarray(anchor, dtype=float))


def test_interior_optimum_is_locally_optimal():
    # z = x1 - 5 stays negative on the box, so no kink is ever active
    tape = trace(lambda x: absolute(x[0] + (-5.0)) + 0.5 * x[1], 2)
    form = abs_linearize(tape, np.array([-1.0, 0.0]))
    C = Polytope.box(-2, 2, 2)
    assert local_opt_check(form, C, np.array([2.0, -2.0]), np.array([-1], dtype=np.int8))
    res = minimize_pl(form, C, form.anchor, 1.0, 10)
    assert res.exact and res.inner_iters == 1
    np.testing.assert_allclose(res.v, [2.0, -2.0])


def test_descent_across_kink_detected():
    form = _kink_model([2.0], [-1.0])
    C = Polytope.box(-2, 2, 1)
    v = np.array([0.0])
    sig = np.array([-1], dtype=np.int8)
    assert not local_opt_check(form, C, v, sig)
    assert list(next_signature(form, C, v, sig)) == [1]


def test_better_of_two_flips_chosen():
    form = _kink_model([2.0, 3.0], [-1.0, -1.0])
    C = Polytope.box(-2, 2, 2)
    sig = np.array([-1, -1], dtype=np.int8)
    nxt = next_signature(form, C, np.zeros(2), sig)
    assert list(nxt) == [-1, 1]
    ref, _ = enumerate_signatures(form, C, form.anchor)
    res = minimize_pl(form, C, form.anchor, 1.0, 10)
    assert abs(res.model_value - ref) <= 1e-8


def test_equal_decreases_break_ties_by_index():
    w = [0.5, 2.0, 0.5, 0.5, 2.0, 0.5]
    form = _kink_model(w, -np.ones(6))
    C = Polytope.box(-2, 2, 6)
    sig = -np.ones(6, dtype=np.int8)
    nxt = next_signature(form, C, np.zeros(6), sig)
    expect = sig.copy()
    expect[1] = 1
    assert np.array_equal(nxt, expect)


def test_budget_respected_and_monotone():
    w = [2.0, 3.0, 4.0, 5.0]
    form = _kink_model(w, -np.ones(4))
    C = Polytope.box(-2, 2, 4)
    vals = []
    for k in range(1, 6):
        res = minimize_pl(form, C, form.anchor, 1.0, k)
        assert res.inner_iters <= k
        vals.append(res.model_value)
        assert res.exact == (k >= 5)
    assert all(b <= a for a, b in zip(vals, vals[1:]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_convex_models_match_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    tape = random_convex_tape(rng, n, 6)
    C = Polytope.box(-2, 2, n)
    x0 = rng.uniform(-2, 2, size=n)
    alpha = float(rng.choice([1.0, 0.5, 0.2]))
    form = abs_linearize(tape, x0)
    res = minimize_pl(form, C, x0, alpha, max(1, 3 ** form.s))
    ref, _ = enumerate_signatures(form, C, x0, alpha)
    assert res.exact
    assert C.contains(res.v)
    assert abs(res.model_value - ref) <= 1e-8 * (1 + abs(ref))


def test_anchor_on_kink_starts_with_zero_signature():
    tape = trace(lambda x: absolute(x[0]) + absolute(x[0] + (-1.0) * x[1]) + (-0.5) * x[1], 2)
    x0 = np.zeros(2)
    form = abs_linearize(tape, x0)
    g = step_form(form, 1.0)
    assert np.all(signature(g, x0) == 0)
    C = Polytope.box(-1, 1, 2)
    res = minimize_pl(form, C, x0, 1.0, 20)
    ref, _ = enumerate_signatures(form, C, x0, with_zero=True)
    assert res.exact and abs(res.model_value - ref) <= 1e-8


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_warm_probe_matches_cold_probe(seed):
    from asfw import aasm

    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    tape = random_convex_tape(rng, n, 6)
    x0 = rng.uniform(-2, 2, size=n)
    form = abs_linearize(tape, x0)
    if form.s == 0:
        return
    C = Polytope.box(-2, 2, n)
    g = step_form(form, 0.5)
    piece, status, _ = aasm._cold_piece(g, C, signature(g, x0))
    assert status == "optimal"
    for i in piece.active():
        for tau in aasm._targets(piece.sigma[i]):
            warm, _, same = aasm._flip(piece, int(i), tau, precheck=False)
            nsig = piece.sigma.copy()
            nsig[i] = tau
            cold, cstat, _ = aasm._cold_piece(g, C, nsig)
            assert warm is not None and cstat == "optimal"
            assert abs(warm.value - cold.value) <= 1e-8 * (1 + abs(cold.value))
            np.testing.assert_allclose(warm.zrows, cold.zrows, atol=1e-9)


def test_maxq_budget_two_is_no_better_than_exact():
    from asfw.problems import make_maxq

    prob = make_maxq(20)
    form = abs_linearize(prob.tape, prob.start)
    cheap = minimize_pl(form, prob.C, prob.start, 1.0, 2)
    exact = minimize_pl(form, prob.C, prob.start, 1.0, 100)
    assert prob.C.contains(cheap.v) and prob.C.contains(exact.v)
    assert exact.exact
    assert cheap.model_value >= exact.model_value - 1e-10
