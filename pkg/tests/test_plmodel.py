import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asfw.abstape import abs_linearize, evaluate, maximum, trace
from asfw.plmodel import (
    AbsLinearForm,
    aggregate,
    delta,
    eval_pl,
    restrict_to_signature,
    signature,
    solve_z,
    step_form,
)
from asfw.problems import make_cb3i, make_maxq, make_wong2
from oracles import random_convex_tape


def example1_form():
    tape = trace(lambda x: maximum(x[0] ** 2, x[1] ** 2), 2)
    return abs_linearize(tape, np.array([-2.0, 1.0]))


def random_form(rng, n, s):
    """Dense random form with nonzero strictly lower triangular M and L."""
    return AbsLinearForm(
        anchor=rng.normal(size=n), anchor_value=0.0, a=rng.normal(size=n), b=rng.normal(size=s),
        c=rng.normal(size=s), d=float(rng.normal()), Z=rng.normal(size=(s, n)),
        M=np.tril(rng.normal(size=(s, s)), -1), L=np.tril(rng.normal(size=(s, s)), -1),
    )


def test_solve_z_example1():
    form = example1_form()
    np.testing.assert_allclose(solve_z(form, [-2.0, 1.0]), [3.0])


def test_solve_z_decoupled():
    rng = np.random.default_rng(0)
    form = random_form(rng, 3, 4)
    form.M[:] = 0.0
    form.L[:] = 0.0
    x = rng.normal(size=3)
    np.testing.assert_allclose(solve_z(form, x), form.c + form.Z @ x)


def test_solve_z_satisfies_fixed_point():
    rng = np.random.default_rng(1)
    form = random_form(rng, 3, 6)
    x = rng.normal(size=3)
    z = solve_z(form, x)
    np.testing.assert_allclose(z, form.c + form.Z @ x + form.M @ z + form.L @ np.abs(z), atol=1e-12)


def test_eval_pl_example1():
    form = example1_form()
    assert eval_pl(form, [-1.0, 1.0]) == pytest.approx(1.0)
    assert eval_pl(form, [-2.0, 1.0]) == 4.0
    # model error at the origin: f(0) = 0 but the model gives -1
    assert eval_pl(form, [0.0, 0.0]) == pytest.approx(-1.0)


def test_delta_example1():
    form = example1_form()
    assert delta(form, np.zeros(2)) == 0.0
    assert delta(form, np.array([1.0, 0.0])) == pytest.approx(-3.0)


def test_signature_example1():
    form = example1_form()
    assert signature(form, [-2.0, 1.0]).tolist() == [1]
    # the model kink is the line 3 - 4 dx1 - 2 dx2 = 0 through (-1.25, 1)
    assert signature(form, [-1.25, 1.0]).tolist() == [0]
    sig = signature(form, [0.0, 2.0])
    assert sig.tolist() == [int(np.sign(solve_z(form, [0.0, 2.0])[0]))] == [-1]


def test_signature_entries_in_range():
    rng = np.random.default_rng(2)
    form = random_form(rng, 2, 5)
    for _ in range(20):
        assert set(signature(form, rng.normal(size=2)).tolist()) <= {-1, 0, 1}


def test_eval_pl_identity_with_delta():
    rng = np.random.default_rng(3)
    form = random_form(rng, 3, 5)
    form.anchor_value = eval_pl(form, form.anchor)
    for _ in range(20):
        x = rng.normal(size=3)
        ref = form.anchor_value + delta(form, x - form.anchor)
        assert abs(eval_pl(form, x) - ref) <= 1e-12 * (1 + abs(ref))


def _piece_points(rng, form, sigma, count):
    """Random points whose signature agrees with sigma (rejection sampling)."""
    pts = []
    for _ in range(20000):
        x = rng.uniform(-3, 3, size=form.n)
        sig = signature(form, x)
        if np.array_equal(sig, sigma):
            pts.append(x)
            if len(pts) == count:
                break
    return pts


def test_restrict_matches_eval_on_piece_example1():
    form = example1_form()
    rng = np.random.default_rng(4)
    piece = restrict_to_signature(form, [1])
    pts = _piece_points(rng, form, np.array([1]), 100)
    assert len(pts) == 100
    for x in pts:
        assert piece.contains(x)
        assert abs(piece.objective(x) - eval_pl(form, x)) <= 1e-10


def test_restrict_matches_eval_on_every_piece():
    rng = np.random.default_rng(5)
    form = random_form(rng, 2, 3)
    for sig in itertools.product((-1, 1), repeat=3):
        sig = np.array(sig)
        piece = restrict_to_signature(form, sig)
        for x in _piece_points(rng, form, sig, 30):
            assert piece.contains(x)
            assert abs(piece.objective(x) - eval_pl(form, x)) <= 1e-10


def test_zero_signature_gives_equality_rows():
    form = example1_form()
    piece = restrict_to_signature(form, [0])
    assert piece.equality.tolist() == [True]
    x = np.array([-1.25, 1.0])
    assert piece.contains(x)
    assert not piece.contains(np.array([0.7, 0.7]))
    assert abs(piece.objective(x) - eval_pl(form, x)) <= 1e-12


def test_smooth_piece():
    tape = trace(lambda x: 2.0 * x[0] - x[1] + 1.0, 2)
    form = abs_linearize(tape, np.zeros(2))
    piece = restrict_to_signature(form, [])
    assert piece.rows.shape == (0, 2)
    np.testing.assert_allclose(piece.grad, form.a)
    assert piece.offset == form.d


@pytest.mark.parametrize("make", [lambda: make_maxq(8), make_wong2, lambda: make_cb3i(5)], ids=["maxq", "wong2", "cb3i"])
def test_convex_forms_are_sublinear_in_the_step(make):
    prob = make()
    rng = np.random.default_rng(6)
    for _ in range(10):
        x0 = rng.uniform(prob.C.lb, prob.C.ub)
        form = abs_linearize(prob.tape, x0)
        for _ in range(10):
            dx = rng.uniform(prob.C.lb, prob.C.ub) - x0
            alpha = rng.uniform()
            assert delta(form, alpha * dx) <= alpha * delta(form, dx) + 1e-10 * (1 + abs(form.anchor_value))


def test_step_form_is_scaled_delta():
    rng = np.random.default_rng(7)
    form = example1_form()
    g = step_form(form, 0.3)
    assert g.anchor_value == 0.0
    for _ in range(20):
        v = rng.uniform(-5, 5, size=2)
        assert abs(eval_pl(g, v) - delta(form, 0.3 * (v - form.anchor))) <= 1e-12


def test_aggregate_single_form():
    rng = np.random.default_rng(8)
    form = example1_form()
    phi = aggregate([form], [2.0], [0.4])
    for _ in range(100):
        v = rng.uniform(-5, 5, size=2)
        assert abs(eval_pl(phi, v) - 2.0 / 0.4 * delta(form, 0.4 * (v - form.anchor))) <= 1e-10


def test_aggregate_two_example1_copies():
    rng = np.random.default_rng(9)
    tape = trace(lambda x: maximum(x[0] ** 2, x[1] ** 2), 2)
    f1 = abs_linearize(tape, np.array([-2.0, 1.0]))
    f2 = abs_linearize(tape, np.array([0.5, 1.5]))
    phi = aggregate([f1, f2], [2.0, 4.0], [1.0, 2.0 / 3.0])
    assert not np.triu(phi.L).any() and not np.triu(phi.M).any()
    for _ in range(100):
        v = rng.uniform(-5, 5, size=2)
        ref = 2.0 * delta(f1, v - f1.anchor) + 4.0 / (2.0 / 3.0) * delta(f2, 2.0 / 3.0 * (v - f2.anchor))
        assert abs(eval_pl(phi, v) - ref) <= 1e-10 * (1 + abs(ref))
    assert phi.anchor_value == eval_pl(phi, f2.anchor)


def test_aggregate_smooth_forms_is_affine():
    tape = trace(lambda x: x[0] ** 2 + 3.0 * x[0] * x[1], 2)
    anchors = [np.array([1.0, 0.0]), np.array([0.5, -1.0]), np.array([-0.3, 0.2])]
    forms = [abs_linearize(tape, x) for x in anchors]
    weights, steps = [2.0, 4.0, 6.0], [1.0, 2 / 3, 0.5]
    phi = aggregate(forms, weights, steps)
    assert phi.s == 0
    grad = sum(w * np.array([2 * x[0] + 3 * x[1], 3 * x[0]]) for w, x in zip(weights, anchors))
    np.testing.assert_allclose(phi.a, grad, rtol=1e-12)
    v = np.array([0.4, 0.9])
    ref = sum(w * np.array([2 * x[0] + 3 * x[1], 3 * x[0]]) @ (v - x) for w, x in zip(weights, anchors))
    assert eval_pl(phi, v) == pytest.approx(ref, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_aggregate_matches_direct_sum(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    tape = random_convex_tape(rng, n, 4)
    k = int(rng.integers(1, 4))
    forms = [abs_linearize(tape, rng.uniform(-1, 1, size=n)) for _ in range(k)]
    weights = [2.0 * t + 2.0 for t in range(k)]
    steps = [2.0 / (t + 2.0) for t in range(k)]
    phi = aggregate(forms, weights, steps)
    assert phi.s == sum(f.s for f in forms)
    for _ in range(10):
        v = rng.uniform(-1, 1, size=n)
        ref = sum(w * delta(f, a * (v - f.anchor)) / a for f, w, a in zip(forms, weights, steps))
        assert abs(eval_pl(phi, v) - ref) <= 1e-10 * (1 + abs(ref))


def test_aggregate_errors():
    form = example1_form()
    other = abs_linearize(trace(lambda x: x[0] * 2.0, 1), np.zeros(1))
    with pytest.raises(ValueError):
        aggregate([form, other], [1.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        aggregate([form], [0.0], [1.0])
    with pytest.raises(ValueError):
        aggregate([], [], [])


def test_form_rejects_upper_triangular_L():
    rng = np.random.default_rng(10)
    form = random_form(rng, 2, 3)
    with pytest.raises(ValueError):
        AbsLinearForm(form.anchor, 0.0, form.a, form.b, form.c, form.d, form.Z, form.M, form.L.T)


def test_model_reproduces_switching_values_at_anchor():
    prob = make_wong2()
    form = abs_linearize(prob.tape, prob.start)
    np.testing.assert_allclose(solve_z(form, prob.start), evaluate(prob.tape, prob.start).z, rtol=1e-12, atol=1e-12)
