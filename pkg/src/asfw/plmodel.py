"""Abs-linear forms and the operations on them.

An abs-linear form localized at an anchor ``x0`` is

    f_PL(x) = d + a.x + b.|z|
    z       = c + Z x + M z + L |z|

with ``M`` and ``L`` strictly lower triangular, so ``z`` follows from ``x``
by forward substitution. ``delta(form, dx)`` is the increment model
``f_PL(x0 + dx) - f(x0)``.

The output carries ``b`` against ``|z|``; a pre-abs ``z`` entering the output
is always expressible through ``a`` and ``Z`` (see :mod:`asfw.abstape`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "AbsLinearForm",
    "LinearPiece",
    "kink_tol",
    "solve_z",
    "eval_pl",
    "delta",
    "signature",
    "restrict_to_signature",
    "step_form",
    "aggregate",
]


def kink_tol(z):
    """Absolute tolerance below which a switching value counts as zero."""
    return 1e-12 * (1.0 + np.abs(z))


@dataclass
class AbsLinearForm:
    anchor: np.ndarray
    anchor_value: float
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float
    Z: np.ndarray
    M: np.ndarray
    L: np.ndarray
    # switching values at the anchor when known from the tape
    anchor_z: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        s, n = self.s, self.n
        self.Z = np.asarray(self.Z, dtype=float).reshape(s, n)
        self.M = np.asarray(self.M, dtype=float).reshape(s, s)
        self.L = np.asarray(self.L, dtype=float).reshape(s, s)
        if self.b.shape != (s,) or self.anchor.shape != (n,):
            raise ValueError("inconsistent form dimensions")
        if np.any(np.triu(self.M)) or np.any(np.triu(self.L)):
            raise ValueError("M and L must be strictly lower triangular")

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def s(self) -> int:
        return self.c.shape[0]

    @property
    def is_smooth(self) -> bool:
        return self.s == 0


@dataclass
class LinearPiece:
    """The model on the closure of one signature domain.

    ``objective(x) = grad.x + offset``; the kink rows read
    ``rows @ x + rhs >= 0`` (``== 0`` where ``equality``). ``zrows``/``zoff``
    give each switching variable as an affine function of ``x`` on the piece.
    """

    sigma: np.ndarray
    grad: np.ndarray
    offset: float
    zrows: np.ndarray
    zoff: np.ndarray

    @property
    def rows(self) -> np.ndarray:
        sg = np.where(self.sigma == 0, 1.0, self.sigma)
        return sg[:, None] * self.zrows

    @property
    def rhs(self) -> np.ndarray:
        sg = np.where(self.sigma == 0, 1.0, self.sigma)
        return sg * self.zoff

    @property
    def equality(self) -> np.ndarray:
        return self.sigma == 0

    def objective(self, x) -> float:
        return float(self.grad @ np.asarray(x, dtype=float) + self.offset)

    def contains(self, x, tol=1e-9) -> bool:
        r = self.rows @ np.asarray(x, dtype=float) + self.rhs
        eq = self.equality
        return bool(np.all(r[~eq] >= -tol) and np.all(np.abs(r[eq]) <= tol))


def _check_dim(form, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (form.n,):
        raise ValueError(f"expected vector of length {form.n}, got shape {x.shape}")
    return x


def solve_z(form: AbsLinearForm, x) -> np.ndarray:
    x = _check_dim(form, x)
    z = form.c + form.Z @ x
    if not (form.M.any() or form.L.any()):
        return z
    M, L = form.M, form.L
    for i in range(1, form.s):
        z[i] += M[i, :i] @ z[:i] + L[i, :i] @ np.abs(z[:i])
    return z


def eval_pl(form: AbsLinearForm, x) -> float:
    x = _check_dim(form, x)
    z = solve_z(form, x)
    return float(form.d + form.a @ x + form.b @ np.abs(z))


def delta(form: AbsLinearForm, dx) -> float:
    dx = _check_dim(form, dx)
    if not dx.any():
        return 0.0
    return eval_pl(form, form.anchor + dx) - form.anchor_value


def signature(form: AbsLinearForm, x) -> np.ndarray:
    z = solve_z(form, x)
    sig = np.sign(z).astype(np.int8)
    sig[np.abs(z) <= kink_tol(z)] = 0
    return sig


def restrict_to_signature(form: AbsLinearForm, sigma) -> LinearPiece:
    """Eliminate ``z`` on the closure of the domain of ``sigma``.

    With ``|z_j| = sigma_j z_j`` the recursion becomes linear,
    ``(I - M - L diag(sigma)) z = c + Z x``, and one unit-triangular solve
    gives every ``z_j`` as an affine function of ``x``.
    """
    sigma = np.asarray(sigma, dtype=float).ravel()
    s, n = form.s, form.n
    if sigma.shape != (s,):
        raise ValueError(f"signature must have {s} entries")
    if s == 0:
        return LinearPiece(sigma, form.a.copy(), float(form.d), np.zeros((0, n)), np.zeros(0))
    rhs = np.column_stack([form.Z, form.c])
    K = form.M + form.L * sigma[None, :]
    if K.any():
        sol = solve_triangular(np.eye(s) - K, rhs, lower=True, unit_diagonal=True, check_finite=False)
    else:
        sol = rhs
    zrows, zoff = sol[:, :n], sol[:, n]
    w = form.b * sigma
    grad = form.a + w @ zrows
    offset = float(form.d + w @ zoff)
    return LinearPiece(sigma, grad, offset, np.ascontiguousarray(zrows), zoff.copy())


def step_form(form: AbsLinearForm, alpha: float) -> AbsLinearForm:
    """Form of ``v -> delta(form, alpha (v - x0))``, anchored at ``x0`` with value 0."""
    alpha = float(alpha)
    x0 = form.anchor
    beta = 1.0 - alpha
    c = form.c + beta * (form.Z @ x0)
    d = form.d + beta * float(form.a @ x0) - form.anchor_value
    return AbsLinearForm(
        anchor=x0.copy(),
        anchor_value=0.0,
        a=alpha * form.a,
        b=form.b.copy(),
        c=c,
        d=d,
        Z=alpha * form.Z,
        M=form.M,
        L=form.L,
        anchor_z=form.anchor_z,
    )


def aggregate(
    forms: Sequence[AbsLinearForm],
    weights: Sequence[float],
    steps: Sequence[float],
    at=None,
) -> AbsLinearForm:
    """Stack weighted step models into one form representing

        Phi(v) = sum_i weights[i] * delta(forms[i], steps[i] (v - x_i)) / steps[i]

    where ``x_i`` is the anchor of ``forms[i]``. The result evaluates to
    ``Phi`` itself; its anchor is ``at`` (default: the last anchor) and its
    ``anchor_value`` is ``Phi(at)``.
    """
    if not forms:
        raise ValueError("need at least one form")
    if not (len(forms) == len(weights) == len(steps)):
        raise ValueError("forms, weights and steps differ in length")
    n = forms[0].n
    if any(f.n != n for f in forms):
        raise ValueError("dimension mismatch between forms")
    blocks = []
    for f, wt, al in zip(forms, weights, steps):
        if wt <= 0 or not 0 < al <= 1:
            raise ValueError("weights must be positive and steps in (0, 1]")
        g = step_form(f, al)
        scale = wt / al
        blocks.append((g, scale))
    s_tot = sum(g.s for g, _ in blocks)
    Z = np.zeros((s_tot, n))
    c = np.zeros(s_tot)
    b = np.zeros(s_tot)
    M = np.zeros((s_tot, s_tot))
    L = np.zeros((s_tot, s_tot))
    a = np.zeros(n)
    d = 0.0
    o = 0
    for g, scale in blocks:
        k = g.s
        Z[o:o + k] = g.Z
        c[o:o + k] = g.c
        M[o:o + k, o:o + k] = g.M
        L[o:o + k, o:o + k] = g.L
        b[o:o + k] = scale * g.b
        a += scale * g.a
        d += scale * g.d
        o += k
    at = forms[-1].anchor if at is None else np.asarray(at, dtype=float)
    phi = AbsLinearForm(anchor=at.copy(), anchor_value=0.0, a=a, b=b, c=c, d=d, Z=Z, M=M, L=L)
    phi.anchor_value = eval_pl(phi, at)
    return phi
