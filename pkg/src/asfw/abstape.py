"""Evaluation tapes for abs-smooth functions.

A :class:`Tape` is a straight-line program over a small set of smooth
elementals plus ``abs``. ``max2``/``min2`` are rewritten through ``abs`` when
the tape is built, so the only non-smooth primitive left on a finished tape
is ``abs``. Every ``abs`` node introduces one switching variable; its
argument (the pre-abs value) is what :func:`evaluate` reports in ``z``.

Tapes can be written by hand as a list of node tuples and passed to
:func:`build_tape`, or traced from ordinary Python code with :func:`trace`::

    tape = trace(lambda x: maximum(x[0] ** 2, x[1] ** 2), 2)

Linearization is forward mode with sparse tangents. Every abs output
``|z_i|`` is treated as an independent variable, so the smooth part of the
tape is linearized with respect to ``(x, |z|)``. Any use of a pre-abs value
``z_j`` is folded into ``Z`` and ``L`` by the chain rule, which means forms
coming off a tape always have ``M = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .plmodel import AbsLinearForm, kink_tol

__all__ = [
    "Tape",
    "EvalRecord",
    "TapeError",
    "TapeDomainError",
    "build_tape",
    "trace",
    "evaluate",
    "abs_linearize",
    "subgradient",
    "Var",
    "absolute",
    "maximum",
    "minimum",
    "exp",
    "square",
    "affine",
]

# op name -> (arity, has parameter). arity None means variadic.
_OPS = {
    "input": (0, True),
    "const": (0, True),
    "add": (2, False),
    "sub": (2, False),
    "mul": (2, False),
    "div": (2, False),
    "neg": (1, False),
    "square": (1, False),
    "exp": (1, False),
    "scale": (1, True),
    "abs": (1, False),
    "max2": (2, False),
    "min2": (2, False),
    "affine": (None, True),
}


class TapeError(ValueError):
    """Malformed program handed to :func:`build_tape`."""


class TapeDomainError(ArithmeticError):
    """An elemental failed during evaluation (division by zero, overflow)."""

    def __init__(self, node, op, msg):
        super().__init__(f"node {node} ({op}): {msg}")
        self.node = node
        self.op = op


@dataclass(frozen=True)
class Tape:
    """Immutable straight-line program in topological order.

    Nodes are tuples ``(op, args, param)``: ``args`` is a tuple of earlier
    node indices, ``param`` the constant attached to ``input`` (index),
    ``const`` (value), ``scale`` (factor) and ``affine`` (``(coeffs, offset)``).
    """

    input_dim: int
    nodes: tuple
    output_node: int
    switching_order: tuple

    @property
    def n(self) -> int:
        return self.input_dim

    @property
    def s(self) -> int:
        return len(self.switching_order)

    def __call__(self, x) -> float:
        return evaluate(self, x).y


@dataclass
class EvalRecord:
    y: float
    z: np.ndarray
    node_values: list


def build_tape(program: Sequence, input_dim: int, output: int | None = None) -> Tape:
    """Validate a node list and return a canonical :class:`Tape`.

    ``program`` is a sequence of ``(op, *args)`` tuples where args are node
    indices into the program, except for ``("input", i)``, ``("const", r)``,
    ``("scale", r, u)`` and ``("affine", coeffs, offset, u1, u2, ...)``.
    The last node is the output unless ``output`` says otherwise.

    ``max2``/``min2`` are expanded into ``abs`` form, so node indices of the
    returned tape differ from those of ``program``.
    """
    if input_dim < 1:
        raise TapeError("input_dim must be >= 1")
    if not program:
        raise TapeError("empty program")
    nodes: list = []
    remap: list[int] = []
    switching: list[int] = []

    def emit(op, args=(), param=None):
        nodes.append((op, tuple(args), param))
        if op == "abs":
            switching.append(len(nodes) - 1)
        return len(nodes) - 1

    for k, item in enumerate(program):
        if not item:
            raise TapeError(f"node {k}: empty entry")
        op = item[0]
        if op not in _OPS:
            raise TapeError(f"node {k}: unsupported elemental {op!r}")

        def ref(j):
            if not isinstance(j, (int, np.integer)) or j < 0 or j >= k:
                raise TapeError(f"node {k}: dangling node reference {j!r}")
            return remap[j]

        if op == "input":
            (i,) = item[1:]
            if not 0 <= i < input_dim:
                raise TapeError(f"node {k}: input index {i} out of range")
            remap.append(emit("input", (), int(i)))
        elif op == "const":
            remap.append(emit("const", (), float(item[1])))
        elif op == "scale":
            r, u = item[1:]
            remap.append(emit("scale", (ref(u),), float(r)))
        elif op == "affine":
            coeffs, offset, *args = item[1:]
            if len(coeffs) != len(args):
                raise TapeError(f"node {k}: affine needs one coefficient per argument")
            args = [ref(j) for j in args]
            remap.append(emit("affine", args, (tuple(float(c) for c in coeffs), float(offset))))
        elif op in ("max2", "min2"):
            if len(item) != 3:
                raise TapeError(f"node {k}: {op} takes two arguments")
            u, w = ref(item[1]), ref(item[2])
            # max(u,w) = (u + w + |u - w|)/2, min(u,w) = (u + w - |u - w|)/2
            diff = emit("sub", (u, w))
            a = emit("abs", (diff,))
            sign = 0.5 if op == "max2" else -0.5
            remap.append(emit("affine", (u, w, a), ((0.5, 0.5, sign), 0.0)))
        else:
            arity = _OPS[op][0]
            if len(item) - 1 != arity:
                raise TapeError(f"node {k}: {op} takes {arity} argument(s)")
            remap.append(emit(op, [ref(j) for j in item[1:]]))

    out = len(program) - 1 if output is None else output
    if not 0 <= out < len(program):
        raise TapeError(f"output node {out} out of range")
    return Tape(input_dim, tuple(nodes), remap[out], tuple(switching))


# ---------------------------------------------------------------------------
# tracing front end
# ---------------------------------------------------------------------------


class _Recorder:
    def __init__(self):
        self.program: list = []

    def push(self, *item) -> "Var":
        self.program.append(item)
        return Var(self, len(self.program) - 1)

    def lift(self, other) -> "Var":
        if isinstance(other, Var):
            if other.rec is not self:
                raise TapeError("mixing variables from different traces")
            return other
        return self.push("const", float(other))


class Var:
    """Handle to a node while tracing; supports the usual arithmetic."""

    __slots__ = ("rec", "idx")
    __array_priority__ = 1000

    def __init__(self, rec: _Recorder, idx: int):
        self.rec = rec
        self.idx = idx

    def _bin(self, op, other, swap=False):
        other = self.rec.lift(other)
        a, b = (other, self) if swap else (self, other)
        return self.rec.push(op, a.idx, b.idx)

    def __add__(self, o):
        if isinstance(o, (int, float)):
            return self.rec.push("affine", (1.0,), float(o), self.idx)
        return self._bin("add", o)

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, (int, float)):
            return self.rec.push("affine", (1.0,), -float(o), self.idx)
        return self._bin("sub", o)

    def __rsub__(self, o):
        if isinstance(o, (int, float)):
            return self.rec.push("affine", (-1.0,), float(o), self.idx)
        return self._bin("sub", o, swap=True)

    def __mul__(self, o):
        if isinstance(o, (int, float)):
            return self.rec.push("scale", float(o), self.idx)
        return self._bin("mul", o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, (int, float)):
            return self.rec.push("scale", 1.0 / float(o), self.idx)
        return self._bin("div", o)

    def __rtruediv__(self, o):
        return self._bin("div", o, swap=True)

    def __neg__(self):
        return self.rec.push("neg", self.idx)

    def __pow__(self, p):
        if p == 2:
            return square(self)
        if p == 4:
            return square(square(self))
        if p == 1:
            return self
        raise TapeError(f"only powers 1, 2 and 4 are taped, got {p}")

    def __abs__(self):
        return absolute(self)


def absolute(u: Var) -> Var:
    return u.rec.push("abs", u.idx)


def square(u: Var) -> Var:
    return u.rec.push("square", u.idx)


def exp(u: Var) -> Var:
    return u.rec.push("exp", u.idx)


def maximum(u, w) -> Var:
    rec = u.rec if isinstance(u, Var) else w.rec
    return rec.push("max2", rec.lift(u).idx, rec.lift(w).idx)


def minimum(u, w) -> Var:
    rec = u.rec if isinstance(u, Var) else w.rec
    return rec.push("min2", rec.lift(u).idx, rec.lift(w).idx)


def affine(coeffs: Sequence[float], offset: float, args: Sequence[Var]) -> Var:
    """``offset + sum(c * a)`` as a single node."""
    rec = args[0].rec
    return rec.push("affine", tuple(coeffs), offset, *[a.idx for a in args])


def trace(fn: Callable[[list], Var], input_dim: int) -> Tape:
    """Record ``fn`` applied to symbolic inputs and build its tape."""
    rec = _Recorder()
    xs = [rec.push("input", i) for i in range(input_dim)]
    out = rec.lift(fn(xs))
    return build_tape(rec.program, input_dim, output=out.idx)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _check_point(tape: Tape, x) -> list:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != tape.input_dim:
        raise ValueError(f"expected point of dimension {tape.input_dim}, got {x.shape[0]}")
    return x.tolist()


def _forward(tape: Tape, xs: list) -> list:
    vals = [0.0] * len(tape.nodes)
    for k, (op, args, p) in enumerate(tape.nodes):
        try:
            if op == "input":
                v = xs[p]
            elif op == "const":
                v = p
            elif op == "add":
                v = vals[args[0]] + vals[args[1]]
            elif op == "sub":
                v = vals[args[0]] - vals[args[1]]
            elif op == "mul":
                v = vals[args[0]] * vals[args[1]]
            elif op == "div":
                v = vals[args[0]] / vals[args[1]]
            elif op == "neg":
                v = -vals[args[0]]
            elif op == "square":
                u = vals[args[0]]
                v = u * u
            elif op == "exp":
                v = math.exp(vals[args[0]])
            elif op == "scale":
                v = p * vals[args[0]]
            elif op == "abs":
                v = abs(vals[args[0]])
            else:  # affine
                coeffs, v = p
                for c, j in zip(coeffs, args):
                    v += c * vals[j]
        except ZeroDivisionError:
            raise TapeDomainError(k, op, "division by zero") from None
        except OverflowError:
            raise TapeDomainError(k, op, "overflow") from None
        vals[k] = v
    return vals


def evaluate(tape: Tape, x) -> EvalRecord:
    """Function value, switching values and all node values at ``x``."""
    vals = _forward(tape, _check_point(tape, x))
    z = np.array([vals[tape.nodes[k][1][0]] for k in tape.switching_order], dtype=float)
    y = vals[tape.output_node]
    if not math.isfinite(y):
        raise TapeDomainError(tape.output_node, tape.nodes[tape.output_node][0], "non-finite value")
    return EvalRecord(y, z, vals)


# the user-facing name in the rest of the package
eval = evaluate  # noqa: A001


def _tangents(tape: Tape, vals: list, abs_rule):
    """Sparse forward sweep. ``abs_rule(i, k, t_arg)`` returns the tangent of abs node k."""
    tans: list = [None] * len(tape.nodes)
    sw_index = {k: i for i, k in enumerate(tape.switching_order)}
    for k, (op, args, p) in enumerate(tape.nodes):
        if op == "input":
            t = {p: 1.0}
        elif op == "const":
            t = {}
        elif op == "add" or op == "sub":
            t = dict(tans[args[0]])
            sgn = 1.0 if op == "add" else -1.0
            for key, c in tans[args[1]].items():
                t[key] = t.get(key, 0.0) + sgn * c
        elif op == "mul" or op == "div":
            u, w = vals[args[0]], vals[args[1]]
            if op == "mul":
                cu, cw = w, u
            else:
                cu, cw = 1.0 / w, -u / (w * w)
            t = {key: cu * c for key, c in tans[args[0]].items()}
            for key, c in tans[args[1]].items():
                t[key] = t.get(key, 0.0) + cw * c
        elif op == "neg":
            t = {key: -c for key, c in tans[args[0]].items()}
        elif op == "square":
            cu = 2.0 * vals[args[0]]
            t = {key: cu * c for key, c in tans[args[0]].items()}
        elif op == "exp":
            cu = vals[k]
            t = {key: cu * c for key, c in tans[args[0]].items()}
        elif op == "scale":
            t = {key: p * c for key, c in tans[args[0]].items()}
        elif op == "abs":
            t = abs_rule(sw_index[k], k, tans[args[0]])
        else:  # affine
            t = {}
            for cu, j in zip(p[0], args):
                for key, c in tans[j].items():
                    t[key] = t.get(key, 0.0) + cu * c
        tans[k] = t
    return tans


def abs_linearize(tape: Tape, anchor) -> AbsLinearForm:
    """Abs-linear form of ``tape`` localized at ``anchor``.

    Smooth nodes propagate tangents at the anchor values; an abs node starts
    a fresh coordinate for ``|z_i|`` so that its increment stays
    ``|z_i + dz_i| - |z_i|``. The constants ``c`` and ``d`` are set so the
    model reproduces the anchor's switching values and function value.
    """
    xs = _check_point(tape, anchor)
    vals = _forward(tape, xs)
    n, s = tape.input_dim, tape.s
    Z = np.zeros((s, n))
    L = np.zeros((s, s))
    zval = np.empty(s)

    def abs_rule(i, k, targ):
        for key, c in targ.items():
            if key < n:
                Z[i, key] += c
            else:
                L[i, key - n] += c
        zval[i] = vals[tape.nodes[k][1][0]]
        return {n + i: 1.0}

    tans = _tangents(tape, vals, abs_rule)
    a = np.zeros(n)
    b = np.zeros(s)
    for key, c in tans[tape.output_node].items():
        if key < n:
            a[key] += c
        else:
            b[key - n] += c
    x0 = np.asarray(xs)
    absz = np.abs(zval)
    y0 = vals[tape.output_node]
    if not math.isfinite(y0):
        raise TapeDomainError(tape.output_node, tape.nodes[tape.output_node][0], "non-finite value")
    c = zval - Z @ x0 - L @ absz
    d = y0 - a @ x0 - b @ absz
    return AbsLinearForm(
        anchor=x0,
        anchor_value=y0,
        a=a,
        b=b,
        c=c,
        d=float(d),
        Z=Z,
        M=np.zeros((s, s)),
        L=L,
        anchor_z=zval,
    )


def subgradient(tape: Tape, x) -> np.ndarray:
    """Chain-rule subgradient with ``d|u|/du = sign(u)`` and ``sign(0) = 0``."""
    xs = _check_point(tape, x)
    vals = _forward(tape, xs)

    def abs_rule(i, k, targ):
        u = vals[tape.nodes[k][1][0]]
        if abs(u) <= kink_tol(u):
            return {}
        sg = 1.0 if u > 0 else -1.0
        return {key: sg * c for key, c in targ.items()}

    tans = _tangents(tape, vals, abs_rule)
    g = np.zeros(tape.input_dim)
    for key, c in tans[tape.output_node].items():
        g[key] += c
    return g
