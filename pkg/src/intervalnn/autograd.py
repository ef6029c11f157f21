"""Tape-based reverse-mode differentiation over numpy arrays.

Every primitive works on plain arrays too: when none of its arguments is a
:class:`Var` it just returns the numpy result and records nothing.  Model
code is therefore written once and runs either on a tape (training) or
directly on arrays (inference).

    >>> tape = Tape()
    >>> w = tape.var(np.array(5.0), name="w")
    >>> loss = square(w - 3.0)
    >>> backward(tape, loss)["w"]
    array(4.)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .interval import ACTIVATIONS, PAIR_ENDPOINTS, matmul_endpoints, mul_endpoints

__all__ = [
    "Tape",
    "Var",
    "backward",
    "value_of",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "transpose",
    "sigmoid",
    "tanh",
    "relu",
    "abs_",
    "square",
    "sum_",
    "mean",
    "reshape",
    "getitem",
    "concat",
    "stack",
    "activate",
    "interval_mul",
    "interval_matmul",
]


class Primitive:
    """One differentiable op: ``forward`` returns ``(out, ctx)``,
    ``backward`` maps the output gradient to per-input gradients."""

    name = "primitive"

    def forward(self, *vals):
        raise NotImplementedError

    def backward(self, ctx, g, vals):
        raise NotImplementedError


@dataclass
class Node:
    prim: Primitive
    inputs: tuple
    out: "Var"
    ctx: Any


@dataclass
class Tape:
    """Ordered record of primitive applications (inputs precede outputs)."""

    nodes: list = field(default_factory=list)
    leaves: dict = field(default_factory=dict)
    _count: int = 0

    def var(self, value, name: str | None = None) -> "Var":
        v = Var(np.asarray(value, dtype=np.float64), self, self._next())
        if name is not None:
            if name in self.leaves:
                raise ValueError(f"duplicate leaf name {name!r}")
            self.leaves[name] = v
        return v

    def _next(self) -> int:
        self._count += 1
        return self._count - 1

    def replay(self) -> dict[int, np.ndarray]:
        """Re-run every recorded forward from the leaf values.

        Returns the recomputed value of each node output keyed by var index.
        """
        vals: dict[int, np.ndarray] = {}

        def lookup(x):
            if isinstance(x, Var):
                return vals.get(x.index, x.value)
            return x

        for node in self.nodes:
            out, _ = node.prim.forward(*(lookup(x) for x in node.inputs))
            vals[node.out.index] = out
        return vals


class Var:
    __slots__ = ("value", "tape", "index")
    __array_priority__ = 1000

    def __init__(self, value: np.ndarray, tape: Tape, index: int):
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __repr__(self):
        return f"Var(#{self.index}, shape={self.value.shape})"


def value_of(x):
    return x.value if isinstance(x, Var) else x


def _apply(prim: Primitive, *args):
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise ValueError("cannot mix variables from different tapes")
    vals = tuple(value_of(a) for a in args)
    out, ctx = prim.forward(*vals)
    if tape is None:
        return out
    v = Var(out, tape, tape._next())
    tape.nodes.append(Node(prim, args, v, ctx))
    return v


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


def _shape(v):
    return np.shape(v)


class _Add(Primitive):
    name = "add"

    def forward(self, a, b):
        return a + b, None

    def backward(self, ctx, g, vals):
        a, b = vals
        return _unbroadcast(g, _shape(a)), _unbroadcast(g, _shape(b))


class _Sub(Primitive):
    name = "sub"

    def forward(self, a, b):
        return a - b, None

    def backward(self, ctx, g, vals):
        a, b = vals
        return _unbroadcast(g, _shape(a)), _unbroadcast(-g, _shape(b))


class _Mul(Primitive):
    name = "mul"

    def forward(self, a, b):
        return a * b, None

    def backward(self, ctx, g, vals):
        a, b = vals
        return _unbroadcast(g * b, _shape(a)), _unbroadcast(g * a, _shape(b))


class _Neg(Primitive):
    name = "neg"

    def forward(self, a):
        return -a, None

    def backward(self, ctx, g, vals):
        return (-g,)


class _MatMul(Primitive):
    name = "matmul"

    def forward(self, a, b):
        return a @ b, None

    def backward(self, ctx, g, vals):
        a, b = vals
        return g @ np.swapaxes(b, -1, -2), np.swapaxes(a, -1, -2) @ g


class _Transpose(Primitive):
    name = "transpose"

    def forward(self, a):
        return np.swapaxes(a, -1, -2), None

    def backward(self, ctx, g, vals):
        return (np.swapaxes(g, -1, -2),)


class _Unary(Primitive):
    def __init__(self, name: str, f: Callable, df: Callable):
        self.name = name
        self._f = f
        self._df = df

    def forward(self, a):
        out = self._f(a)
        return out, out

    def backward(self, ctx, g, vals):
        return (g * self._df(vals[0], ctx),)


_SIGMOID = _Unary("sigmoid", ACTIVATIONS["sigmoid"], lambda x, y: y * (1.0 - y))
_TANH = _Unary("tanh", np.tanh, lambda x, y: 1.0 - y * y)
# subgradient 0 at the kink for both
_RELU = _Unary("relu", ACTIVATIONS["relu"], lambda x, y: (x > 0).astype(np.float64))
_ABS = _Unary("abs", np.abs, lambda x, y: np.sign(x))
_SQUARE = _Unary("square", np.square, lambda x, y: 2.0 * x)
_IDENTITY = _Unary("identity", lambda x: x, lambda x, y: np.ones_like(x))

_ACT_PRIMS = {"sigmoid": _SIGMOID, "tanh": _TANH, "relu": _RELU, "identity": _IDENTITY}


class _Sum(Primitive):
    name = "sum"

    def __init__(self, axis=None):
        self.axis = axis

    def forward(self, a):
        return np.sum(a, axis=self.axis), None

    def backward(self, ctx, g, vals):
        shape = _shape(vals[0])
        if self.axis is not None:
            g = np.expand_dims(g, self.axis)
        return (np.broadcast_to(g, shape).copy(),)


class _Mean(_Sum):
    name = "mean"

    def forward(self, a):
        return np.mean(a, axis=self.axis), None

    def backward(self, ctx, g, vals):
        (gs,) = super().backward(ctx, g, vals)
        a = vals[0]
        n = np.size(a) if self.axis is None else np.prod([np.shape(a)[i] for i in np.atleast_1d(self.axis)])
        return (gs / n,)


class _Reshape(Primitive):
    name = "reshape"

    def __init__(self, shape):
        self.shape = shape

    def forward(self, a):
        return np.reshape(a, self.shape), None

    def backward(self, ctx, g, vals):
        return (np.reshape(g, _shape(vals[0])),)


class _GetItem(Primitive):
    name = "getitem"

    def __init__(self, idx):
        self.idx = idx

    def forward(self, a):
        return a[self.idx], None

    def backward(self, ctx, g, vals):
        out = np.zeros(_shape(vals[0]))
        idx = self.idx if isinstance(self.idx, tuple) else (self.idx,)
        if all(isinstance(i, (slice, int, type(Ellipsis))) for i in idx):
            out[self.idx] += g
        else:
            np.add.at(out, self.idx, g)
        return (out,)


class _Concat(Primitive):
    name = "concat"

    def __init__(self, axis):
        self.axis = axis

    def forward(self, *parts):
        return np.concatenate(parts, axis=self.axis), None

    def backward(self, ctx, g, vals):
        sizes = [np.shape(v)[self.axis] for v in vals]
        return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=self.axis))


class _Stack(Primitive):
    name = "stack"

    def __init__(self, axis):
        self.axis = axis

    def forward(self, *parts):
        return np.stack(parts, axis=self.axis), None

    def backward(self, ctx, g, vals):
        return tuple(np.moveaxis(g, self.axis, 0))


class _IntervalMul(Primitive):
    """Elementwise interval product; output is ``stack([lo, hi])``."""

    name = "interval_mul"

    def forward(self, alo, ahi, blo, bhi):
        lo, hi, imin, imax = mul_endpoints(alo, ahi, blo, bhi)
        return np.stack([lo, hi]), (imin, imax)

    def backward(self, ctx, g, vals):
        alo, ahi, blo, bhi = vals
        a_end = np.broadcast_arrays(alo, ahi, *vals[2:])[:2]
        b_end = np.broadcast_arrays(blo, bhi, *vals[:2])[:2]
        ga = [np.zeros(a_end[0].shape), np.zeros(a_end[0].shape)]
        gb = [np.zeros(b_end[0].shape), np.zeros(b_end[0].shape)]
        for sel, gk in zip(ctx, g):
            for q, (ea, eb) in enumerate(PAIR_ENDPOINTS):
                m = gk * (sel == q)
                ga[ea] += m * b_end[eb]
                gb[eb] += m * a_end[ea]
        return (
            _unbroadcast(ga[0], _shape(alo)),
            _unbroadcast(ga[1], _shape(ahi)),
            _unbroadcast(gb[0], _shape(blo)),
            _unbroadcast(gb[1], _shape(bhi)),
        )


class _IntervalMatMul(Primitive):
    """Interval matrix product; output is ``stack([lo, hi])``.

    Inputs after the first four are crisp anchors and an optional
    precomputed anchor product (no gradient), used only to make the
    degenerate case collapse bitwise onto the crisp product.
    """

    name = "interval_matmul"

    def forward(self, alo, ahi, blo, bhi, a_ref=None, b_ref=None, base=None):
        anchor = None if a_ref is None else (a_ref, b_ref)
        lo, hi, imin, imax = matmul_endpoints(alo, ahi, blo, bhi, anchor=anchor, base=base)
        return np.stack([lo, hi]), (imin, imax)

    def backward(self, ctx, g, vals):
        alo, ahi, blo, bhi = (np.asarray(v, dtype=np.float64) for v in vals[:4])
        a_end, b_end = (alo, ahi), (blo, bhi)
        ga = [np.zeros(alo.shape), np.zeros(alo.shape)]
        gb = [np.zeros(blo.shape), np.zeros(blo.shape)]
        m, p = alo.shape
        n = blo.shape[1]
        step = max(1, (1 << 21) // max(1, p * n))
        for sel, gk in zip(ctx, g):
            for s in range(0, m, step):
                sl = slice(s, min(m, s + step))
                for q, (ea, eb) in enumerate(PAIR_ENDPOINTS):
                    mask = sel[sl] == q
                    if not mask.any():
                        continue
                    w = mask * gk[sl, None, :]  # (m, p, n)
                    ga[ea][sl] += np.einsum("mpn,pn->mp", w, b_end[eb])
                    gb[eb] += np.einsum("mpn,mp->pn", w, a_end[ea][sl])
        grads = (ga[0], ga[1], gb[0], gb[1])
        return grads + (None,) * (len(vals) - 4)


def add(a, b):
    return _apply(_Add(), a, b)


def sub(a, b):
    return _apply(_Sub(), a, b)


def mul(a, b):
    return _apply(_Mul(), a, b)


def neg(a):
    return _apply(_Neg(), a)


def matmul(a, b):
    return _apply(_MatMul(), a, b)


def transpose(a):
    return _apply(_Transpose(), a)


def sigmoid(a):
    return _apply(_SIGMOID, a)


def tanh(a):
    return _apply(_TANH, a)


def relu(a):
    return _apply(_RELU, a)


def abs_(a):
    return _apply(_ABS, a)


def square(a):
    return _apply(_SQUARE, a)


def activate(a, kind: str):
    try:
        prim = _ACT_PRIMS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    if kind == "identity":
        return a
    return _apply(prim, a)


def sum_(a, axis=None):
    return _apply(_Sum(axis), a)


def mean(a, axis=None):
    return _apply(_Mean(axis), a)


def reshape(a, shape):
    return _apply(_Reshape(shape), a)


def getitem(a, idx):
    return _apply(_GetItem(idx), a)


def concat(parts, axis=-1):
    return _apply(_Concat(axis), *parts)


def stack(parts, axis=0):
    return _apply(_Stack(axis), *parts)


def interval_mul(alo, ahi, blo, bhi):
    """Elementwise interval product, returns ``(lo, hi)``."""
    out = _apply(_IntervalMul(), alo, ahi, blo, bhi)
    return out[0], out[1]


def interval_matmul(alo, ahi, blo, bhi, anchor=None, base=None):
    """Interval matrix product, returns ``(lo, hi)``.

    ``anchor`` is an optional crisp pair ``(a_ref, b_ref)`` and ``base`` an
    optional precomputed ``a_ref @ b_ref``, see
    :func:`intervalnn.interval.matmul_endpoints`.
    """
    extra = () if anchor is None else tuple(np.asarray(value_of(t)) for t in anchor)
    if base is not None:
        extra += (np.asarray(value_of(base)),)
    out = _apply(_IntervalMatMul(), alo, ahi, blo, bhi, *extra)
    return out[0], out[1]


def backward(tape: Tape, loss: Var, seed=1.0, wrt=None) -> dict[str, np.ndarray]:
    """Reverse sweep from a scalar ``loss``.

    Returns gradients for the named leaves (all of them unless ``wrt`` lists
    a subset).  Leaves the loss does not depend on get zeros.
    """
    if not isinstance(loss, Var) or loss.tape is not tape:
        raise ValueError("loss must be a variable recorded on this tape")
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    seed = np.asarray(seed, dtype=np.float64)
    if seed.size != 1:
        raise ValueError("seed must be a scalar")
    grads: dict[int, np.ndarray] = {loss.index: np.broadcast_to(seed, loss.value.shape).astype(np.float64)}
    for node in reversed(tape.nodes):
        g = grads.pop(node.out.index, None)
        if g is None:
            continue
        vals = tuple(value_of(x) for x in node.inputs)
        in_grads = node.prim.backward(node.ctx, g, vals)
        for x, gx in zip(node.inputs, in_grads):
            if gx is None or not isinstance(x, Var):
                continue
            prev = grads.get(x.index)
            grads[x.index] = gx if prev is None else prev + gx
    names = tape.leaves if wrt is None else {k: tape.leaves[k] for k in wrt}
    return {k: np.asarray(grads.get(v.index, np.zeros_like(v.value))).reshape(v.value.shape) for k, v in names.items()}
