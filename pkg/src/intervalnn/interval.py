"""Interval arithmetic on scalars and dense matrices.

Scalars are :class:`Interval`, matrices are :class:`IntervalMatrix`.  The
array kernels (``mul_endpoints``, ``matmul_endpoints``) work on raw endpoint
arrays and also report which endpoint pair produced each bound, so the
autograd layer can route gradients to exactly those endpoints.

Endpoint pairs are numbered ``0: lo*lo, 1: lo*hi, 2: hi*lo, 3: hi*hi``.
Ties resolve to the lowest pair index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Interval",
    "IntervalMatrix",
    "ACTIVATIONS",
    "PAIR_ENDPOINTS",
    "iv_add",
    "iv_sub",
    "iv_mul",
    "iv_dot",
    "iv_matmul",
    "iv_activate",
    "iv_hadamard",
    "mul_endpoints",
    "matmul_endpoints",
]

# pair index -> (endpoint of a, endpoint of b); 0 = lo, 1 = hi
PAIR_ENDPOINTS = ((0, 0), (0, 1), (1, 0), (1, 1))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _relu(x):
    return np.maximum(x, 0.0)


def _identity(x):
    return x


# All monotone nondecreasing, so [f(lo), f(hi)] is the exact image.
ACTIVATIONS = {
    "sigmoid": _sigmoid,
    "tanh": np.tanh,
    "relu": _relu,
    "identity": _identity,
}


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[lo, hi]`` of reals."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError(f"interval endpoints must be finite, got [{lo}, {hi}]")
        if lo > hi:
            raise ValueError(f"invalid interval: lo={lo} > hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(x, x)

    @property
    def is_crisp(self) -> bool:
        return self.lo == self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def __contains__(self, x) -> bool:
        if isinstance(x, Interval):
            return self.lo <= x.lo and x.hi <= self.hi
        return self.lo <= x <= self.hi

    def __add__(self, other):
        return iv_add(self, _as_interval(other))

    __radd__ = __add__

    def __sub__(self, other):
        return iv_sub(self, _as_interval(other))

    def __rsub__(self, other):
        return iv_sub(_as_interval(other), self)

    def __mul__(self, other):
        return iv_mul(self, _as_interval(other))[0]

    __rmul__ = __mul__

    def __repr__(self):
        return f"[{self.lo!r}, {self.hi!r}]"


def _as_interval(x) -> Interval:
    if isinstance(x, Interval):
        return x
    return Interval.point(x)


def iv_add(a: Interval, b: Interval) -> Interval:
    return Interval(a.lo + b.lo, a.hi + b.hi)


def iv_sub(a: Interval, b: Interval) -> Interval:
    return Interval(a.lo - b.hi, a.hi - b.lo)


def iv_mul(a: Interval, b: Interval) -> tuple[Interval, int, int]:
    """Product of two intervals.

    Returns the product together with the endpoint-pair indices that attain
    the minimum and maximum.
    """
    s = (a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi)
    imin = min(range(4), key=s.__getitem__)
    imax = max(range(4), key=lambda i: (s[i], -i))
    return Interval(s[imin], s[imax]), imin, imax


def iv_dot(u: Sequence[Interval], v: Sequence[Interval]) -> Interval:
    """Interval dot product: sum of the per-term interval products.

    Exact (no overestimation) because each term is independent.
    """
    if len(u) != len(v):
        raise ValueError(f"length mismatch: {len(u)} vs {len(v)}")
    lo = 0.0
    hi = 0.0
    for a, b in zip(u, v):
        p = iv_mul(a, b)[0]
        lo += p.lo
        hi += p.hi
    return Interval(lo, hi)


@dataclass(frozen=True, eq=False)
class IntervalMatrix:
    """Interval matrix ``{X : lo <= X <= hi}`` (elementwise)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lo, dtype=np.float64)
        hi = np.array(self.hi, dtype=np.float64)
        if lo.shape != hi.shape:
            raise ValueError(f"shape mismatch: lo {lo.shape} vs hi {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("interval endpoints must be finite")
        if np.any(lo > hi):
            raise ValueError("invalid interval matrix: some lo > hi")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x) -> "IntervalMatrix":
        x = np.asarray(x, dtype=np.float64)
        return cls(x, x)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.lo.shape

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def __getitem__(self, idx) -> Interval | "IntervalMatrix":
        lo, hi = self.lo[idx], self.hi[idx]
        if np.ndim(lo) == 0:
            return Interval(lo, hi)
        return IntervalMatrix(lo, hi)

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all(self.lo <= x) and np.all(x <= self.hi))

    def __add__(self, other: "IntervalMatrix") -> "IntervalMatrix":
        return IntervalMatrix(self.lo + other.lo, self.hi + other.hi)

    def __sub__(self, other: "IntervalMatrix") -> "IntervalMatrix":
        return IntervalMatrix(self.lo - other.hi, self.hi - other.lo)

    def __matmul__(self, other: "IntervalMatrix") -> "IntervalMatrix":
        return iv_matmul(self, other)

    def __repr__(self):
        return f"IntervalMatrix(lo={self.lo!r}, hi={self.hi!r})"


def mul_endpoints(alo, ahi, blo, bhi):
    """Elementwise interval product on endpoint arrays (broadcasting).

    Returns ``(lo, hi, argmin, argmax)``; the index arrays hold the winning
    endpoint pair per element.
    """
    prods = np.stack(np.broadcast_arrays(alo * blo, alo * bhi, ahi * blo, ahi * bhi))
    imin = np.argmin(prods, axis=0)
    imax = np.argmax(prods, axis=0)
    lo = np.take_along_axis(prods, imin[None], axis=0)[0]
    hi = np.take_along_axis(prods, imax[None], axis=0)[0]
    return lo, hi, imin.astype(np.int8), imax.astype(np.int8)


def _chunk_rows(m: int, p: int, n: int, budget: int = 1 << 22) -> int:
    return max(1, budget // max(1, p * n))


def matmul_endpoints(alo, ahi, blo, bhi, anchor=None, base=None):
    """Interval matrix product ``[alo, ahi] @ [blo, bhi]`` on endpoint arrays.

    ``a`` has shape (m, p), ``b`` has shape (p, n).  Each output entry is the
    interval dot product of a row of ``a`` and a column of ``b``.

    ``anchor`` is an optional pair of crisp matrices ``(a_ref, b_ref)``.  When
    given, each bound is accumulated as ``a_ref @ b_ref + sum(term - a_ref*b_ref)``,
    which is the same value in exact arithmetic but collapses bitwise to
    ``a_ref @ b_ref`` when both operands are degenerate at the anchor.
    ``base`` optionally supplies ``a_ref @ b_ref`` precomputed (for instance
    by the crisp model, so the collapse matches its exact BLAS result).

    Returns ``(lo, hi, argmin, argmax)`` with index arrays of shape (m, p, n).
    """
    alo, ahi, blo, bhi = (np.asarray(t, dtype=np.float64) for t in (alo, ahi, blo, bhi))
    if alo.ndim != 2 or blo.ndim != 2 or alo.shape[1] != blo.shape[0]:
        raise ValueError(f"dimension mismatch: {alo.shape} @ {blo.shape}")
    m, p = alo.shape
    n = blo.shape[1]
    lo = np.empty((m, n))
    hi = np.empty((m, n))
    imin = np.empty((m, p, n), dtype=np.int8)
    imax = np.empty((m, p, n), dtype=np.int8)
    if anchor is not None:
        a_ref, b_ref = (np.asarray(t, dtype=np.float64) for t in anchor)
        base = a_ref @ b_ref if base is None else np.asarray(base, dtype=np.float64)
    step = _chunk_rows(m, p, n)
    for s in range(0, m, step):
        sl = slice(s, min(m, s + step))
        A0, A1 = alo[sl, :, None], ahi[sl, :, None]
        prods = np.stack([A0 * blo, A0 * bhi, A1 * blo, A1 * bhi])
        mn = np.argmin(prods, axis=0)
        mx = np.argmax(prods, axis=0)
        tlo = np.take_along_axis(prods, mn[None], axis=0)[0]
        thi = np.take_along_axis(prods, mx[None], axis=0)[0]
        if anchor is not None:
            ref = a_ref[sl, :, None] * b_ref
            lo[sl] = base[sl] + (tlo - ref).sum(axis=1)
            hi[sl] = base[sl] + (thi - ref).sum(axis=1)
        else:
            lo[sl] = tlo.sum(axis=1)
            hi[sl] = thi.sum(axis=1)
        imin[sl] = mn
        imax[sl] = mx
    return lo, hi, imin, imax


def iv_matmul(A: IntervalMatrix, B: IntervalMatrix) -> IntervalMatrix:
    if A.lo.ndim != 2 or B.lo.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {B.shape}")
    lo, hi, _, _ = matmul_endpoints(A.lo, A.hi, B.lo, B.hi)
    return IntervalMatrix(lo, hi)


def iv_hadamard(a: IntervalMatrix, b: IntervalMatrix) -> IntervalMatrix:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    lo, hi, _, _ = mul_endpoints(a.lo, a.hi, b.lo, b.hi)
    return IntervalMatrix(lo, hi)


def iv_activate(x: IntervalMatrix, kind: str) -> IntervalMatrix:
    try:
        f = ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(ACTIVATIONS)}") from None
    return IntervalMatrix(f(x.lo), f(x.hi))
