import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intervalnn.interval import (Interval, IntervalMatrix, iv_activate, iv_add, iv_dot, iv_hadamard, iv_matmul,
                                 iv_mul, iv_sub, matmul_endpoints, mul_endpoints)

from helpers import brute_dot

I = Interval


def test_constructor_rejects_reversed_and_nonfinite():
    with pytest.raises(ValueError):
        I(2.0, 1.0)
    with pytest.raises(ValueError):
        I(0.0, math.inf)
    with pytest.raises(ValueError):
        IntervalMatrix([[1.0, 2.0]], [[0.0, 3.0]])
    with pytest.raises(ValueError):
        IntervalMatrix([[1.0]], [[1.0, 2.0]])
    assert I(3.0, 3.0).is_crisp


@pytest.mark.parametrize("a,b,want", [
    ((1, 2), (3, 4), (4, 6)),
    ((0, 0), (-1, 1), (-1, 1)),
    ((-2, -1), (-3, -1), (-5, -2)),
])
def test_add(a, b, want):
    assert iv_add(I(*a), I(*b)) == I(*want)


@pytest.mark.parametrize("a,b,want", [
    ((1, 2), (0, 1), (0, 2)),
    ((1, 1), (1, 1), (0, 0)),
    ((-1, 1), (-1, 1), (-2, 2)),
])
def test_sub(a, b, want):
    assert iv_sub(I(*a), I(*b)) == I(*want)


@pytest.mark.parametrize("a,b,want", [
    ((-1, 2), (3, 4), (-4, 8)),
    ((2, 2), (3, 3), (6, 6)),
    ((-1, 1), (-1, 1), (-1, 1)),
])
def test_mul(a, b, want):
    assert iv_mul(I(*a), I(*b))[0] == I(*want)


def test_mul_records_selected_pairs_with_lowest_index_ties():
    # products: lo*lo=-3, lo*hi=-4, hi*lo=6, hi*hi=8
    _, imin, imax = iv_mul(I(-1, 2), I(3, 4))
    assert (imin, imax) == (1, 3)
    # all four products equal -> pair 0 for both
    _, imin, imax = iv_mul(I(2, 2), I(3, 3))
    assert (imin, imax) == (0, 0)
    lo, hi, amin, amax = mul_endpoints(np.array([2.0]), np.array([2.0]), np.array([3.0]), np.array([3.0]))
    assert amin[0] == 0 and amax[0] == 0


def test_dot_examples():
    u = [I(1, 2), I(0, 1)]
    v = [I(-1, 1), I(2, 3)]
    assert iv_dot(u, v) == I(-2, 5)
    x, y = [1.5, -2.0, 0.25], [4.0, 0.5, -8.0]
    got = iv_dot([I.point(a) for a in x], [I.point(b) for b in y])
    assert got.is_crisp and got.lo == float(np.dot(x, y))
    with pytest.raises(ValueError):
        iv_dot(u, v[:1])


def _rand_iv(rng, n, scale=2.0):
    a = rng.uniform(-scale, scale, n)
    b = rng.uniform(-scale, scale, n)
    return [I(min(p, q), max(p, q)) for p, q in zip(a, b)]


def test_dot_equals_exhaustive_enumeration_length_8():
    rng = np.random.default_rng(7)
    for _ in range(5):
        u, v = _rand_iv(rng, 8), _rand_iv(rng, 8)
        lo, hi = brute_dot(u, v)
        got = iv_dot(u, v)
        assert got.lo == pytest.approx(lo, abs=1e-12)
        assert got.hi == pytest.approx(hi, abs=1e-12)


def _rand_im(rng, shape, scale=2.0):
    a = rng.uniform(-scale, scale, shape)
    b = rng.uniform(-scale, scale, shape)
    return IntervalMatrix(np.minimum(a, b), np.maximum(a, b))


def test_matmul_examples():
    rng = np.random.default_rng(0)
    B = _rand_im(rng, (3, 3))
    out = iv_matmul(IntervalMatrix.point(np.eye(3)), B)
    np.testing.assert_array_equal(out.lo, B.lo)
    np.testing.assert_array_equal(out.hi, B.hi)
    a, b = IntervalMatrix([[-1.0]], [[2.0]]), IntervalMatrix([[3.0]], [[4.0]])
    assert iv_matmul(a, b)[0, 0] == iv_mul(I(-1, 2), I(3, 4))[0]
    with pytest.raises(ValueError):
        iv_matmul(_rand_im(rng, (2, 3)), _rand_im(rng, (2, 3)))


def test_matmul_entries_are_interval_dots():
    rng = np.random.default_rng(1)
    A, B = _rand_im(rng, (3, 4)), _rand_im(rng, (4, 2))
    C = iv_matmul(A, B)
    for i in range(3):
        for j in range(2):
            d = iv_dot([A[i, k] for k in range(4)], [B[k, j] for k in range(4)])
            assert C[i, j].lo == pytest.approx(d.lo, abs=1e-14)
            assert C[i, j].hi == pytest.approx(d.hi, abs=1e-14)


def test_matmul_contains_sampled_products():
    rng = np.random.default_rng(2)
    A, B = _rand_im(rng, (3, 3)), _rand_im(rng, (3, 3))
    C = iv_matmul(A, B)
    for _ in range(1000):
        X = rng.uniform(A.lo, A.hi)
        Y = rng.uniform(B.lo, B.hi)
        assert C.contains(X @ Y)


def test_matmul_anchor_matches_plain_and_collapses_bitwise():
    rng = np.random.default_rng(3)
    A, B = _rand_im(rng, (5, 4)), _rand_im(rng, (4, 3))
    ref = (0.5 * (A.lo + A.hi), 0.5 * (B.lo + B.hi))
    lo, hi, _, _ = matmul_endpoints(A.lo, A.hi, B.lo, B.hi)
    alo, ahi, _, _ = matmul_endpoints(A.lo, A.hi, B.lo, B.hi, anchor=ref)
    np.testing.assert_allclose(alo, lo, atol=1e-13)
    np.testing.assert_allclose(ahi, hi, atol=1e-13)
    X, W = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))
    lo, hi, _, _ = matmul_endpoints(X, X, W, W, anchor=(X, W))
    np.testing.assert_array_equal(lo, X @ W)
    np.testing.assert_array_equal(hi, X @ W)


def test_activate():
    assert iv_activate(IntervalMatrix.point([0.0]), "sigmoid")[0] == I(0.5, 0.5)
    t = 0.7
    r = iv_activate(IntervalMatrix([-t], [t]), "tanh")[0]
    assert r.hi == pytest.approx(math.tanh(t), rel=1e-15) and r.lo == -r.hi
    assert iv_activate(IntervalMatrix([-1.0], [2.0]), "relu")[0] == I(0, 2)
    with pytest.raises(ValueError):
        iv_activate(IntervalMatrix([0.0], [1.0]), "softplus")


def test_hadamard():
    rng = np.random.default_rng(4)
    Z = IntervalMatrix.point(np.zeros((4, 4)))
    R = _rand_im(rng, (4, 4))
    out = iv_hadamard(Z, R)
    assert np.all(out.lo == 0) and np.all(out.hi == 0)
    x, y = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
    out = iv_hadamard(IntervalMatrix.point(x), IntervalMatrix.point(y))
    np.testing.assert_array_equal(out.lo, x * y)
    A, B = _rand_im(rng, (4, 4)), _rand_im(rng, (4, 4))
    H = iv_hadamard(A, B)
    for _ in range(1000):
        assert H.contains(rng.uniform(A.lo, A.hi) * rng.uniform(B.lo, B.hi))
    with pytest.raises(ValueError):
        iv_hadamard(A, _rand_im(rng, (4, 3)))


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@st.composite
def nested(draw):
    """An interval plus a sub-interval of it."""
    a, b, s, t = draw(finite), draw(finite), draw(st.floats(0, 1)), draw(st.floats(0, 1))
    lo, hi = min(a, b), max(a, b)
    p, q = lo + (hi - lo) * min(s, t), lo + (hi - lo) * max(s, t)
    p, q = min(max(p, lo), hi), min(max(q, lo), hi)
    return I(lo, hi), I(min(p, q), max(p, q))


OPS = {"add": iv_add, "sub": iv_sub, "mul": lambda a, b: iv_mul(a, b)[0]}


@pytest.mark.parametrize("op", sorted(OPS))
@settings(max_examples=200, deadline=None)
@given(x=nested(), y=nested())
def test_inclusion_isotonicity(op, x, y):
    (a_big, a), (b_big, b) = x, y
    assert OPS[op](a, b) in OPS[op](a_big, b_big)


@pytest.mark.parametrize("op", sorted(OPS))
@settings(max_examples=200, deadline=None)
@given(x=nested(), y=nested(), s=st.floats(0, 1), t=st.floats(0, 1))
def test_containment_soundness(op, x, y, s, t):
    (a, _), (b, _) = x, y
    xa = min(max(a.lo + s * (a.hi - a.lo), a.lo), a.hi)
    xb = min(max(b.lo + t * (b.hi - b.lo), b.lo), b.hi)
    crisp = {"add": xa + xb, "sub": xa - xb, "mul": xa * xb}[op]
    assert crisp in OPS[op](a, b)


@settings(max_examples=200, deadline=None)
@given(a=finite, b=finite)
def test_crisp_consistency(a, b):
    A, B = I.point(a), I.point(b)
    assert iv_add(A, B) == I.point(a + b)
    assert iv_sub(A, B) == I.point(a - b)
    assert iv_mul(A, B)[0] == I.point(a * b)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_dot_exactness_property(n, seed):
    rng = np.random.default_rng(seed)
    u, v = _rand_iv(rng, n), _rand_iv(rng, n)
    lo, hi = brute_dot(u, v)
    got = iv_dot(u, v)
    assert got.lo == pytest.approx(lo, abs=1e-12) and got.hi == pytest.approx(hi, abs=1e-12)


@pytest.mark.parametrize("kind", ["sigmoid", "tanh", "relu", "identity"])
def test_activate_preserves_order(kind):
    rng = np.random.default_rng(5)
    X = _rand_im(rng, (20, 5), scale=5)
    Y = iv_activate(X, kind)
    assert np.all(Y.lo <= Y.hi)
