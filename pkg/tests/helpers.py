import itertools

import numpy as np

from intervalnn.data import SeriesDataset


def brute_dot(u, v):
    """Min/max of sum(x_i * y_i) over every endpoint choice of every term."""
    ends = [((a.lo, a.hi), (b.lo, b.hi)) for a, b in zip(u, v)]
    best_lo, best_hi = np.inf, -np.inf
    for choice in itertools.product(range(4), repeat=len(ends)):
        s = 0.0
        for (ea, eb), c in zip(ends, choice):
            s += ea[c // 2] * eb[c % 2]
        best_lo = min(best_lo, s)
        best_hi = max(best_hi, s)
    return best_lo, best_hi


def central_diff(f, x, h=1e-6):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b):
    """Max abs deviation normalised by the larger gradient magnitude."""
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)
    return float(np.max(np.abs(a - b)) / scale)


def linear_system(K=2000, w=0.1, seed=0, hold=10):
    """x(k) = 0.9 x(k-1) + 0.1 u(k), observed y = x + U(-w, w)."""
    rng = np.random.default_rng(seed)
    u = np.repeat(rng.uniform(-1, 1, K // hold + 1), hold)[:K]
    x = np.zeros(K)
    for k in range(1, K):
        x[k] = 0.9 * x[k - 1] + 0.1 * u[k]
    y = x + rng.uniform(-w, w, K)
    return SeriesDataset(u, y, "linear")


def write_csv(path, u, y, header=("u", "y")):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for a, b in zip(u, y):
            fh.write(f"{float(a)!r},{float(b)!r}\n")
    return path
