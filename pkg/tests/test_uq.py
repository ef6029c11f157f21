import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intervalnn import autograd as ag
from intervalnn.data import RegressorSpec, SeriesDataset, window
from intervalnn.inn import DeltaParams, interval_outputs, predict_pi, wrap
from intervalnn.models import init_params, rollout
from intervalnn.uq import UQTrainConfig, init_delta, rqr_loss, rqrw_objective, train_inn, width_loss

from helpers import central_diff, rel_err


@pytest.mark.parametrize("y,want", [(1.0, 0.025), (2.0, 0.675), (0.5, 0.0), (1.5, 0.0)])
def test_rqr_cases(y, want):
    assert abs(float(rqr_loss(y, 0.5, 1.5, 0.9)) - want) < 1e-12


@pytest.mark.parametrize("w,want", [(1.0, 0.5), (0.0, 0.0), (2.0, 2.0)])
def test_width_loss(w, want):
    assert float(width_loss(3.0, 3.0 + w)) == want


finite = st.floats(-100, 100, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(y=finite, a=finite, b=finite, alpha=st.floats(0.01, 0.99))
def test_rqr_nonnegative_and_zero_on_bounds(y, a, b, alpha):
    lo, hi = min(a, b), max(a, b)
    assert float(rqr_loss(y, lo, hi, alpha)) >= 0.0
    assert float(rqr_loss(lo, lo, hi, alpha)) == 0.0
    assert float(rqr_loss(hi, lo, hi, alpha)) == 0.0


def test_rqr_continuous_across_seam():
    for eps in (1e-4, 1e-6, 1e-8):
        inside = float(rqr_loss(1.5 - eps, 0.5, 1.5, 0.9))
        outside = float(rqr_loss(1.5 + eps, 0.5, 1.5, 0.9))
        assert inside < 2 * eps and outside < 2 * eps


def test_objective_examples():
    y = np.zeros((3, 4))
    # every target inside with kappa = -c  ->  mean 0.1 c at alpha 0.9
    c = 0.36
    got = float(rqrw_objective(y - 0.6, y + 0.6, y, 0.9, 0.0))
    assert got == pytest.approx(0.1 * c, abs=1e-15)
    assert float(rqrw_objective(y, y, y, 0.9, 0.5)) == 0.0
    with pytest.raises(ValueError):
        rqrw_objective(y, y, y[:, :3], 0.9, 0.1)


def test_objective_matches_elementwise_loop():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(5, 7))
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    y = rng.normal(size=(5, 7))
    alpha, lam = 0.95, 0.3
    total = 0.0
    for i in range(5):
        for j in range(7):
            k = (y[i, j] - lo[i, j]) * (y[i, j] - hi[i, j])
            total += (alpha * k if k >= 0 else (alpha - 1) * k) + lam * 0.5 * (hi[i, j] - lo[i, j]) ** 2
    assert float(rqrw_objective(lo, hi, y, alpha, lam)) == pytest.approx(total / 35, rel=1e-13)


def test_config_validation():
    for bad in ({"alpha": 1.0}, {"alpha": 0.0}, {"lam": -1.0}, {"lam": float("inf")}, {"r_h": 1.5},
                {"trick": "tanh"}, {"mbs": 0}):
        with pytest.raises(ValueError):
            UQTrainConfig(**bad)


def test_init_delta():
    p = init_params("lstm", RegressorSpec(2, 0, 1), (3,), rng=np.random.default_rng(0))
    p.tensors["lstm1.W"][0, 0] = 0.4
    d = init_delta(p, r_h=0.2, r_o=1.0)
    b = wrap(p, d).bounds()
    assert b["lstm1.W"][0][0, 0] == pytest.approx(0.32) and b["lstm1.W"][1][0, 0] == pytest.approx(0.48)
    np.testing.assert_array_equal(d.lower["out.W"], np.abs(p.tensors["out.W"]))
    np.testing.assert_array_equal(d.upper["out.W"], np.abs(p.tensors["out.W"]))
    z = init_delta(p, 0.0, 0.0, trick="relu")
    assert all(np.all(v == 0) for v in z.lower.values())
    f = init_delta(p, 0.2, 1.0, freeze_recurrent=True)
    assert np.all(f.lower["lstm1.U"] == 0) and np.all(f.upper["lstm1.U"] == 0)
    with pytest.raises(ValueError):
        init_delta(p, 1.2, 0.0)


@pytest.mark.parametrize("kind", ["node", "lstm"])
@pytest.mark.parametrize("trick", ["abs", "relu"])
def test_objective_gradient_wrt_raw_radii(kind, trick):
    rng = np.random.default_rng(1)
    p = init_params(kind, RegressorSpec(1, 0, 1), (4, 4), rng=rng)
    U, Y = rng.normal(size=(3, 10)), rng.normal(size=(3, 10))
    roll = rollout(p, U, Y, record=True)
    target = Y[:, roll.start:]
    # strictly positive raw radii keep both tricks away from their kink
    raw_lo = {k: rng.uniform(0.05, 0.3, v.shape) for k, v in p.tensors.items()}
    raw_hi = {k: rng.uniform(0.05, 0.3, v.shape) for k, v in p.tensors.items()}
    delta = DeltaParams(trick, raw_lo, raw_hi)

    tape = ag.Tape()
    tv_lo = {k: tape.var(v, name=f"lo:{k}") for k, v in raw_lo.items()}
    tv_hi = {k: tape.var(v, name=f"hi:{k}") for k, v in raw_hi.items()}
    lo, hi = interval_outputs(p, wrap(p, delta, tv_lo, tv_hi), roll)
    grads = ag.backward(tape, rqrw_objective(lo, hi, target, 0.9, 0.1))

    for side, raws in (("lo", raw_lo), ("hi", raw_hi)):
        for k, v in raws.items():
            def f(x, k=k, side=side):
                over = {k: x}
                ip = wrap(p, delta, over if side == "lo" else None, over if side == "hi" else None)
                a, b = interval_outputs(p, ip, roll)
                return float(rqrw_objective(a, b, target, 0.9, 0.1))
            assert rel_err(grads[f"{side}:{k}"], central_diff(f, v)) < 1e-5, f"{side}:{k}"


def _linear_ds(K, w, seed):
    rng = np.random.default_rng(seed)
    u = np.repeat(rng.uniform(-1, 1, K // 10 + 1), 10)[:K]
    x = np.zeros(K)
    for k in range(1, K):
        x[k] = 0.9 * x[k - 1] + 0.1 * u[k]
    return SeriesDataset(u, x + rng.uniform(-w, w, K))


def _exact_node(bias=0.0):
    """NODE whose crisp output is the noise-free linear system: g = 0.1 u(k) - 0.1 y(k-1)."""
    p = init_params("node", RegressorSpec(0, 0, 1), (), rng=np.random.default_rng(0))
    p.tensors["l1.W"] = np.array([[0.1, -0.1]])
    p.tensors["l1.b"] = np.array([bias])
    return p


def test_crisp_parameters_untouched_and_frozen_radii_stay():
    p = init_params("lstm", RegressorSpec(1, 0, 1), (3,), rng=np.random.default_rng(0))
    before = p.checksum()
    ds = _linear_ds(200, 0.1, 0)
    cfg = UQTrainConfig(epochs=3, mbs=32, lr=1e-2, freeze_recurrent=True)
    best, hist = train_inn(p, ds, ds, cfg, N=20)
    assert p.checksum() == before
    assert np.all(best.lower["lstm1.U"] == 0) and np.all(best.upper["lstm1.U"] == 0)
    assert [h["epoch"] for h in hist] == [0, 1, 2, 3]
    assert {"train_objective", "val_objective", "val_picp", "val_pinaw", "wall_time"} <= set(hist[1])


def test_huge_width_penalty_collapses_coverage():
    p = _exact_node()
    tr, te = _linear_ds(600, 0.1, 1), _linear_ds(600, 0.1, 2)
    cfg = UQTrainConfig(alpha=0.9, lam=1e3, epochs=20, mbs=64, lr=1e-2, r_h=1.0, r_o=1.0)
    best, _ = train_inn(p, tr, tr, cfg, N=30)
    pi = predict_pi(p, best, te.u[None], te.y[None])
    assert np.mean(pi.width) < 0.02
    inside = (pi.lower <= te.y[None, 1:]) & (te.y[None, 1:] <= pi.upper)
    assert 100 * inside.mean() < 50


def test_zero_crisp_entry_keeps_zero_radius():
    # radius starts at |theta*| * r = 0 and the trick's subgradient at 0 is 0
    p = _exact_node(bias=0.0)
    best, _ = train_inn(p, _linear_ds(300, 0.1, 6), _linear_ds(300, 0.1, 7),
                        UQTrainConfig(epochs=3, lr=1e-2, r_h=1.0, r_o=1.0), N=30)
    assert best.lower["l1.b"][0] == 0.0 and best.upper["l1.b"][0] == 0.0


def test_coverage_close_to_target_on_exact_model():
    # a tiny bias gives the constant-width part of the band a nonzero start
    p = _exact_node(bias=1e-3)
    w = 0.1
    tr, va, te = _linear_ds(1500, w, 3), _linear_ds(500, w, 4), _linear_ds(2000, w, 5)
    cfg = UQTrainConfig(alpha=0.9, epochs=40, mbs=64, lr=3e-3, r_h=1.0, r_o=1.0)
    best, hist = train_inn(p, window(tr, 40), window(va, 40), cfg)
    pi = predict_pi(p, best, te.u[None], te.y[None])
    y = te.y[None, 1:]
    picp = 100 * np.mean((pi.lower <= y) & (y <= pi.upper))
    assert 87 <= picp <= 93
    assert abs(np.mean(pi.width) - 1.8 * w) < 0.25 * 1.8 * w
