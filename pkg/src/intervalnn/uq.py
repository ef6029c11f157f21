"""Training interval radii for target coverage with the RQR-W objective."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import autograd as ag
from .data import SeriesDataset, WindowedBatch, window
from .inn import TRICKS, DeltaParams, interval_outputs, wrap
from .models import ModelParams, TrainingDiverged, rollout
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

__all__ = [
    "UQTrainConfig",
    "rqr_loss",
    "width_loss",
    "rqrw_objective",
    "init_delta",
    "train_inn",
]


def rqr_loss(yhat, lower, upper, alpha: float):
    """Relaxed quantile loss; elementwise, works on arrays and tape variables.

    With ``kappa = (yhat - lower) * (yhat - upper)`` the loss is
    ``alpha * kappa`` outside the interval and ``(alpha - 1) * kappa`` inside.
    """
    kappa = ag.mul(ag.sub(yhat, lower), ag.sub(yhat, upper))
    return ag.add(ag.mul(alpha, ag.relu(kappa)), ag.mul(1.0 - alpha, ag.relu(ag.neg(kappa))))


def width_loss(lower, upper):
    return ag.mul(0.5, ag.square(ag.sub(upper, lower)))


def rqrw_objective(lower, upper, targets, alpha: float, lam: float):
    """Mean of ``rqr_loss + lam * width_loss`` over all entries."""
    shapes = {np.shape(ag.value_of(a)) for a in (lower, upper, targets)}
    if len(shapes) != 1:
        raise ValueError(f"shape mismatch between bounds and targets: {sorted(shapes)}")
    per = ag.add(rqr_loss(targets, lower, upper, alpha), ag.mul(lam, width_loss(lower, upper)))
    return ag.mean(per)


@dataclass
class UQTrainConfig:
    alpha: float = 0.9
    lam: float = 0.005
    epochs: int = 200
    mbs: int = 64
    lr: float = 1e-3
    r_h: float = 0.2
    r_o: float = 1.0
    trick: str = "abs"
    seed: int = 0
    freeze_recurrent: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie strictly inside (0, 1), got {self.alpha}")
        if not (math.isfinite(self.lam) and self.lam >= 0.0):
            raise ValueError(f"lam must be finite and nonnegative, got {self.lam}")
        for name in ("r_h", "r_o"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.trick not in TRICKS:
            raise ValueError(f"unknown trick {self.trick!r}")
        if self.epochs < 0 or self.mbs < 1 or not self.lr > 0:
            raise ValueError("epochs >= 0, mbs >= 1 and lr > 0 required")

    def to_dict(self) -> dict:
        return asdict(self)


def init_delta(params: ModelParams, r_h: float, r_o: float, trick: str = "abs",
               freeze_recurrent: bool = False) -> DeltaParams:
    """Raw radii whose effective value is ``|theta*| * r`` on both sides.

    ``r_o`` applies to the output layer, ``r_h`` to everything else.  With
    ``freeze_recurrent`` the recurrent (``U``) radii start at zero.
    """
    for name, r in (("r_h", r_h), ("r_o", r_o)):
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {r}")
    out_names = set(params.output_names())
    frozen = set(params.recurrent_names()) if freeze_recurrent else set()
    lower, upper = {}, {}
    for k, v in params.tensors.items():
        r = r_o if k in out_names else r_h
        raw = np.abs(np.asarray(v, dtype=np.float64)) * r
        if k in frozen:
            raw = np.zeros_like(raw)
        lower[k] = raw
        upper[k] = raw.copy()
    return DeltaParams(trick, lower, upper)


def _pi_stats(lo, hi, y) -> tuple[float, float]:
    inside = (lo <= y) & (y <= hi)
    R = float(np.max(y) - np.min(y))
    picp = 100.0 * float(np.mean(inside))
    pinaw = 100.0 * float(np.mean(hi - lo)) / R if R > 0 else float("nan")
    return picp, pinaw


def _as_batch(d, N):
    return d if isinstance(d, WindowedBatch) else window(d, N)


def train_inn(params: ModelParams, train: SeriesDataset | WindowedBatch, val: SeriesDataset | WindowedBatch,
              config: UQTrainConfig | None = None, N: int | None = None, on_epoch=None):
    """Mini-batch Adam on the RQR-W objective over raw radii.

    The crisp rollouts do not depend on the radii, so they are computed once.
    Returns ``(best_delta, history)`` where ``best_delta`` minimises the
    validation objective (initialisation counts as epoch 0).
    """
    cfg = config or UQTrainConfig()
    params.validate()
    tb, vb = _as_batch(train, N), _as_batch(val, N)
    delta = init_delta(params, cfg.r_h, cfg.r_o, cfg.trick, cfg.freeze_recurrent)
    frozen = set(params.recurrent_names()) if cfg.freeze_recurrent else set()
    trainable = [k for k in params.tensors if k not in frozen]

    troll = rollout(params, tb.U, tb.Yhat, record=True)
    vroll = rollout(params, vb.U, vb.Yhat, record=True)
    w = troll.start
    ty, vy = tb.Yhat[:, w:], vb.Yhat[:, w:]

    def evaluate(d: DeltaParams):
        lo, hi = interval_outputs(params, wrap(params, d), vroll)
        obj = float(rqrw_objective(lo, hi, vy, cfg.alpha, cfg.lam))
        return obj, lo, hi

    rng = np.random.default_rng(cfg.seed)
    state = AdamState(lr=cfg.lr)
    raw = {f"lo:{k}": delta.lower[k] for k in trainable}
    raw.update({f"hi:{k}": delta.upper[k] for k in trainable})

    best_obj, lo, hi = evaluate(delta)
    if not math.isfinite(best_obj):
        raise TrainingDiverged(0, "validation objective")
    best = delta.copy()
    picp, pinaw = _pi_stats(lo, hi, vy)
    history = [{"epoch": 0, "train_objective": None, "val_objective": best_obj,
                "val_picp": picp, "val_pinaw": pinaw, "wall_time": 0.0}]
    t0 = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(tb.B)
        total = 0.0
        for s in range(0, tb.B, cfg.mbs):
            rows = np.sort(order[s:s + cfg.mbs])
            tape = ag.Tape()
            tv = {name: tape.var(v, name=name) for name, v in raw.items()}
            ip = wrap(params, delta,
                      {k: tv[f"lo:{k}"] for k in trainable},
                      {k: tv[f"hi:{k}"] for k in trainable})
            lo, hi = interval_outputs(params, ip, troll, rows)
            loss = rqrw_objective(lo, hi, ty[rows], cfg.alpha, cfg.lam)
            lv = float(loss.value)
            if not math.isfinite(lv):
                raise TrainingDiverged(epoch)
            grads = ag.backward(tape, loss)
            raw = adam_step(state, raw, grads)
            total += lv * len(rows)
            for k in trainable:
                delta.lower[k] = raw[f"lo:{k}"]
                delta.upper[k] = raw[f"hi:{k}"]
        val_obj, lo, hi = evaluate(delta)
        if not math.isfinite(val_obj):
            raise TrainingDiverged(epoch, "validation objective")
        if val_obj < best_obj:
            best_obj, best = val_obj, delta.copy()
        picp, pinaw = _pi_stats(lo, hi, vy)
        rec = {"epoch": epoch, "train_objective": total / tb.B, "val_objective": val_obj,
               "val_picp": picp, "val_pinaw": pinaw, "wall_time": time.perf_counter() - t0}
        history.append(rec)
        log.debug("inn epoch %d train %.6g val %.6g picp %.2f pinaw %.2f", epoch,
                  rec["train_objective"], val_obj, picp, pinaw)
        if on_epoch is not None:
            on_epoch(rec)
    return best, history
