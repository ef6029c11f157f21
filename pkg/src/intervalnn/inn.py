"""Interval networks built around a pretrained crisp model.

Every crisp tensor ``theta`` becomes ``[theta - rad_lo, theta + rad_hi]``
with ``rad = trick(raw)``.  Inference runs the crisp model in lockstep and
re-centres the interval recurrence on its states and output at every step,
so a prediction interval reflects one step of parameter uncertainty around
the crisp trajectory.

Layers whose input is crisp use the exact form

    lo = x @ W.T - (x+ @ rad_lo.T + x- @ rad_hi.T)

(``x+``/``x-`` the positive part and magnitude of the negative part), which
collapses bit for bit onto the crisp layer when the radii are zero.  Layers
with interval inputs use the anchored interval product from
:func:`intervalnn.interval.matmul_endpoints` for the same reason.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .models import ModelParams, Rollout, _split_gates, rollout

__all__ = [
    "TRICKS",
    "DeltaParams",
    "IntervalParams",
    "PredictionInterval",
    "apply_trick",
    "wrap",
    "iffn_forward",
    "inode_step",
    "ilstm_step",
    "interval_outputs",
    "predict_pi",
    "save_inn_checkpoint",
    "load_inn_checkpoint",
]

TRICKS = ("abs", "relu")


def apply_trick(raw, trick: str):
    if trick == "abs":
        return ag.abs_(raw)
    if trick == "relu":
        return ag.relu(raw)
    raise ValueError(f"unknown parameterization trick {trick!r}; expected one of {TRICKS}")


@dataclass(eq=False)
class DeltaParams:
    """Raw (unconstrained) lower/upper radii, one pair per crisp tensor."""

    trick: str
    lower: dict
    upper: dict

    def __post_init__(self):
        if self.trick not in TRICKS:
            raise ValueError(f"unknown parameterization trick {self.trick!r}")
        if set(self.lower) != set(self.upper):
            raise ValueError("lower and upper radii must cover the same tensors")

    def check_mirrors(self, params: ModelParams):
        if set(self.lower) != set(params.tensors):
            raise ValueError(f"radii cover {sorted(self.lower)}, model has {sorted(params.tensors)}")
        for k, v in params.tensors.items():
            for side in (self.lower, self.upper):
                if np.shape(side[k]) != np.shape(v):
                    raise ValueError(f"radius shape {np.shape(side[k])} for {k!r} does not match {np.shape(v)}")

    def effective(self) -> tuple[dict, dict]:
        lo = {k: apply_trick(np.asarray(v), self.trick) for k, v in self.lower.items()}
        hi = {k: apply_trick(np.asarray(v), self.trick) for k, v in self.upper.items()}
        return lo, hi

    @classmethod
    def zeros(cls, params: ModelParams, trick: str = "abs") -> "DeltaParams":
        return cls(trick, {k: np.zeros_like(v) for k, v in params.tensors.items()},
                   {k: np.zeros_like(v) for k, v in params.tensors.items()})

    def copy(self) -> "DeltaParams":
        return DeltaParams(self.trick, {k: np.array(v) for k, v in self.lower.items()},
                           {k: np.array(v) for k, v in self.upper.items()})


@dataclass(eq=False)
class IntervalParams:
    """``[center - rad_lo, center + rad_hi]`` per tensor.  Values may be tape variables."""

    center: dict
    rad_lo: dict
    rad_hi: dict
    _lo: dict = field(default_factory=dict, repr=False)
    _hi: dict = field(default_factory=dict, repr=False)

    def lo(self, name):
        if name not in self._lo:
            self._lo[name] = ag.sub(self.center[name], self.rad_lo[name])
        return self._lo[name]

    def hi(self, name):
        if name not in self._hi:
            self._hi[name] = ag.add(self.center[name], self.rad_hi[name])
        return self._hi[name]

    def bounds(self) -> dict:
        """Numpy ``(lo, hi)`` per tensor."""
        return {k: (np.asarray(ag.value_of(self.lo(k))), np.asarray(ag.value_of(self.hi(k)))) for k in self.center}


def wrap(params: ModelParams, delta: DeltaParams, raw_lower: dict | None = None,
         raw_upper: dict | None = None) -> IntervalParams:
    """Interval parameters from crisp ``params`` and raw radii.

    ``raw_lower``/``raw_upper`` override entries of ``delta`` (training
    passes tape variables here).
    """
    delta.check_mirrors(params)
    rl = dict(delta.lower, **(raw_lower or {}))
    ru = dict(delta.upper, **(raw_upper or {}))
    rad_lo = {k: apply_trick(rl[k], delta.trick) for k in params.tensors}
    rad_hi = {k: apply_trick(ru[k], delta.trick) for k in params.tensors}
    return IntervalParams(dict(params.tensors), rad_lo, rad_hi)


def _crisp_in_matmul(x, ip: IntervalParams, name: str, base=None):
    """``x @ W.T`` for crisp rows ``x`` and interval ``W``; returns ``(lo, hi)``.

    ``base`` is the crisp product ``x @ W.T`` if already known.
    """
    x = np.asarray(x, dtype=np.float64)
    xp = np.maximum(x, 0.0)
    xn = np.maximum(-x, 0.0)
    c = x @ np.swapaxes(ip.center[name], -1, -2) if base is None else base
    rl = ag.transpose(ip.rad_lo[name])
    rh = ag.transpose(ip.rad_hi[name])
    dev_lo = ag.add(ag.matmul(xp, rl), ag.matmul(xn, rh))
    dev_hi = ag.add(ag.matmul(xp, rh), ag.matmul(xn, rl))
    return ag.sub(c, dev_lo), ag.add(c, dev_hi)


def _interval_in_matmul(xlo, xhi, ip: IntervalParams, name: str, crisp=None):
    """``[xlo, xhi] @ W.T`` for interval rows and interval ``W``.

    Anchored at the crisp layer input and product ``crisp = (x, x @ W.T)``
    when given, otherwise at the interval midpoint.
    """
    Wc = np.swapaxes(ip.center[name], -1, -2)
    if crisp is None:
        xm = 0.5 * (np.asarray(ag.value_of(xlo)) + np.asarray(ag.value_of(xhi)))
        return ag.interval_matmul(xlo, xhi, ag.transpose(ip.lo(name)), ag.transpose(ip.hi(name)), anchor=(xm, Wc))
    return ag.interval_matmul(xlo, xhi, ag.transpose(ip.lo(name)), ag.transpose(ip.hi(name)),
                              anchor=(crisp[0], Wc), base=crisp[1])


def _linear(inp, ip: IntervalParams, name: str, products=None):
    """Interval ``inp @ W.T``; ``inp`` is an array (crisp) or a ``(lo, hi)`` pair.

    ``products`` optionally maps weight names to the crisp model's recorded
    ``(input, input @ W.T)``; using them makes zero radii reproduce the crisp
    model bit for bit regardless of batch layout.
    """
    crisp = None if products is None else products[name]
    if isinstance(inp, tuple):
        return _interval_in_matmul(inp[0], inp[1], ip, name, crisp)
    return _crisp_in_matmul(inp, ip, name, None if crisp is None else crisp[1])


def _add_bias(z, ip: IntervalParams, name: str):
    return ag.add(z[0], ip.lo(name)), ag.add(z[1], ip.hi(name))


def _act(z, kind: str):
    return ag.activate(z[0], kind), ag.activate(z[1], kind)


def iffn_forward(x, ip: IntervalParams, params: ModelParams, products=None):
    """Interval dense stack on crisp rows ``x``; returns ``(lo, hi)``."""
    n = params.n_layers
    h = x
    for i in range(1, n + 1):
        h = _add_bias(_linear(h, ip, f"l{i}.W", products), ip, f"l{i}.b")
        if i < n:
            h = _act(h, params.activation)
    return h


def inode_step(x, y_prev, ip: IntervalParams, params: ModelParams, products=None):
    """``[y(k-1), y(k-1)] + g~(x(k))`` with the crisp previous output."""
    glo, ghi = iffn_forward(x, ip, params, products)
    return ag.add(y_prev, glo), ag.add(y_prev, ghi)


def ilstm_step(x, h_prev, c_prev, ip: IntervalParams, params: ModelParams, products=None):
    """One interval LSTM step from crisp centred states ``h_prev``/``c_prev`` (per layer)."""
    inp = x
    for i, H in enumerate(params.hidden, start=1):
        zw = _linear(inp, ip, f"lstm{i}.W", products)
        zu = _linear(h_prev[i - 1], ip, f"lstm{i}.U", products)
        z = _add_bias((ag.add(zw[0], zu[0]), ag.add(zw[1], zu[1])), ip, f"lstm{i}.b")
        parts_lo = _split_gates(z[0], H)
        parts_hi = _split_gates(z[1], H)
        gi, gf, go = ((ag.sigmoid(parts_lo[j]), ag.sigmoid(parts_hi[j])) for j in range(3))
        cand = (ag.tanh(parts_lo[3]), ag.tanh(parts_hi[3]))
        c0 = np.asarray(c_prev[i - 1])
        fc = ag.interval_mul(gf[0], gf[1], c0, c0)
        ic = ag.interval_mul(gi[0], gi[1], cand[0], cand[1])
        c = (ag.add(fc[0], ic[0]), ag.add(fc[1], ic[1]))
        inp = ag.interval_mul(go[0], go[1], ag.tanh(c[0]), ag.tanh(c[1]))
    return _add_bias(_linear(inp, ip, "out.W", products), ip, "out.b")


def interval_outputs(params: ModelParams, ip: IntervalParams, roll: Rollout, rows=None):
    """Interval outputs for every recorded step of ``roll``.

    ``rows`` optionally selects windows.  Returns ``(lo, hi)`` of shape
    (windows, steps).
    """
    pick = (lambda a: a) if rows is None else (lambda a: a[rows])
    X = pick(roll.X)
    B, S, d = X.shape
    flat = X.reshape(B * S, d)
    products = None
    if roll.products is not None:
        products = {k: (pick(a).reshape(B * S, -1), pick(b).reshape(B * S, -1)) for k, (a, b) in roll.products.items()}
    if params.kind == "node":
        yp = pick(roll.y_prev).reshape(B * S, 1)
        lo, hi = inode_step(flat, yp, ip, params, products)
    else:
        hs = [pick(h).reshape(B * S, -1) for h in roll.h_prev]
        cs = [pick(c).reshape(B * S, -1) for c in roll.c_prev]
        lo, hi = ilstm_step(flat, hs, cs, ip, params, products)
    return ag.reshape(lo, (B, S)), ag.reshape(hi, (B, S))


@dataclass(eq=False)
class PredictionInterval:
    """Bounds and crisp centre for steps ``start ..`` of each window."""

    lower: np.ndarray
    center: np.ndarray
    upper: np.ndarray
    start: int = 0

    def __post_init__(self):
        if not (np.shape(self.lower) == np.shape(self.center) == np.shape(self.upper)):
            raise ValueError("lower, center and upper must share a shape")

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def predict_pi(params: ModelParams, intervals: IntervalParams | DeltaParams, U, Yhat) -> PredictionInterval:
    """Closed-loop crisp rollout plus centred interval steps over windows ``U``/``Yhat``."""
    ip = wrap(params, intervals) if isinstance(intervals, DeltaParams) else intervals
    roll = rollout(params, U, Yhat, record=True)
    lo, hi = interval_outputs(params, ip, roll)
    return PredictionInterval(np.asarray(lo), np.asarray(roll.y), np.asarray(hi), roll.start)


INN_FORMAT = "intervalnn.inn/1"


def _dump(a) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _load(d) -> np.ndarray:
    return np.array(d["data"], dtype=np.float64).reshape(d["shape"])


def save_inn_checkpoint(path, delta: DeltaParams, crisp_sha256: str, **meta) -> str:
    doc = {
        "format": INN_FORMAT,
        "crisp_sha256": crisp_sha256,
        "trick": delta.trick,
        "lower": {k: _dump(delta.lower[k]) for k in sorted(delta.lower)},
        "upper": {k: _dump(delta.upper[k]) for k in sorted(delta.upper)},
        "meta": meta,
    }
    text = json.dumps(doc, sort_keys=True, indent=1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def load_inn_checkpoint(path) -> tuple[DeltaParams, str, dict]:
    """Returns ``(delta, crisp_sha256, meta)``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != INN_FORMAT:
        raise ValueError(f"{path}: not an INN checkpoint")
    delta = DeltaParams(doc["trick"], {k: _load(v) for k, v in doc["lower"].items()},
                        {k: _load(v) for k, v in doc["upper"].items()})
    return delta, doc["crisp_sha256"], doc.get("meta", {})
