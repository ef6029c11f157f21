"""Crisp feedforward, LSTM and Euler-discretized NODE models.

All forward functions take an optional ``tensors`` mapping that overrides
``params.tensors``; passing tape variables there is how training gets
gradients.  Operation order here is mirrored exactly by
:mod:`intervalnn.inn`, so zero-radius interval models reproduce these
outputs bit for bit.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .data import RegressorSpec, SeriesDataset, WindowedBatch, window
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

__all__ = [
    "TrainingDiverged",
    "ModelParams",
    "LSTMState",
    "Rollout",
    "CrispTrainConfig",
    "init_params",
    "ffn_forward",
    "lstm_step",
    "node_step",
    "rollout",
    "simulate",
    "mse_loss",
    "train_mse",
    "save_checkpoint",
    "load_checkpoint",
]

MODEL_KINDS = ("node", "lstm")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, what: str = "loss"):
        super().__init__(f"{what} became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass(eq=False)
class ModelParams:
    """Architecture plus parameter tensors of a single-output model.

    ``node``: dense layers ``l1 .. ln`` (``W`` is out x in), hidden layers use
    ``activation``, the last layer is affine.
    ``lstm``: stacked cells ``lstm1 .. lstmL`` with gate blocks stacked in
    the order (i, f, o, c) along the first axis, then an affine ``out`` layer.
    """

    kind: str
    spec: RegressorSpec
    hidden: tuple
    activation: str = "tanh"
    tensors: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.kind == "lstm" and not self.hidden:
            raise ValueError("an LSTM needs at least one cell layer")

    @property
    def n_in(self) -> int:
        return self.spec.size

    @property
    def n_layers(self) -> int:
        return len(self.hidden) + 1

    def expected_shapes(self) -> dict:
        shapes = {}
        widths = (self.n_in,) + self.hidden
        if self.kind == "node":
            outs = self.hidden + (1,)
            for i, (a, b) in enumerate(zip(widths, outs), start=1):
                shapes[f"l{i}.W"] = (b, a)
                shapes[f"l{i}.b"] = (b,)
        else:
            for i, (a, h) in enumerate(zip(widths[:-1], self.hidden), start=1):
                shapes[f"lstm{i}.W"] = (4 * h, a)
                shapes[f"lstm{i}.U"] = (4 * h, h)
                shapes[f"lstm{i}.b"] = (4 * h,)
            shapes["out.W"] = (1, self.hidden[-1])
            shapes["out.b"] = (1,)
        return shapes

    def output_names(self) -> tuple[str, str]:
        if self.kind == "node":
            return (f"l{self.n_layers}.W", f"l{self.n_layers}.b")
        return ("out.W", "out.b")

    def recurrent_names(self) -> tuple[str, ...]:
        return tuple(k for k in self.tensors if k.endswith(".U"))

    def validate(self):
        want = self.expected_shapes()
        if set(want) != set(self.tensors):
            raise ValueError(f"tensor names {sorted(self.tensors)} do not match architecture {sorted(want)}")
        for k, s in want.items():
            if np.shape(self.tensors[k]) != s:
                raise ValueError(f"tensor {k!r} has shape {np.shape(self.tensors[k])}, expected {s}")

    def copy(self, tensors: dict | None = None) -> "ModelParams":
        src = self.tensors if tensors is None else tensors
        return ModelParams(self.kind, self.spec, self.hidden, self.activation,
                           {k: np.array(v, dtype=np.float64) for k, v in src.items()})

    def arch_dict(self) -> dict:
        return {
            "kind": self.kind,
            "regressor": list(self.spec.as_tuple()),
            "hidden": list(self.hidden),
            "activation": self.activation,
        }

    def checksum(self) -> str:
        h = hashlib.sha256()
        for k in sorted(self.tensors):
            h.update(k.encode())
            h.update(np.ascontiguousarray(self.tensors[k], dtype=np.float64).tobytes())
        return h.hexdigest()


def init_params(kind: str, spec: RegressorSpec, hidden, activation: str = "tanh",
                rng: np.random.Generator | None = None) -> ModelParams:
    """Glorot-uniform weights (recurrent ones included), zero biases."""
    rng = np.random.default_rng() if rng is None else rng
    p = ModelParams(kind, spec, tuple(hidden), activation)
    for name, shape in p.expected_shapes().items():
        if name.endswith(".b"):
            p.tensors[name] = np.zeros(shape)
        else:
            fan_out, fan_in = shape
            a = math.sqrt(6.0 / (fan_in + fan_out))
            p.tensors[name] = rng.uniform(-a, a, size=shape)
    return p


def _product(x, W, trace=None, name=None):
    """``x @ W.T``; with a ``trace`` dict, records ``name -> (x, x @ W.T)`` as arrays."""
    out = ag.matmul(x, ag.transpose(W))
    if trace is not None:
        trace[name] = (np.asarray(ag.value_of(x)), np.asarray(ag.value_of(out)))
    return out


def _affine(x, W, b, trace=None, name=None):
    return ag.add(_product(x, W, trace, name), b)


def ffn_forward(x, params: ModelParams, tensors=None, trace=None):
    """Dense stack ``l1 .. ln`` on rows of ``x``; last layer affine."""
    t = params.tensors if tensors is None else tensors
    n = params.n_layers
    h = x
    for i in range(1, n + 1):
        h = _affine(h, t[f"l{i}.W"], t[f"l{i}.b"], trace, f"l{i}.W")
        if i < n:
            h = ag.activate(h, params.activation)
    return h


def node_step(x, y_prev, params: ModelParams, tensors=None, trace=None):
    """Euler step ``y(k) = y(k-1) + g(x(k))``."""
    return ag.add(y_prev, ffn_forward(x, params, tensors, trace))


@dataclass
class LSTMState:
    h: list
    c: list

    @classmethod
    def zeros(cls, params: ModelParams, batch: int) -> "LSTMState":
        return cls([np.zeros((batch, H)) for H in params.hidden], [np.zeros((batch, H)) for H in params.hidden])


def _split_gates(z, H):
    return z[:, 0:H], z[:, H:2 * H], z[:, 2 * H:3 * H], z[:, 3 * H:4 * H]


def lstm_step(x, state: LSTMState, params: ModelParams, tensors=None, trace=None):
    """One step of the stacked LSTM.  Returns ``(y, new_state)``."""
    t = params.tensors if tensors is None else tensors
    inp = x
    hs, cs = [], []
    for i, H in enumerate(params.hidden, start=1):
        z = ag.add(ag.add(_product(inp, t[f"lstm{i}.W"], trace, f"lstm{i}.W"),
                          _product(state.h[i - 1], t[f"lstm{i}.U"], trace, f"lstm{i}.U")),
                   t[f"lstm{i}.b"])
        zi, zf, zo, zc = _split_gates(z, H)
        gi, gf, go = ag.sigmoid(zi), ag.sigmoid(zf), ag.sigmoid(zo)
        cand = ag.tanh(zc)
        c = ag.add(ag.mul(gf, state.c[i - 1]), ag.mul(gi, cand))
        h = ag.mul(go, ag.tanh(c))
        hs.append(h)
        cs.append(c)
        inp = h
    y = _affine(inp, t["out.W"], t["out.b"], trace, "out.W")
    return y, LSTMState(hs, cs)


@dataclass
class Rollout:
    """Closed-loop simulation of a batch of windows.

    ``y`` holds predictions for steps ``start .. N-1`` (shape B x (N-start)).
    When recorded, ``X`` are the regressors (B, N-start, d), ``y_prev`` the
    previous outputs, and ``h_prev``/``c_prev`` the per-layer LSTM states
    entering each step, and ``products`` maps every weight matrix name to the
    ``(layer input, input @ W.T)`` pair the crisp model computed, each of
    shape (B, N-start, width).
    """

    y: object
    start: int
    X: np.ndarray | None = None
    y_prev: np.ndarray | None = None
    h_prev: list | None = None
    c_prev: list | None = None
    products: dict | None = None


def rollout(params: ModelParams, U, Yhat, tensors=None, teacher_forcing: bool = False,
            record: bool = False) -> Rollout:
    """Simulation-mode rollout over windows ``U``/``Yhat`` (B x N).

    The first ``spec.warmup`` samples seed the lag buffers with measured
    outputs; afterwards lagged outputs are the model's own predictions
    (or the measured ones if ``teacher_forcing``).
    """
    spec = params.spec
    U = np.atleast_2d(np.asarray(U, dtype=np.float64))
    Yhat = np.atleast_2d(np.asarray(Yhat, dtype=np.float64))
    B, N = U.shape
    w = spec.warmup
    if Yhat.shape != U.shape:
        raise ValueError(f"U {U.shape} and Yhat {Yhat.shape} differ in shape")
    if N <= w:
        raise ValueError(f"window length {N} is not longer than the warm-up length {w}")
    ybuf = [Yhat[:, k:k + 1] for k in range(w)]
    state = LSTMState.zeros(params, B) if params.kind == "lstm" else None
    preds, xs, yps, hps, cps, trs = [], [], [], [], [], []
    for k in range(w, N):
        ulags = U[:, [k - spec.n_d - j for j in range(spec.n_x + 1)]]
        if teacher_forcing:
            ylags = [Yhat[:, k - j:k - j + 1] for j in range(1, spec.n_y + 1)]
        else:
            ylags = [ybuf[k - j] for j in range(1, spec.n_y + 1)]
        x = ag.concat([ulags] + ylags, axis=1)
        if record:
            xs.append(ag.value_of(x))
            yps.append(ag.value_of(ylags[0])[:, 0])
            if state is not None:
                hps.append([ag.value_of(h) for h in state.h])
                cps.append([ag.value_of(c) for c in state.c])
        trace = {} if record else None
        if params.kind == "node":
            y = node_step(x, ylags[0], params, tensors, trace)
        else:
            y, state = lstm_step(x, state, params, tensors, trace)
        if record:
            trs.append(trace)
        preds.append(y)
        ybuf.append(y)
    out = Rollout(ag.concat(preds, axis=1), w)
    if record:
        out.X = np.stack(xs, axis=1)
        out.y_prev = np.stack(yps, axis=1)
        out.products = {k: (np.stack([t[k][0] for t in trs], axis=1), np.stack([t[k][1] for t in trs], axis=1))
                        for k in trs[0]}
        if params.kind == "lstm":
            L = len(params.hidden)
            out.h_prev = [np.stack([s[i] for s in hps], axis=1) for i in range(L)]
            out.c_prev = [np.stack([s[i] for s in cps], axis=1) for i in range(L)]
    return out


def simulate(params: ModelParams, U, Yhat, teacher_forcing: bool = False) -> np.ndarray:
    """Full predicted rows (B x N); warm-up entries are the measured seeds."""
    U = np.atleast_2d(np.asarray(U, dtype=np.float64))
    Yhat = np.atleast_2d(np.asarray(Yhat, dtype=np.float64))
    r = rollout(params, U, Yhat, teacher_forcing=teacher_forcing)
    return np.concatenate([Yhat[:, :r.start], r.y], axis=1)


def mse_loss(pred, target):
    """Mean over all trajectories and steps of the squared error."""
    return ag.mean(ag.square(ag.sub(target, pred)))


@dataclass
class CrispTrainConfig:
    epochs: int = 300
    mbs: int = 64
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.mbs < 1 or not self.lr > 0:
            raise ValueError(f"invalid training config {self}")


def _eval_mse(params: ModelParams, batch: WindowedBatch) -> float:
    r = rollout(params, batch.U, batch.Yhat)
    return float(np.mean((batch.Yhat[:, r.start:] - r.y) ** 2))


def train_mse(train: SeriesDataset | WindowedBatch, val: SeriesDataset | WindowedBatch, params: ModelParams,
              N: int | None = None, config: CrispTrainConfig | None = None, on_epoch=None):
    """Fit ``params`` by mini-batch Adam on the simulation-mode MSE.

    Returns ``(best_params, history)``; the best epoch is the one with the
    lowest validation MSE (the initial parameters count as epoch 0).
    """
    cfg = config or CrispTrainConfig()
    tb = train if isinstance(train, WindowedBatch) else window(train, N)
    vb = val if isinstance(val, WindowedBatch) else window(val, N)
    params.validate()
    rng = np.random.default_rng(cfg.seed)
    current = {k: np.array(v) for k, v in params.tensors.items()}
    state = AdamState(lr=cfg.lr)

    best_val = _eval_mse(params, vb)
    if not math.isfinite(best_val):
        raise TrainingDiverged(0, "validation loss")
    best = params.copy()
    history = [{"epoch": 0, "train_loss": None, "val_loss": best_val, "best_val_loss": best_val}]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(tb.B)
        losses = []
        for s in range(0, tb.B, cfg.mbs):
            idx = order[s:s + cfg.mbs]
            tape = ag.Tape()
            tv = {k: tape.var(v, name=k) for k, v in current.items()}
            r = rollout(params, tb.U[idx], tb.Yhat[idx], tensors=tv)
            loss = mse_loss(r.y, tb.Yhat[idx, r.start:])
            lv = float(loss.value)
            if not math.isfinite(lv):
                raise TrainingDiverged(epoch)
            grads = ag.backward(tape, loss)
            current = adam_step(state, current, grads)
            losses.append(lv * len(idx))
        train_loss = sum(losses) / tb.B
        cand = params.copy(current)
        val_loss = _eval_mse(cand, vb)
        if not math.isfinite(val_loss):
            raise TrainingDiverged(epoch, "validation loss")
        if val_loss < best_val:
            best_val, best = val_loss, cand
        rec = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "best_val_loss": best_val}
        history.append(rec)
        log.debug("crisp epoch %d train %.6g val %.6g", epoch, train_loss, val_loss)
        if on_epoch is not None:
            on_epoch(rec)
    return best, history


def _tensor_to_json(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel(order="C")]}


def _tensor_from_json(d: dict) -> np.ndarray:
    return np.array(d["data"], dtype=np.float64).reshape(d["shape"])


def params_to_dict(params: ModelParams) -> dict:
    return {
        **params.arch_dict(),
        "tensors": {k: _tensor_to_json(params.tensors[k]) for k in sorted(params.tensors)},
    }


def params_from_dict(d: dict) -> ModelParams:
    p = ModelParams(d["kind"], RegressorSpec(*d["regressor"]), tuple(d["hidden"]), d["activation"],
                    {k: _tensor_from_json(v) for k, v in d["tensors"].items()})
    p.validate()
    return p


CRISP_FORMAT = "intervalnn.crisp/1"


def save_checkpoint(path, params: ModelParams, **meta) -> str:
    """Write a JSON checkpoint; returns the sha256 of the written bytes."""
    doc = {"format": CRISP_FORMAT, "model": params_to_dict(params), "meta": meta}
    text = json.dumps(doc, sort_keys=True, indent=1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def load_checkpoint(path) -> tuple[ModelParams, dict, str]:
    """Returns ``(params, meta, sha256)``."""
    raw = Path(path).read_bytes()
    doc = json.loads(raw)
    if doc.get("format") != CRISP_FORMAT:
        raise ValueError(f"{path}: not a crisp checkpoint")
    return params_from_dict(doc["model"]), doc.get("meta", {}), hashlib.sha256(raw).hexdigest()
