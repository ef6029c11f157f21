"""Series ingestion, normalization, chronological splits and windowing."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "Normalization",
    "SeriesDataset",
    "RegressorSpec",
    "WindowedBatch",
    "load_csv",
    "normalize",
    "split",
    "split_sizes",
    "window",
    "build_regressor",
]


class DataError(ValueError):
    """Invalid input data or data-pipeline precondition violated."""


@dataclass(frozen=True)
class Normalization:
    """Per-channel affine map ``z = (v - shift) / scale``."""

    method: str = "none"
    u_shift: float = 0.0
    u_scale: float = 1.0
    y_shift: float = 0.0
    y_scale: float = 1.0

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "u_shift": self.u_shift,
            "u_scale": self.u_scale,
            "y_shift": self.y_shift,
            "y_scale": self.y_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Normalization":
        return cls(**d)

    def denormalize_y(self, y):
        return np.asarray(y) * self.y_scale + self.y_shift

    def denormalize_u(self, u):
        return np.asarray(u) * self.u_scale + self.u_shift


@dataclass(frozen=True, eq=False)
class SeriesDataset:
    u: np.ndarray
    y: np.ndarray
    name: str = "series"
    normalization: Normalization = field(default_factory=Normalization)

    def __post_init__(self):
        u = np.array(self.u, dtype=np.float64)
        y = np.array(self.y, dtype=np.float64)
        if u.ndim != 1 or y.ndim != 1 or len(u) != len(y):
            raise DataError(f"u and y must be 1-D of equal length, got {u.shape} and {y.shape}")
        if len(u) < 2:
            raise DataError("a dataset needs at least 2 samples")
        u.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    @property
    def K(self) -> int:
        return len(self.u)

    def __len__(self):
        return self.K

    def denormalize_y(self, y):
        return self.normalization.denormalize_y(y)


@dataclass(frozen=True)
class RegressorSpec:
    """Lag structure of ``x(k) = [u(k-nd), ..., u(k-nd-nx), y(k-1), ..., y(k-ny)]``."""

    n_x: int
    n_d: int
    n_y: int

    def __post_init__(self):
        for name in ("n_x", "n_d", "n_y"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise DataError(f"{name} must be a nonnegative integer, got {v!r}")
        if self.n_y < 1:
            raise DataError("n_y must be at least 1")

    @property
    def size(self) -> int:
        return self.n_x + 1 + self.n_y

    @property
    def warmup(self) -> int:
        """Number of leading samples that only seed the lag buffers."""
        return max(self.n_d + self.n_x, self.n_y)

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.n_x, self.n_d, self.n_y)


@dataclass(frozen=True, eq=False)
class WindowedBatch:
    U: np.ndarray
    Yhat: np.ndarray

    @property
    def B(self) -> int:
        return self.U.shape[0]

    @property
    def N(self) -> int:
        return self.U.shape[1]


def load_csv(path, u_column: str = "u", y_column: str = "y", name: str | None = None) -> SeriesDataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    us, ys = [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        for col in (u_column, y_column):
            if col not in cols:
                raise DataError(f"{path}: column {col!r} not found (have {cols})")
        # header is line 1
        for line, row in enumerate(reader, start=2):
            try:
                u, y = float(row[u_column]), float(row[y_column])
            except (TypeError, ValueError):
                raise DataError(f"{path}: non-numeric value on line {line}") from None
            if not (math.isfinite(u) and math.isfinite(y)):
                raise DataError(f"{path}: non-finite value on line {line}")
            us.append(u)
            ys.append(y)
    return SeriesDataset(np.array(us), np.array(ys), name=name or path.stem)


def _stats(x: np.ndarray, method: str, channel: str) -> tuple[float, float]:
    if method == "z-score":
        shift, scale = float(np.mean(x)), float(np.std(x))
        if scale == 0.0:
            raise DataError(f"zero variance in training {channel}; cannot z-score")
    elif method == "min-max":
        shift, scale = float(np.min(x)), float(np.max(x) - np.min(x))
        if scale == 0.0:
            raise DataError(f"zero range in training {channel}; cannot min-max scale")
    elif method == "none":
        shift, scale = 0.0, 1.0
    else:
        raise DataError(f"unknown normalization {method!r}")
    return shift, scale


def normalize(ds: SeriesDataset, method: str, train_fraction: float) -> SeriesDataset:
    """Scale u and y separately with statistics from the leading training part."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train fraction must lie in (0, 1), got {train_fraction}")
    n = int(math.floor(ds.K * train_fraction + 1e-9))
    if n < 1:
        raise DataError("training prefix is empty")
    us, uc = _stats(ds.u[:n], method, "input")
    ys, yc = _stats(ds.y[:n], method, "output")
    norm = Normalization(method, us, uc, ys, yc)
    return SeriesDataset((ds.u - us) / uc, (ds.y - ys) / yc, name=ds.name, normalization=norm)


def split_sizes(K: int, fractions) -> tuple[int, int, int]:
    fr = tuple(fractions)
    if len(fr) != 3 or any(f <= 0 for f in fr):
        raise DataError(f"need three positive split percentages, got {fr}")
    if abs(sum(fr) - 100) > 1e-9:
        raise DataError(f"split percentages must sum to 100, got {sum(fr)}")
    n_train = int(math.floor(K * fr[0] / 100 + 1e-9))
    n_val = int(math.floor(K * fr[1] / 100 + 1e-9))
    return n_train, n_val, K - n_train - n_val


def split(ds: SeriesDataset, fractions) -> tuple[SeriesDataset, SeriesDataset, SeriesDataset]:
    """Contiguous chronological train/val/test segments (percentages)."""
    n_train, n_val, _ = split_sizes(ds.K, fractions)
    cuts = [0, n_train, n_train + n_val, ds.K]
    parts = []
    for tag, (a, b) in zip(("train", "val", "test"), zip(cuts[:-1], cuts[1:])):
        parts.append(replace(ds, u=ds.u[a:b], y=ds.y[a:b], name=f"{ds.name}:{tag}"))
    return tuple(parts)


def window(ds: SeriesDataset, N: int) -> WindowedBatch:
    """All ``K - N`` length-``N`` trajectories; row ``m`` starts at sample ``m``."""
    if N < 1 or N >= ds.K:
        raise DataError(f"window length N={N} must satisfy 1 <= N < K={ds.K}")
    B = ds.K - N
    idx = np.arange(B)[:, None] + np.arange(N)[None, :]
    return WindowedBatch(ds.u[idx], ds.y[idx])


def build_regressor(u, y, k: int, spec: RegressorSpec) -> np.ndarray:
    """Regressor at 0-based index ``k`` from input history ``u`` and output history ``y``."""
    lo_u = k - spec.n_d - spec.n_x
    if lo_u < 0 or k - spec.n_y < 0 or k - spec.n_d >= len(u):
        raise DataError(f"insufficient history for k={k} with lags {spec.as_tuple()}")
    us = [u[k - spec.n_d - j] for j in range(spec.n_x + 1)]
    ys = [y[k - j] for j in range(1, spec.n_y + 1)]
    return np.array(us + ys, dtype=np.float64)
