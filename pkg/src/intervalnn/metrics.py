"""Point and interval metrics, elasticity maps, seed aggregation and report files."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .inn import IntervalParams, PredictionInterval
from .models import ModelParams

__all__ = [
    "REPORT_SCHEMA",
    "ElasticityMap",
    "SeedResult",
    "UQReport",
    "rmse",
    "picp",
    "pinaw",
    "elasticity",
    "aggregate",
    "write_heatmaps",
    "write_boxplot_csv",
    "write_per_seed_csv",
]

REPORT_SCHEMA = 1
ELASTICITY_EPS = 1e-12


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("empty sequence")
    return a, b


def rmse(pred, target) -> float:
    pred, target = _pair(pred, target)
    return math.sqrt(float(np.mean((pred - target) ** 2)))


def _bounds(pi):
    if isinstance(pi, PredictionInterval):
        return np.asarray(pi.lower), np.asarray(pi.upper)
    lo, hi = pi
    return np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)


def picp(pi, target) -> float:
    """Percent of targets inside their (closed) interval."""
    lo, hi = _bounds(pi)
    lo, target = _pair(lo, target)
    hi, _ = _pair(hi, target)
    return 100.0 * float(np.mean((lo <= target) & (target <= hi)))


def pinaw(pi, target) -> float:
    """Mean interval width over the target range, in percent."""
    lo, hi = _bounds(pi)
    lo, target = _pair(lo, target)
    hi, _ = _pair(hi, target)
    R = float(np.max(target) - np.min(target))
    if R <= 0.0:
        raise ValueError("target range is zero; PINAW undefined")
    return 100.0 * float(np.mean(hi - lo)) / R


@dataclass
class ElasticityMap:
    values: np.ndarray
    flagged: np.ndarray  # entries whose crisp value was zero (guarded denominator)


def elasticity(params: ModelParams, iparams: IntervalParams | dict, granularity: str = "per-entry",
               eps: float = ELASTICITY_EPS) -> dict:
    """Interval width relative to the crisp parameter magnitude.

    ``per-entry``: ``|hi - lo| / |theta*|`` per weight (``eps`` replaces a
    zero denominator and the entry is flagged).  ``per-tensor``: ratio of
    Frobenius norms.  ``iparams`` may also be a mapping name -> (lo, hi).
    """
    bounds = iparams.bounds() if isinstance(iparams, IntervalParams) else iparams
    if set(bounds) != set(params.tensors):
        raise ValueError("interval parameters do not mirror the crisp model")
    out = {}
    for k, theta in params.tensors.items():
        lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds[k])
        theta = np.asarray(theta, dtype=np.float64)
        if lo.shape != theta.shape or hi.shape != theta.shape:
            raise ValueError(f"shape mismatch for {k!r}")
        if granularity == "per-entry":
            mag = np.abs(theta)
            flagged = mag < eps
            out[k] = ElasticityMap(np.abs(hi - lo) / np.maximum(mag, eps), flagged)
        elif granularity == "per-tensor":
            num = float(np.linalg.norm(hi - lo))
            den = float(np.linalg.norm(theta))
            out[k] = ElasticityMap(np.array(num / max(den, eps)), np.array(den < eps))
        else:
            raise ValueError(f"unknown granularity {granularity!r}")
    return out


@dataclass
class SeedResult:
    seed: int
    rmse: float
    picp: float
    pinaw: float

    def to_dict(self):
        return {"seed": self.seed, "rmse": self.rmse, "picp": self.picp, "pinaw": self.pinaw}


def _mean_std(vals) -> tuple[float, float]:
    a = np.asarray(vals, dtype=np.float64)
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


@dataclass
class UQReport:
    dataset: str
    variant: str
    alpha: float
    seeds: list
    per_seed: list
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    single_seed: bool = False

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA,
            "dataset": self.dataset,
            "variant": self.variant,
            "alpha": self.alpha,
            "n_seeds": len(self.seeds),
            "single_seed": self.single_seed,
            "seeds": list(self.seeds),
            "per_seed": [r.to_dict() for r in self.per_seed],
            "mean": self.mean,
            "std": self.std,
        }

    def write_json(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


def aggregate(results, dataset: str, variant: str, alpha: float) -> UQReport:
    """Mean and sample standard deviation (n-1) per metric across seeds."""
    results = list(results)
    if not results:
        raise ValueError("need at least one seed result")
    seeds = [r.seed for r in results]
    if len(set(seeds)) != len(seeds):
        raise ValueError(f"duplicate seeds {seeds}")
    mean, std = {}, {}
    for m in ("rmse", "picp", "pinaw"):
        mean[m], std[m] = _mean_std([getattr(r, m) for r in results])
    return UQReport(dataset, variant, alpha, seeds, results, mean, std, single_seed=len(results) == 1)


def aggregate_reports(reports) -> UQReport:
    """Merge reports of the same configuration (dataset, variant, alpha)."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports")
    keys = {(r.dataset, r.variant, r.alpha) for r in reports}
    if len(keys) != 1:
        raise ValueError(f"cannot aggregate mixed configurations: {sorted(keys)}")
    dataset, variant, alpha = keys.pop()
    return aggregate([s for r in reports for s in r.per_seed], dataset, variant, alpha)


def write_heatmaps(maps: dict, out_dir, svg: bool = False) -> list[Path]:
    """One CSV per tensor: rows = output units, columns = input units."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, em in maps.items():
        grid = np.atleast_2d(em.values)
        if np.ndim(em.values) == 1:
            grid = grid.T  # biases: one row per output unit
        p = out_dir / f"{name}.csv"
        with p.open("w", newline="") as fh:
            writer = csv.writer(fh)
            for row in grid:
                writer.writerow([repr(float(v)) for v in row])
        paths.append(p)
        if svg:
            (out_dir / f"{name}.svg").write_text(_svg_grid(grid))
    return paths


def _svg_grid(grid: np.ndarray, cell: int = 12) -> str:
    rows, cols = grid.shape
    top = float(np.max(grid)) if grid.size and np.max(grid) > 0 else 1.0
    rects = []
    for i in range(rows):
        for j in range(cols):
            shade = int(255 * (1.0 - min(float(grid[i, j]) / top, 1.0)))
            rects.append(f'<rect x="{j * cell}" y="{i * cell}" width="{cell}" height="{cell}" '
                         f'fill="rgb(255,{shade},{shade})"/>')
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{cols * cell}" height="{rows * cell}">'
            + "".join(rects) + "</svg>\n")


def write_per_seed_csv(report: UQReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "rmse", "picp", "pinaw"])
        for r in report.per_seed:
            w.writerow([r.seed, repr(r.rmse), repr(r.picp), repr(r.pinaw)])


def write_boxplot_csv(report: UQReport, path) -> None:
    """Per-seed ``(PICP - 100*alpha, PINAW)`` pairs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "alpha", "seed", "picp_minus_target", "pinaw"])
        for r in report.per_seed:
            w.writerow([report.variant, report.alpha, r.seed, repr(r.picp - 100.0 * report.alpha), repr(r.pinaw)])
