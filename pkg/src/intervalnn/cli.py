"""Command-line pipeline: prepare, train-base, train-inn, evaluate, reproduce.

Exit codes: 0 success, 1 invalid input/config, 2 runtime or numeric failure.
Set ``INTERVALNN_LOG`` (e.g. ``DEBUG``) for more output.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import VARIANTS, ConfigError, ExperimentConfig, load_config
from .data import DataError, load_csv, normalize, split, split_sizes, window
from .inn import load_inn_checkpoint, predict_pi, save_inn_checkpoint, wrap
from .metrics import (SeedResult, aggregate, elasticity, picp, pinaw, rmse, write_boxplot_csv,
                      write_heatmaps, write_per_seed_csv)
from .models import (CrispTrainConfig, TrainingDiverged, init_params, load_checkpoint, rollout, save_checkpoint,
                     train_mse)
from .uq import UQTrainConfig, train_inn

log = logging.getLogger("intervalnn")


def _alpha_tag(alpha: float) -> str:
    return f"a{round(alpha * 100):02d}"


def crisp_path(cfg: ExperimentConfig, kind: str, seed: int) -> Path:
    return cfg.out_path / "crisp" / f"{kind}_seed{seed}.json"


def inn_path(cfg: ExperimentConfig, variant: str, alpha: float, seed: int) -> Path:
    return cfg.out_path / "inn" / f"{variant}_{_alpha_tag(alpha)}_seed{seed}.json"


def load_splits(cfg: ExperimentConfig):
    """Normalized dataset and its (train, val, test) splits."""
    ds = load_csv(cfg.data_path, cfg.dataset.u_column, cfg.dataset.y_column, name=cfg.name)
    fr = cfg.dataset.split
    split_sizes(ds.K, fr)
    if cfg.dataset.normalization != "none":
        ds = normalize(ds, cfg.dataset.normalization, fr[0] / 100.0)
    parts = split(ds, fr)
    for p in parts[:2]:
        if cfg.dataset.N >= p.K:
            raise DataError(f"window length N={cfg.dataset.N} must be smaller than the "
                            f"{p.name} split (K={p.K}); windowing needs N < K")
    return ds, parts


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True))


def cmd_prepare(cfg: ExperimentConfig) -> dict:
    ds, (tr, va, te) = load_splits(cfg)
    N = cfg.dataset.N
    raw = cfg.data_path.read_bytes()
    manifest = {
        "name": cfg.name,
        "source": str(cfg.dataset.path),
        "source_sha256": hashlib.sha256(raw).hexdigest(),
        "K": ds.K,
        "normalization": ds.normalization.to_dict(),
        "split": {"percent": list(cfg.dataset.split), "sizes": [tr.K, va.K, te.K]},
        "N": N,
        "B": {"train": tr.K - N, "val": va.K - N, "test": max(te.K - N, 0)},
    }
    _write_json(cfg.out_path / "manifest.json", manifest)
    return manifest


def _eval_rows(cfg: ExperimentConfig, part):
    if cfg.dataset.eval_mode == "sequence":
        return part.u[None, :], part.y[None, :]
    b = window(part, cfg.dataset.N)
    return b.U, b.Yhat


def cmd_train_base(cfg: ExperimentConfig, seed: int, kind: str) -> dict:
    mc = cfg.model(kind)
    ds, (tr, va, te) = load_splits(cfg)
    p0 = init_params(kind, mc.spec, mc.hidden, mc.activation, rng=np.random.default_rng(seed))
    tc = CrispTrainConfig(cfg.crisp_training.epochs, cfg.crisp_training.mbs, cfg.crisp_training.lr, seed)
    params, hist = train_mse(tr, va, p0, N=cfg.dataset.N, config=tc)
    U, Y = _eval_rows(cfg, te)
    r = rollout(params, U, Y)
    test_rmse = rmse(ds.denormalize_y(r.y), ds.denormalize_y(Y[:, r.start:]))
    path = crisp_path(cfg, kind, seed)
    sha = save_checkpoint(path, params, seed=seed, dataset=cfg.name,
                          normalization=ds.normalization.to_dict(), N=cfg.dataset.N)
    metrics = {"kind": kind, "seed": seed, "test_rmse": test_rmse, "checkpoint_sha256": sha,
               "best_val_mse": min(h["val_loss"] for h in hist), "epochs": len(hist) - 1}
    _write_json(path.with_name(path.stem + "_metrics.json"), metrics)
    log.info("%s seed %d: test RMSE %.4f", kind, seed, test_rmse)
    return metrics


def cmd_train_inn(cfg: ExperimentConfig, seed: int, alpha: float, variant: str) -> dict:
    kind, trick = _variant(variant)
    mc = cfg.model(kind)
    cpath = crisp_path(cfg, kind, seed)
    if not cpath.is_file():
        raise ConfigError(f"crisp checkpoint missing: {cpath} (run train-base first)")
    params, _, sha = load_checkpoint(cpath)
    ds, (tr, va, te) = load_splits(cfg)
    uc = cfg.uq
    tc = UQTrainConfig(alpha=alpha, lam=uc.lam, epochs=uc.epochs, mbs=uc.mbs, lr=uc.lr, r_h=mc.r_h,
                       r_o=mc.r_o, trick=trick, seed=seed, freeze_recurrent=mc.freeze_recurrent)
    path = inn_path(cfg, variant, alpha, seed)
    log_path = path.with_name(path.stem + "_log.jsonl")
    log_path.parent.mkdir(parents=True, exist_ok=True)
    with log_path.open("w") as fh:
        def on_epoch(rec):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

        delta, hist = train_inn(params, tr, va, tc, N=cfg.dataset.N, on_epoch=on_epoch)
    best = min(hist, key=lambda h: h["val_objective"])
    save_inn_checkpoint(path, delta, sha, variant=variant, alpha=alpha, seed=seed, r_h=mc.r_h, r_o=mc.r_o,
                        lam=uc.lam, best_epoch=best["epoch"])
    return {"variant": variant, "alpha": alpha, "seed": seed, "best_epoch": best["epoch"],
            "val_picp": best["val_picp"], "val_pinaw": best["val_pinaw"], "checkpoint": str(path)}


def _variant(variant: str):
    try:
        return VARIANTS[variant]
    except KeyError:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {sorted(VARIANTS)}") from None


def cmd_evaluate(cfg: ExperimentConfig, variant: str, alpha: float, seeds=None, svg: bool = False):
    kind, trick = _variant(variant)
    seeds = list(cfg.seeds if seeds is None else seeds)
    ds, (tr, va, te) = load_splits(cfg)
    U, Y = _eval_rows(cfg, te)
    results = []
    tag = f"{variant}_{_alpha_tag(alpha)}"
    report_dir = cfg.out_path / "report"
    for seed in seeds:
        cpath, ipath = crisp_path(cfg, kind, seed), inn_path(cfg, variant, alpha, seed)
        for p in (cpath, ipath):
            if not p.is_file():
                raise ConfigError(f"checkpoint missing: {p}")
        params, _, sha = load_checkpoint(cpath)
        delta, crisp_sha, _ = load_inn_checkpoint(ipath)
        if crisp_sha != sha:
            raise ConfigError(f"{ipath} was trained on a different crisp checkpoint")
        if delta.trick != trick:
            raise ConfigError(f"{ipath} uses trick {delta.trick!r}, variant {variant} needs {trick!r}")
        ip = wrap(params, delta)
        pi = predict_pi(params, ip, U, Y)
        target = ds.denormalize_y(Y[:, pi.start:])
        lo, hi = ds.denormalize_y(pi.lower), ds.denormalize_y(pi.upper)
        results.append(SeedResult(seed, rmse(ds.denormalize_y(pi.center), target),
                                  picp((lo, hi), target), pinaw((lo, hi), target)))
        write_heatmaps(elasticity(params, ip), report_dir / "heatmaps" / f"{tag}_seed{seed}", svg=svg)
    report = aggregate(results, cfg.name, variant, alpha)
    report.write_json(report_dir / f"{tag}.json")
    write_per_seed_csv(report, report_dir / f"{tag}_per_seed.csv")
    write_boxplot_csv(report, report_dir / f"{tag}_boxplot.csv")
    return report


def cmd_reproduce(cfg: ExperimentConfig, variants=None, alphas=None) -> list:
    cmd_prepare(cfg)
    variants = [v for v in (variants or sorted(VARIANTS)) if VARIANTS[v][0] in cfg.models]
    kinds = sorted({VARIANTS[v][0] for v in variants})
    for seed in cfg.seeds:
        for kind in kinds:
            cmd_train_base(cfg, seed, kind)
    reports = []
    for alpha in alphas or cfg.uq.alphas:
        for v in variants:
            for seed in cfg.seeds:
                cmd_train_inn(cfg, seed, alpha, v)
            reports.append(cmd_evaluate(cfg, v, alpha))
    return reports


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="intervalnn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", help="override the config's output directory")

    p = sub.add_parser("prepare", help="normalize, split and summarize the dataset")
    common(p)

    p = sub.add_parser("train-base", help="train the crisp model")
    common(p)
    p.add_argument("--seed", type=int, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--model", choices=["node", "lstm"])
    g.add_argument("--variant", choices=sorted(VARIANTS))

    p = sub.add_parser("train-inn", help="train interval radii on top of a crisp checkpoint")
    common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--variant", choices=sorted(VARIANTS), required=True)

    p = sub.add_parser("evaluate", help="test metrics, reports and heatmaps across seeds")
    common(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--variant", choices=sorted(VARIANTS), required=True)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--svg", action="store_true", help="also render heatmaps as SVG")

    p = sub.add_parser("reproduce", help="run the whole pipeline over variants and coverage targets")
    common(p)
    p.add_argument("--variant", choices=sorted(VARIANTS), action="append")
    p.add_argument("--alpha", type=float, action="append")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("INTERVALNN_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.output_dir = str(Path(args.out).resolve())
        if args.command == "prepare":
            result = cmd_prepare(cfg)
        elif args.command == "train-base":
            kind = args.model or VARIANTS[args.variant][0]
            result = cmd_train_base(cfg, args.seed, kind)
        elif args.command == "train-inn":
            result = cmd_train_inn(cfg, args.seed, args.alpha, args.variant)
        elif args.command == "evaluate":
            result = cmd_evaluate(cfg, args.variant, args.alpha, args.seeds, svg=args.svg).to_dict()
        else:
            result = [r.to_dict() for r in cmd_reproduce(cfg, args.variant, args.alpha)]
    except (ConfigError, DataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (TrainingDiverged, FloatingPointError, RuntimeError, ValueError) as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
