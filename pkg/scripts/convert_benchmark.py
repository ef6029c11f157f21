#!/usr/bin/env python3
"""Convert a downloaded system-identification benchmark file to the ``u,y`` CSV layout.

Supported inputs
----------------
* whitespace-separated text (DaISy ``.dat`` files), columns picked by index
* MATLAB ``.mat`` files, variables picked by name (needs scipy)

Examples::

    # DaISy dryer.dat: column 0 = voltage (u), column 1 = air temperature (y)
    python3 scripts/convert_benchmark.py dryer.dat data/hair_dryer.csv --u 0 --y 1

    # DaISy exchanger.dat: column 0 = time, 1 = liquid rate (u), 2 = outlet temperature (y)
    python3 scripts/convert_benchmark.py exchanger.dat data/heat_exchanger.csv --u 1 --y 2

    # MATLAB mrdamper.mat: V = velocity (u), F = force (y)
    python3 scripts/convert_benchmark.py mrdamper.mat data/mr_damper.csv --u V --y F

The package never downloads data; fetch the originals yourself.
"""
import argparse
import csv
import sys
from pathlib import Path

import numpy as np


def load_text(path: Path, u: str, y: str):
    table = np.loadtxt(path, ndmin=2)
    return table[:, int(u)], table[:, int(y)]


def load_mat(path: Path, u: str, y: str):
    try:
        from scipy.io import loadmat
    except ImportError:
        sys.exit("reading .mat files needs scipy (pip install scipy)")
    doc = loadmat(path)
    return np.ravel(doc[u]), np.ravel(doc[y])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src", type=Path)
    ap.add_argument("dst", type=Path)
    ap.add_argument("--u", required=True, help="input column index (text) or variable name (.mat)")
    ap.add_argument("--y", required=True, help="output column index (text) or variable name (.mat)")
    ap.add_argument("--limit", type=int, help="keep only the first LIMIT samples")
    args = ap.parse_args(argv)

    loader = load_mat if args.src.suffix.lower() == ".mat" else load_text
    u, y = loader(args.src, args.u, args.y)
    if len(u) != len(y):
        sys.exit(f"input and output lengths differ: {len(u)} vs {len(y)}")
    if args.limit:
        u, y = u[:args.limit], y[:args.limit]
    args.dst.parent.mkdir(parents=True, exist_ok=True)
    with args.dst.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "y"])
        for a, b in zip(u, y):
            w.writerow([repr(float(a)), repr(float(b))])
    print(f"wrote {len(u)} samples to {args.dst}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
