#!/usr/bin/env python3
"""Compare training with and without the transport term.

Runs the stock experiment once per alpha value and prints a table of test
mAP and localization fraction. The interesting pair is alpha=0 (classifier
loss only) against alpha=1: classification barely moves, localization does.
"""

import argparse
import dataclasses
import sys
from pathlib import Path

from ctalign.cli import ExperimentConfig, run_train


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--alphas", default="0,1", help="comma-separated weights")
    parser.add_argument("--out", default="runs/alpha-sweep", help="artifact directory")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--epochs", type=int, default=30)
    args = parser.parse_args(argv)

    base = ExperimentConfig(seed=args.seed, epochs=args.epochs)
    rows = []
    for raw in args.alphas.split(","):
        alpha = float(raw)
        cfg = dataclasses.replace(base, alpha=alpha)
        print(f"--- alpha={alpha:g}")
        summary = run_train(cfg, Path(args.out) / f"alpha-{raw.strip()}")
        rows.append((alpha, summary))

    print()
    print(f"{'run':>12} {'test mAP':>10} {'localization':>13}")
    for alpha, summary in rows:
        label = "w/o CT" if alpha == 0 else f"alpha={alpha:g}"
        print(f"{label:>12} {summary['test_map']:>10.6f} {summary['localization']:>13.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
