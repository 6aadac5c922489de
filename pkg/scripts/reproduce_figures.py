"""Run every bundled scenario in non-private mode and at two privacy levels.

Each (scenario, setting) pair gets its own output directory with per-variant
CSVs and a loss.svg comparing the impact assignments.

    python scripts/reproduce_figures.py --out figures [--scenarios 1 4] [--seed 0]
"""

import argparse
import dataclasses
import logging
from pathlib import Path

from padpfl.cli import execute
from padpfl.config import load_preset, with_overrides


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="figures")
    ap.add_argument("--scenarios", nargs="+", type=int, default=[1, 2, 3, 4])
    ap.add_argument("--epsilons", nargs="+", type=float, default=[5.0, 20.0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    for k in args.scenarios:
        base = with_overrides(load_preset(k, non_private=True), seed=args.seed, workers=args.workers)
        execute(base, Path(args.out) / f"scenario{k}_nonprivate")
        for eps in args.epsilons:
            cfg = load_preset(k)
            cfg = with_overrides(
                cfg,
                seed=args.seed,
                workers=args.workers,
                privacy=dataclasses.replace(cfg.privacy, epsilon=eps),
            )
            execute(cfg, Path(args.out) / f"scenario{k}_eps{eps:g}")


if __name__ == "__main__":
    main()
