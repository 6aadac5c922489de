"""Personalized impacts at a strict budget versus identical impacts at a loose one.

Prints the final training loss of scenario 1 with "0-1-2" impacts at
``--strict`` and identical impacts at ``--loose`` for several master seeds,
plus the per-coordinate noise levels each setting implies.

    python scripts/privacy_tradeoff.py --seeds 0 1 2 3 4 --strict 5 --loose 20
"""

import argparse
import dataclasses

from padpfl.accounting import calibrate_schedule
from padpfl.config import ImpactSegment, load_preset, with_overrides
from padpfl.experiment import run_trace


def variant(seed, eps, identical):
    cfg = load_preset(1)
    changes = dict(seed=seed, variants=(), privacy=dataclasses.replace(cfg.privacy, epsilon=eps))
    if identical:
        changes["impacts"] = (ImpactSegment(0, ratios=(1.0, 1.0, 1.0)),)
    return with_overrides(cfg, **changes)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3, 4])
    ap.add_argument("--strict", type=float, default=5.0)
    ap.add_argument("--loose", type=float, default=20.0)
    args = ap.parse_args()

    for label, eps, ident in (("personalized", args.strict, False), ("identical", args.loose, True)):
        cfg = variant(0, eps, ident)
        cal = calibrate_schedule(cfg.privacy_params(), cfg.schedule().factors)
        print(f"{label:>12} eps={eps:g}: sigma_C={cal.client_sigma:.5f} sigma_S={cal.server_sigma:.5f} "
              f"total={cal.total_sigma:.5f} (clip bound {cfg.privacy.clip_bound:g})")

    wins = 0
    for s in args.seeds:
        a = run_trace(variant(s, args.strict, False)).metrics[-1].global_loss
        b = run_trace(variant(s, args.loose, True)).metrics[-1].global_loss
        wins += a < b
        print(f"seed {s}: personalized {a:.4f}  identical {b:.4f}")
    print(f"personalized wins {wins}/{len(args.seeds)}")


if __name__ == "__main__":
    main()
