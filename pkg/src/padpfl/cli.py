"""Command line entry point.

    padpfl run CONFIG [--out DIR] [--workers N]
    padpfl preset {1,2,3,4} [--epsilon E] [--non-private] [--out DIR] [--seed S]
    padpfl bounds CONFIG TRACE.csv [--out FILE]

Exit codes: 0 success, 1 configuration error, 2 runtime error.
The MNIST directory comes from ``data_dir`` in the config or ``PADPFL_MNIST_DIR``.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import report
from .config import ScenarioConfig, load_config, load_preset, with_overrides
from .errors import ConfigError, InvalidParameterError
from .experiment import Trace, run_variants
from .plot import line_chart

log = logging.getLogger("padpfl")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _write_bounds(cfg: ScenarioConfig, trace: Trace, out: Path, stem: str) -> None:
    if not cfg.private:
        return
    try:
        consts, rows = report.bound_rows(
            trace.metrics, trace.snapshots, cfg.privacy_params(), cfg.schedule().factors, cfg.mu, cfg.rho_minus
        )
    except (InvalidParameterError, ZeroDivisionError) as exc:
        log.warning("%s: bound not evaluated (%s)", trace.label, exc)
        return
    report.write_text(out / f"{stem}_bound.csv", report.bound_csv(rows))
    t, b_max, b_min, _, gap, ok = rows[-1]
    log.info(
        "%s: bound at T=%d is %.4g (max m) / %.4g (min m); realized gap %.4g; dominated=%s",
        trace.label, t, b_max, b_min, gap, bool(ok),
    )


def execute(cfg: ScenarioConfig, out: Path) -> list[Trace]:
    """Run every variant and write CSVs, sidecars, bound tables and the SVG."""
    out.mkdir(parents=True, exist_ok=True)
    report.write_text(out / "effective_config.json", cfg.dumps())
    traces = run_variants(cfg, keep_snapshots=True)
    variants = dict(cfg.variant_configs())
    for tr in traces:
        stem = report.slug(tr.label)
        report.write_text(out / f"{stem}.csv", report.metrics_csv(tr.metrics))
        if tr.snapshots:
            report.save_snapshots(out / f"{stem}_snapshots.npz", tr.snapshots)
        _write_bounds(variants[tr.label], tr, out, stem)
    series = {tr.label: ([m.round for m in tr.metrics], [m.global_loss for m in tr.metrics]) for tr in traces}
    privacy = f"eps={cfg.privacy.epsilon:g}" if cfg.private else "non-private"
    report.write_text(out / "loss.svg", line_chart(series, title=f"{cfg.name} ({privacy})", ylabel="training loss"))
    return traces


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.workers:
        cfg = with_overrides(cfg, workers=args.workers)
    out = Path(args.out or cfg.output_dir or f"runs/{cfg.name}")
    execute(cfg, out)
    print(out)
    return EXIT_OK


def _cmd_preset(args) -> int:
    cfg = load_preset(args.which, non_private=args.non_private)
    changes = {}
    if args.epsilon is not None:
        if args.non_private:
            raise ConfigError("--epsilon and --non-private are mutually exclusive")
        changes["privacy"] = dataclasses.replace(cfg.privacy, epsilon=args.epsilon)
        changes["name"] = f"{cfg.name}_eps{args.epsilon:g}"
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.workers:
        changes["workers"] = args.workers
    if args.rounds is not None:
        changes["rounds"] = args.rounds
    if changes:
        cfg = with_overrides(cfg, **changes)
    out = Path(args.out or f"runs/{cfg.name}")
    execute(cfg, out)
    print(out)
    return EXIT_OK


def _cmd_bounds(args) -> int:
    cfg = load_config(args.config)
    if not cfg.private:
        raise ConfigError("privacy: the bound needs a private configuration")
    if cfg.variants:
        raise ConfigError("variants: pass a single-variant config (see effective_config.json per run)")
    trace_path = Path(args.trace)
    metrics = report.read_metrics_csv(trace_path)
    snaps = report.load_snapshots(trace_path.with_name(trace_path.stem + "_snapshots.npz"))
    consts, rows = report.bound_rows(
        metrics, snaps, cfg.privacy_params(), cfg.schedule().factors, cfg.mu, cfg.rho_minus
    )
    text = report.bound_csv(rows)
    if args.out:
        report.write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    log.info("estimated constants: %s", consts)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="padpfl", description="Personalized-impact DP federated learning simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run a JSON scenario config")
    r.add_argument("config")
    r.add_argument("--out")
    r.add_argument("--workers", type=int)
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("preset", help="run a bundled scenario")
    s.add_argument("which", choices=["1", "2", "3", "4"])
    s.add_argument("--epsilon", type=float)
    s.add_argument("--non-private", action="store_true")
    s.add_argument("--seed", type=int)
    s.add_argument("--rounds", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_preset)

    b = sub.add_parser("bounds", help="evaluate the convergence bound against a recorded trace")
    b.add_argument("config")
    b.add_argument("trace")
    b.add_argument("--out")
    b.set_defaults(func=_cmd_bounds)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        if getattr(args, "config", None) and Path(exc.filename or "") == Path(args.config):
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
