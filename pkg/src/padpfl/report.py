"""CSV and sidecar I/O for run traces, plus the bound-vs-round table."""

from __future__ import annotations

import csv
import io
import re
from pathlib import Path

import numpy as np

from .accounting import PrivacyParams
from .bounds import convergence_bound, estimate_constants
from .errors import FormatError
from .federation import RoundMetrics, RoundSnapshot

METRICS_HEADER = (
    "round",
    "train_loss",
    "test_accuracy",
    "client_noise_norm",
    "server_noise_norm",
    "max_gamma",
    "grad_norm",
)
BOUND_HEADER = ("round", "bound_max_m", "bound_min_m", "bound_adaptive", "realized_gap", "dominated")


def slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", label).strip("_") or "run"


def _fmt(x) -> str:
    # repr round-trips exactly, which keeps files byte-stable.
    return repr(float(x)) if not isinstance(x, (int, np.integer, bool, str)) else str(x)


def metrics_csv(metrics: list[RoundMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for m in metrics:
        w.writerow(
            [
                m.round,
                _fmt(m.global_loss),
                _fmt(m.test_accuracy),
                _fmt(m.client_noise_norm),
                _fmt(m.server_noise_norm),
                _fmt(m.max_gamma),
                _fmt(m.grad_norm_global),
            ]
        )
    return buf.getvalue()


def read_metrics_csv(path) -> list[RoundMetrics]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != METRICS_HEADER:
        raise FormatError(f"{path}: expected header {','.join(METRICS_HEADER)}")
    out = []
    for k, row in enumerate(rows[1:], start=2):
        try:
            r, loss, acc, cn, sn, g, gn = row
            out.append(RoundMetrics(int(r), float(loss), float(acc), float(cn), float(sn), [float(g)], float(gn)))
        except ValueError as exc:
            raise FormatError(f"{path}, line {k}: {exc}") from None
    return out


_SNAP_FIELDS = ("round", "params", "global_grad", "local_grad_norms", "local_losses", "divergences", "impacts", "loss")


def save_snapshots(path, snapshots: list[RoundSnapshot]) -> None:
    arrays = {f: np.stack([np.asarray(getattr(s, f)) for s in snapshots]) for f in _SNAP_FIELDS}
    np.savez_compressed(path, **arrays)


def load_snapshots(path) -> list[RoundSnapshot]:
    try:
        z = np.load(path)
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    missing = [f for f in _SNAP_FIELDS if f not in z]
    if missing:
        raise FormatError(f"{path}: missing arrays {missing}")
    n = len(z["round"])
    return [
        RoundSnapshot(
            int(z["round"][k]),
            z["params"][k],
            z["global_grad"][k],
            z["local_grad_norms"][k],
            z["local_losses"][k],
            z["divergences"][k],
            z["impacts"][k],
            float(z["loss"][k]),
        )
        for k in range(n)
    ]


def bound_rows(metrics, snapshots, privacy: PrivacyParams, factors, mu: float, rho_minus: float = 0.0):
    """Rows of :data:`BOUND_HEADER`, one per recorded round.

    ``realized_gap`` is ``L(x~_t) - min`` observed loss; ``dominated`` flags
    whether the max-m bound at round ``t`` is at least that gap.
    """
    consts = estimate_constants(metrics, snapshots, mu, rho_minus)
    losses = [m.global_loss for m in metrics]
    lo = min(losses)
    rows = []
    for m in metrics:
        t = m.round
        b_max = convergence_bound(consts, privacy, factors, rounds=t, size_convention="max")
        b_min = convergence_bound(consts, privacy, factors, rounds=t, size_convention="min")
        b_ad = convergence_bound(consts, privacy, factors, adaptive=True, rounds=t)
        gap = m.global_loss - lo
        rows.append((t, b_max, b_min, b_ad, gap, int(b_max >= gap)))
    return consts, rows


def bound_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BOUND_HEADER)
    for r in rows:
        w.writerow([r[0], *(_fmt(x) for x in r[1:5]), r[5]])
    return buf.getvalue()


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)

