"""Scenario configuration: JSON schema, validation and bundled presets.

A config file is one JSON object. Minimal example::

    {
      "name": "demo",
      "parts": [{"clients": 20, "samples": 150}, {"clients": 20, "samples": 150}],
      "corruption": [{"start_round": 0, "severity": ["severe", "none"]}],
      "impacts": [{"start_round": 0, "ratios": [0, 1]}],
      "privacy": {"epsilon": 5, "delta": 0.01, "clip_bound": 5, "revelations": 1}
    }

``privacy`` may also be the string ``"non-private"``. Impact segments give
either ``ratios`` (one relative weight per part, "0-1-2" style),
``per_part`` (absolute factor of each client in a part) or ``per_client``.
``variants`` lists labelled overrides of ``impacts`` and/or ``privacy``; every
variant is run under the same seed, data split and corruption.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .accounting import PrivacyParams
from .data import SEVERITY_DENSITIES
from .errors import ConfigError, InvalidParameterError
from .schedule import ImpactSchedule, part_impacts, ratio_impacts

NON_PRIVATE = "non-private"


@dataclass(frozen=True)
class PartSpec:
    clients: int
    samples: int = 150


@dataclass(frozen=True)
class PrivacySpec:
    epsilon: float
    delta: float = 0.01
    clip_bound: float = 5.0
    revelations: int = 1


@dataclass(frozen=True)
class CorruptionSegment:
    start_round: int
    severity: tuple  # one label or density per part


@dataclass(frozen=True)
class ImpactSegment:
    start_round: int
    ratios: tuple | None = None
    per_part: tuple | None = None
    per_client: tuple | None = None


@dataclass(frozen=True)
class Variant:
    label: str
    impacts: tuple[ImpactSegment, ...] | None = None
    privacy: PrivacySpec | str | None = None  # None: inherit


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    parts: tuple[PartSpec, ...]
    corruption: tuple[CorruptionSegment, ...]
    impacts: tuple[ImpactSegment, ...]
    privacy: PrivacySpec | str = NON_PRIVATE
    seed: int = 0
    rounds: int = 30
    learning_rate: float = 0.02
    local_epochs: int = 1
    batch_size: int | None = None  # None: full local batch
    mu: float = 0.01
    hidden_size: int = 64
    num_clients: int | None = None
    severity_densities: dict = field(default_factory=lambda: dict(SEVERITY_DENSITIES))
    label_skew: float | None = None
    test_samples: int | None = None
    workers: int = 1
    rho_minus: float = 0.0
    variants: tuple[Variant, ...] = ()
    output_dir: str | None = None
    data_dir: str | None = None

    # -- derived views -------------------------------------------------
    @property
    def counts(self) -> list[int]:
        return [p.clients for p in self.parts]

    @property
    def sizes(self) -> list[int]:
        return [p.samples for p in self.parts for _ in range(p.clients)]

    @property
    def private(self) -> bool:
        return self.privacy != NON_PRIVATE

    def part_of_client(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.parts)), self.counts)

    def schedule(self) -> ImpactSchedule:
        return build_schedule(self.impacts, self.counts, self.rounds)

    def privacy_params(self) -> PrivacyParams | None:
        if not self.private:
            return None
        p = self.privacy
        return PrivacyParams(p.epsilon, p.delta, p.clip_bound, p.revelations, self.rounds, self.sizes)

    def corruption_density(self, segment: CorruptionSegment, part: int) -> float:
        sev = segment.severity[part]
        if isinstance(sev, str):
            if sev not in self.severity_densities:
                raise ConfigError(f"corruption: unknown severity {sev!r}")
            return float(self.severity_densities[sev])
        return float(sev)

    def variant_configs(self) -> list[tuple[str, "ScenarioConfig"]]:
        """One concrete config per variant (or the config itself)."""
        if not self.variants:
            return [(self.name, self)]
        out = []
        for v in self.variants:
            cfg = dataclasses.replace(
                self,
                impacts=v.impacts if v.impacts is not None else self.impacts,
                privacy=v.privacy if v.privacy is not None else self.privacy,
                variants=(),
            )
            out.append((v.label, cfg))
        return out

    def to_dict(self) -> dict:
        return _strip(dataclasses.asdict(self))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _strip(obj):
    if isinstance(obj, dict):
        return {k: _strip(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_strip(v) for v in obj]
    return obj


def build_schedule(segments, counts, rounds) -> ImpactSchedule:
    n_rounds = max(rounds, 1)
    n_clients = sum(counts)
    starts = [s.start_round for s in segments]
    if not segments or starts[0] != 0:
        raise ConfigError("impacts: the first segment must start at round 0")
    if any(b <= a for a, b in zip(starts, starts[1:])):
        raise ConfigError("impacts: segment start rounds must be strictly increasing")
    rows = []
    for k, seg in enumerate(segments):
        given = [x for x in (seg.ratios, seg.per_part, seg.per_client) if x is not None]
        if len(given) != 1:
            raise ConfigError(f"impacts[{k}]: give exactly one of ratios, per_part, per_client")
        try:
            if seg.ratios is not None:
                row = ratio_impacts(counts, seg.ratios)
            elif seg.per_part is not None:
                row = part_impacts(counts, seg.per_part)
            else:
                row = np.asarray(seg.per_client, dtype=float)
        except InvalidParameterError as exc:
            raise ConfigError(f"impacts[{k}]: {exc}") from None
        if row.size != n_clients:
            raise ConfigError(f"impacts[{k}]: {row.size} factors for {n_clients} clients")
        end = starts[k + 1] if k + 1 < len(starts) else n_rounds
        rows.extend([row] * max(end - seg.start_round, 0))
    try:
        return ImpactSchedule(np.vstack(rows[:n_rounds]))
    except InvalidParameterError as exc:
        raise ConfigError(f"impacts: {exc}") from None


# -- parsing ---------------------------------------------------------------

def _privacy(raw, where):
    if raw is None:
        return None
    if raw == NON_PRIVATE:
        return NON_PRIVATE
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object or {NON_PRIVATE!r}")
    try:
        return PrivacySpec(**raw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _impact_segments(raw, where):
    if raw is None:
        return None
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"{where}: expected a non-empty list of segments")
    out = []
    for k, seg in enumerate(raw):
        try:
            seg = dict(seg)
            for key in ("ratios", "per_part", "per_client"):
                if key in seg:
                    seg[key] = tuple(float(x) for x in seg[key])
            out.append(ImpactSegment(**seg))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}[{k}]: {exc}") from None
    return tuple(out)


def from_dict(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(unknown)}")
    for req in ("name", "parts", "corruption", "impacts"):
        if req not in raw:
            raise ConfigError(f"missing required field {req!r}")
    try:
        raw["parts"] = tuple(PartSpec(**p) for p in raw["parts"])
    except TypeError as exc:
        raise ConfigError(f"parts: {exc}") from None
    try:
        raw["corruption"] = tuple(
            CorruptionSegment(int(c["start_round"]), tuple(c["severity"])) for c in raw["corruption"]
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"corruption: malformed segment ({exc})") from None
    raw["impacts"] = _impact_segments(raw["impacts"], "impacts")
    if "privacy" in raw:
        raw["privacy"] = _privacy(raw["privacy"], "privacy")
    variants = []
    for k, v in enumerate(raw.get("variants", ())):
        if "label" not in v:
            raise ConfigError(f"variants[{k}]: missing label")
        extra = set(v) - {"label", "impacts", "privacy"}
        if extra:
            raise ConfigError(f"variants[{k}]: unknown field(s) {sorted(extra)}")
        variants.append(
            Variant(
                str(v["label"]),
                _impact_segments(v.get("impacts"), f"variants[{k}].impacts"),
                _privacy(v.get("privacy"), f"variants[{k}].privacy"),
            )
        )
    raw["variants"] = tuple(variants)
    cfg = ScenarioConfig(**raw)
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig) -> None:
    def need(cond, field_name, msg):
        if not cond:
            raise ConfigError(f"{field_name}: {msg}")

    need(isinstance(cfg.seed, int), "seed", "must be an integer")
    need(cfg.rounds >= 0, "rounds", "must be nonnegative")
    need(cfg.learning_rate >= 0, "learning_rate", "must be nonnegative")
    need(cfg.local_epochs >= 0, "local_epochs", "must be nonnegative")
    need(cfg.batch_size is None or cfg.batch_size >= 1, "batch_size", "must be >= 1 or null")
    need(cfg.mu >= 0, "mu", "must be nonnegative")
    need(cfg.hidden_size >= 1, "hidden_size", "must be >= 1")
    need(cfg.workers >= 1, "workers", "must be >= 1")
    need(len(cfg.parts) >= 1, "parts", "at least one part is required")
    for k, p in enumerate(cfg.parts):
        need(p.clients >= 1 and p.samples >= 1, f"parts[{k}]", "clients and samples must be >= 1")
    n = sum(cfg.counts)
    need(cfg.num_clients is None or cfg.num_clients == n, "num_clients", f"is {cfg.num_clients} but parts hold {n}")
    need(cfg.test_samples is None or cfg.test_samples >= 1, "test_samples", "must be >= 1 or null")
    need(cfg.label_skew is None or cfg.label_skew > 0, "label_skew", "must be positive or null")
    for name, d in cfg.severity_densities.items():
        need(0.0 <= float(d) <= 1.0, f"severity_densities.{name}", "must lie in [0, 1]")

    starts = [c.start_round for c in cfg.corruption]
    need(bool(starts) and starts[0] == 0, "corruption", "the first segment must start at round 0")
    need(all(b > a for a, b in zip(starts, starts[1:])), "corruption", "start rounds must be strictly increasing")
    for k, seg in enumerate(cfg.corruption):
        need(len(seg.severity) == len(cfg.parts), f"corruption[{k}]", f"needs one severity per part ({len(cfg.parts)})")
        for j in range(len(cfg.parts)):
            d = cfg.corruption_density(seg, j)
            need(0.0 <= d <= 1.0, f"corruption[{k}]", f"density {d} outside [0, 1]")

    for label, sub in cfg.variant_configs():
        where = "" if label == cfg.name and not cfg.variants else f"variant {label!r}: "
        try:
            sched = sub.schedule()
        except ConfigError as exc:
            raise ConfigError(f"{where}{exc}") from None
        if sub.private and sub.rounds > 0:
            try:
                sub.privacy_params()
            except InvalidParameterError as exc:
                raise ConfigError(f"{where}privacy: {exc}") from None
        need(sched.num_clients == n, "impacts", "schedule width does not match the number of clients")


def loads(text: str) -> ScenarioConfig:
    if not text.strip():
        raise ConfigError("empty config")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return from_dict(raw)


def load_config(path) -> ScenarioConfig:
    return loads(Path(path).read_text())


PRESETS = {1: "scenario1", 2: "scenario2", 3: "scenario3", 4: "scenario4"}


def preset_text(name: str) -> str:
    return resources.files("padpfl.presets").joinpath(f"{name}.json").read_text()


def load_preset(which, non_private: bool = False) -> ScenarioConfig:
    """Bundled preset by number (1-4) or file stem."""
    name = PRESETS.get(int(which), None) if str(which).isdigit() else str(which)
    if name is None:
        raise ConfigError(f"no preset {which!r}; choose one of {sorted(PRESETS)}")
    if non_private:
        name += "_nonprivate"
    try:
        return loads(preset_text(name))
    except FileNotFoundError:
        raise ConfigError(f"no preset named {name!r}") from None


def with_overrides(cfg: ScenarioConfig, **changes: Any) -> ScenarioConfig:
    new = dataclasses.replace(cfg, **changes)
    validate(new)
    return new
