"""Run configuration: JSON parsing with defaults and strict validation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .ensemble import INITIAL_KINDS

__all__ = ["ConfigError", "GridConfig", "KdeConfig", "RunConfig", "parse_config", "config_from_dict"]

MODES = ("dsmc", "oracle", "compare", "check")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key path."""


@dataclass
class GridConfig:
    halfwidth: float = 6.0
    nodes: int = 21


@dataclass
class KdeConfig:
    bandwidth: float | None = None
    scale: float = 1.0


@dataclass
class RunConfig:
    """Validated settings for one run.

    ``output_times`` always starts at 0 and ends at ``t_end`` after
    validation.  ``dt`` of ``None`` selects the default ``0.01 / V_maj(0)`` for
    particles and ``oracle_dt`` for the grid.  ``sup_weight_s`` is the weight
    exponent ``s > 2`` used by the pointwise-growth monitors.
    """

    mode: str = "dsmc"
    alpha: float = 1.0
    particle_count: int = 10_000
    grid: GridConfig = field(default_factory=GridConfig)
    dt: float | None = None
    oracle_dt: float = 0.025
    t_end: float = 1.0
    output_times: list = field(default_factory=list)
    snapshot_times: list = field(default_factory=list)
    seed: int = 0
    initial_kind: str = "gaussian"
    kde: KdeConfig = field(default_factory=KdeConfig)
    quadrature_degree: int = 11
    majorant_slack: float = 1.0
    entropy_bins: int = 64
    sup_weight_s: float = 3.0
    output_dir: str = "out"

    def to_dict(self) -> dict:
        return asdict(self)


_NESTED = {"grid": GridConfig, "kde": KdeConfig}


def _err(path, msg):
    return ConfigError(f"{path}: {msg}")


def _real(d, key, path, *, positive=False, allow_none=False):
    x = d[key]
    if x is None and allow_none:
        return None
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise _err(path, "must be a finite number")
    if positive and x <= 0:
        raise _err(path, "must be positive")
    return float(x)


def _int(d, key, path, lo=None):
    x = d[key]
    if isinstance(x, bool) or not isinstance(x, int):
        raise _err(path, "must be an integer")
    if lo is not None and x < lo:
        raise _err(path, f"must be at least {lo}")
    return x


def _times(value, path, t_end):
    if isinstance(value, dict):
        unknown = set(value) - {"every"}
        if unknown or "every" not in value:
            raise _err(path, "expected a list of times or {\"every\": step}")
        step = _real(value, "every", f"{path}.every", positive=True)
        n = int(round(t_end / step))
        if abs(n * step - t_end) > 1e-9 * t_end:
            raise _err(f"{path}.every", "must divide t_end")
        return [t_end * k / n for k in range(n + 1)]
    if not isinstance(value, list):
        raise _err(path, "must be a list of times")
    times = []
    for i, x in enumerate(value):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise _err(f"{path}[{i}]", "must be a finite number")
        times.append(float(x))
    for i in range(1, len(times)):
        if times[i] <= times[i - 1]:
            raise _err(path, "must be sorted strictly increasing")
    if times and (times[0] < 0 or times[-1] > t_end):
        raise _err(path, "must lie within [0, t_end]")
    return times


def config_from_dict(raw: dict) -> RunConfig:
    """Validate ``raw`` (decoded JSON) and fill defaults; unknown keys are rejected."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>: config must be a JSON object")
    cfg = RunConfig()
    known = set(cfg.to_dict())
    for key in raw:
        if key not in known:
            raise _err(key, "unknown key")
    for key, cls in _NESTED.items():
        if key in raw:
            sub = raw[key]
            if not isinstance(sub, dict):
                raise _err(key, "must be an object")
            fields = set(asdict(cls()))
            for k in sub:
                if k not in fields:
                    raise _err(f"{key}.{k}", "unknown key")
    d = dict(raw)
    if "mode" in d:
        if d["mode"] not in MODES:
            raise _err("mode", f"must be one of {MODES}")
        cfg.mode = d["mode"]
    if "alpha" in d:
        a = d["alpha"]
        if isinstance(a, bool) or not isinstance(a, (int, float)) or not (0 < a <= 1):
            raise _err("alpha", "alpha must lie in (0,1]")
        cfg.alpha = float(a)
    if "particle_count" in d:
        cfg.particle_count = _int(d, "particle_count", "particle_count", lo=2)
    if "grid" in d:
        g = d["grid"]
        if "halfwidth" in g:
            cfg.grid.halfwidth = _real(g, "halfwidth", "grid.halfwidth", positive=True)
        if "nodes" in g:
            cfg.grid.nodes = _int(g, "nodes", "grid.nodes", lo=5)
    if "dt" in d:
        cfg.dt = _real(d, "dt", "dt", positive=True, allow_none=True)
    if "oracle_dt" in d:
        cfg.oracle_dt = _real(d, "oracle_dt", "oracle_dt", positive=True)
    if "t_end" in d:
        cfg.t_end = _real(d, "t_end", "t_end", positive=True)
    if "seed" in d:
        cfg.seed = _int(d, "seed", "seed", lo=0)
    if "initial_kind" in d:
        if d["initial_kind"] not in INITIAL_KINDS:
            raise _err("initial_kind", f"must be one of {INITIAL_KINDS}")
        cfg.initial_kind = d["initial_kind"]
    if "kde" in d:
        k = d["kde"]
        if "bandwidth" in k:
            cfg.kde.bandwidth = _real(k, "bandwidth", "kde.bandwidth", positive=True, allow_none=True)
        if "scale" in k:
            cfg.kde.scale = _real(k, "scale", "kde.scale", positive=True)
    if "quadrature_degree" in d:
        cfg.quadrature_degree = _int(d, "quadrature_degree", "quadrature_degree", lo=1)
    if "majorant_slack" in d:
        cfg.majorant_slack = _real(d, "majorant_slack", "majorant_slack")
        if cfg.majorant_slack < 1:
            raise _err("majorant_slack", "must be at least 1")
    if "entropy_bins" in d:
        cfg.entropy_bins = _int(d, "entropy_bins", "entropy_bins", lo=8)
    if "sup_weight_s" in d:
        cfg.sup_weight_s = _real(d, "sup_weight_s", "sup_weight_s")
        if cfg.sup_weight_s <= 2:
            raise _err("sup_weight_s", "must exceed 2")
    if "output_dir" in d:
        if not isinstance(d["output_dir"], str):
            raise _err("output_dir", "must be a string")
        cfg.output_dir = d["output_dir"]

    times = _times(d.get("output_times", [cfg.t_end * k / 10 for k in range(11)]),
                   "output_times", cfg.t_end)
    if not times or times[0] > 0:
        times.insert(0, 0.0)
    if times[-1] < cfg.t_end:
        times.append(cfg.t_end)
    cfg.output_times = times
    snaps = _times(d.get("snapshot_times", [0.0, cfg.t_end]), "snapshot_times", cfg.t_end)
    for i, s in enumerate(snaps):
        if not any(abs(s - t) <= 1e-12 * max(1.0, cfg.t_end) for t in times):
            raise _err(f"snapshot_times[{i}]", "must coincide with an output time")
    cfg.snapshot_times = snaps
    return cfg


def parse_config(path) -> RunConfig:
    """Read and validate a JSON config file."""
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{p}: file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    return config_from_dict(raw)
