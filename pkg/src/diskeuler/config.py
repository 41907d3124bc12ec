"""Run configuration: flat ``key = value`` sections in a plain text file.

Sections are ``[grid]``, ``[initial_data]``, ``[time]``, ``[diagnostics]``
and ``[output]``.  Every key has a default, so an empty file is a valid
configuration.  Lists are comma separated; ``auto`` selects a value derived
from the initial data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .field import ConfigurationError, DataParams
from .grid import GridSpec

KINDS = ("ks", "strip", "unit", "zero", "radial")
CFL_MODES = ("local", "global")


@dataclass(frozen=True)
class GridConfig:
    nr: int = 193
    ntheta: int = 481
    q: float = 2.0
    theta_h0: float = 1e-23
    theta_band: float = 0.6
    wall_h0: float = 1e-23
    wall_band: float = 0.6


@dataclass(frozen=True)
class InitialDataConfig:
    kind: str = "ks"
    epsilon: float = 0.05
    delta: float = 0.2
    p: float = 3.0
    smoothing: float = 0.5
    strip_width: float = 0.0        # 0 selects delta / 2


@dataclass(frozen=True)
class TimeConfig:
    T_final: float = 3.0
    cfl: float = 0.5
    dt_max: float = 0.02
    record_cadence: float = 0.125
    cfl_mode: str = "local"
    two_velocity: bool = False


@dataclass(frozen=True)
class DiagnosticsConfig:
    gamma: float = math.pi / 16
    scan_radii: tuple = (0.1, 0.05, 0.025, 0.0125)
    scan_angles: int = 5
    segment_samples: int = 64
    segment_refine: int = 16
    occupancy_probes: int = 24
    omega_sub: int = 3
    cone_probes: int = 16
    path_probes: int = 100
    strip_deltas: tuple = (0.01, 0.001)
    tracer_x1: tuple | str = "auto"
    tracer_points: tuple | str = "auto"


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    snapshot_cadence: float = 1.5
    formats: tuple = ("csv", "json")


@dataclass(frozen=True)
class SimConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    initial_data: InitialDataConfig = field(default_factory=InitialDataConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def grid_spec(self) -> GridSpec:
        g = self.grid
        return GridSpec(nr=g.nr, ntheta=g.ntheta, q=g.q, theta_h0=g.theta_h0,
                        theta_band=g.theta_band, wall_h0=g.wall_h0, wall_band=g.wall_band)

    def data_params(self) -> DataParams:
        d = self.initial_data
        return DataParams(epsilon=d.epsilon, delta=d.delta, cutoff_exponent=d.p,
                          smoothing_width=d.smoothing)

    def strip_width(self) -> float:
        d = self.initial_data
        return d.strip_width if d.strip_width > 0 else d.delta / 2

    def with_section(self, name, **changes) -> "SimConfig":
        return replace(self, **{name: replace(getattr(self, name), **changes)})


SECTIONS = {f.name: f.default_factory for f in fields(SimConfig)}


def _parse_value(text, default, key):
    text = text.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean for {key}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple) or key in ("tracer_x1", "tracer_points"):
        if text.lower() == "auto":
            return "auto"
        if text == "":
            return ()
        items = [s.strip() for s in text.split(",")]
        if key == "formats":
            return tuple(items)
        if key == "tracer_points":
            pts = []
            for it in items:
                a, b = it.split()
                pts.append((float(a), float(b)))
            return tuple(pts)
        return tuple(float(s) for s in items)
    return text


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        out = []
        for it in v:
            if isinstance(it, tuple):
                out.append(" ".join(repr(float(c)) for c in it))
            else:
                out.append(repr(it) if isinstance(it, float) else str(it))
        return ", ".join(out)
    return str(v)


def validate(cfg: SimConfig) -> SimConfig:
    """Range checks; raises ConfigurationError naming the offending key."""
    def need(cond, key, msg):
        if not cond:
            raise ConfigurationError(f"{key}: {msg}")

    g = cfg.grid
    need(g.nr >= 8, "grid.nr", "must be >= 8")
    need(g.ntheta >= 8, "grid.ntheta", "must be >= 8")
    need(g.q >= 1.0, "grid.q", "must be >= 1")
    need(g.theta_h0 >= 0.0, "grid.theta_h0", "must be >= 0")
    need(0.0 < g.theta_band < 1.0, "grid.theta_band", "must lie in (0, 1)")
    need(g.wall_h0 >= 0.0, "grid.wall_h0", "must be >= 0")
    need(0.0 < g.wall_band < 1.0, "grid.wall_band", "must lie in (0, 1)")
    d = cfg.initial_data
    need(d.kind in KINDS, "initial_data.kind", f"must be one of {', '.join(KINDS)}")
    need(0.0 < d.epsilon < 1.0, "initial_data.epsilon", "must lie in (0, 1)")
    need(0.0 < d.delta < 1.0, "initial_data.delta", "must lie in (0, 1)")
    need(d.p > 1.0, "initial_data.p", "must be > 1")
    need(0.0 < d.smoothing < 1.0, "initial_data.smoothing", "must lie in (0, 1)")
    need(0.0 <= d.strip_width <= d.delta, "initial_data.strip_width", "must lie in [0, delta]")
    if d.kind == "ks":
        need(d.epsilon < d.delta, "initial_data.epsilon",
             f"constraint epsilon < delta violated ({d.epsilon} >= {d.delta})")
    t = cfg.time
    need(t.T_final >= 0.0, "time.T_final", "must be >= 0")
    need(0.0 < t.cfl <= 1.0, "time.cfl", "must lie in (0, 1]")
    need(t.dt_max > 0.0, "time.dt_max", "must be > 0")
    need(t.record_cadence > 0.0, "time.record_cadence", "must be > 0")
    need(t.cfl_mode in CFL_MODES, "time.cfl_mode", f"must be one of {', '.join(CFL_MODES)}")
    s = cfg.diagnostics
    need(0.0 < s.gamma < math.pi / 4, "diagnostics.gamma", "must lie in (0, pi/4)")
    need(len(s.scan_radii) >= 2 and all(r > 0 for r in s.scan_radii),
         "diagnostics.scan_radii", "need at least two positive radii")
    need(all(a > b for a, b in zip(s.scan_radii, s.scan_radii[1:])),
         "diagnostics.scan_radii", "must be strictly descending")
    need(s.scan_angles >= 1, "diagnostics.scan_angles", "must be >= 1")
    need(s.segment_samples >= 4, "diagnostics.segment_samples", "must be >= 4")
    need(s.segment_refine >= 2, "diagnostics.segment_refine", "must be >= 2")
    need(s.occupancy_probes >= 2, "diagnostics.occupancy_probes", "must be >= 2")
    need(s.omega_sub >= 1, "diagnostics.omega_sub", "must be >= 1")
    need(s.cone_probes >= 1, "diagnostics.cone_probes", "must be >= 1")
    need(s.path_probes >= 1, "diagnostics.path_probes", "must be >= 1")
    need(all(0.0 < x < 1.0 for x in s.strip_deltas), "diagnostics.strip_deltas", "must lie in (0, 1)")
    if s.tracer_x1 != "auto":
        need(all(0.0 <= x < 1.0 for x in s.tracer_x1), "diagnostics.tracer_x1", "must lie in [0, 1)")
    if s.tracer_points != "auto":
        need(all(x1 >= 0 and x1 ** 2 + (x2 - 1) ** 2 <= 1 for x1, x2 in s.tracer_points),
             "diagnostics.tracer_points", "points must lie in the closed half disk")
    o = cfg.output
    need(o.snapshot_cadence >= 0.0, "output.snapshot_cadence", "must be >= 0")
    if o.snapshot_cadence > 0:
        k = o.snapshot_cadence / t.record_cadence
        need(abs(k - round(k)) < 1e-9, "output.snapshot_cadence",
             "must be a multiple of time.record_cadence")
    need(set(o.formats) <= {"csv", "json", "bin"}, "output.formats", "allowed: csv, json, bin")
    return cfg


def parse_text(text: str, source="<string>") -> SimConfig:
    values = {name: {} for name in SECTIONS}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigurationError(f"{source}:{lineno}: malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigurationError(f"{source}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        if section is None:
            raise ConfigurationError(f"{source}:{lineno}: key outside of any section")
        key, val = (s.strip() for s in line.split("=", 1))
        defaults = SECTIONS[section]()
        if not hasattr(defaults, key):
            raise ConfigurationError(f"{source}:{lineno}: unknown key {section}.{key}")
        try:
            values[section][key] = _parse_value(val, getattr(defaults, key), key)
        except ValueError as exc:
            raise ConfigurationError(f"{source}:{lineno}: bad value for {section}.{key}: {exc}") from None
    cfg = SimConfig(**{name: SECTIONS[name]().__class__(**kv) if kv else SECTIONS[name]()
                       for name, kv in values.items()})
    return validate(cfg)


def parse_config(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    return parse_text(text, str(path))


def serialize(cfg: SimConfig) -> str:
    lines = []
    for f in fields(SimConfig):
        sec = getattr(cfg, f.name)
        lines.append(f"[{f.name}]")
        for sf in fields(sec):
            lines.append(f"{sf.name} = {_format_value(getattr(sec, sf.name))}")
        lines.append("")
    return "\n".join(lines)
