"""Time evolution: semi-Lagrangian vorticity transport, tracers and a(t), b(t).

Each step solves for the stream function, traces backward characteristics
from every node with a two-stage midpoint rule and samples the old field at
the feet with the limited cubic interpolant.  Tracers and the comparison
abscissae a(t) < b(t) are advanced with the velocity at both ends of the
step, which keeps them second order in time.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .biot_savart import (StreamField, omega_factor, scaled_u1_from_stream, segment_extrema,
                          solve_stream, velocity_from_stream, cell_samples)
from .config import SimConfig
from .field import (SnapshotError, VorticityField, build_ks_data, build_strip_data,
                    field_from_function, grad_sup_fd, level_set_area, read_snapshot, sample,
                    sup_norm, write_snapshot, zero_field)
from .geometry import (DomainError, boundary_height, boundary_point, onto_circle, project_to_disk,
                       wall_offset)
from .grid import PolarGrid, interp_cubic, to_grid_polar
from .growth import DiagnosticsRecord, residual_B_spectral, sector_fan

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# time step

def cfl_dt(fld: VorticityField, cfl: float, dt_max=0.02, stream: StreamField | None = None,
           mode="global"):
    """Time step from the Courant condition, capped by ``dt_max``.

    ``global``: cfl * (min cell diameter) / (max speed).
    ``local``: cfl / max over nodes of |u_r|/dr + |u_theta|/max(r dtheta, dr),
    a directional Courant number; appropriate on strongly graded grids where
    the smallest cells sit at a stagnation point.  The angular spacing is
    floored by the radial one so the clustered arcs near the polar centre do
    not dictate the step (the characteristic scheme is stable there).
    """
    if not (0.0 < cfl <= 1.0):
        raise ValueError(f"cfl must lie in (0, 1], got {cfl}")
    if stream is None:
        stream = solve_stream(fld)
    g = fld.grid
    if mode == "global":
        vmax = stream.speed_max
        if vmax == 0.0:
            return float(dt_max)
        return float(min(dt_max, cfl * g.min_cell_diameter / vmax))
    if mode != "local":
        raise ValueError(f"unknown cfl mode {mode!r}")
    ur, ut = stream.polar_velocity
    hr, ht = g.node_spacing
    rate = np.abs(ur) / hr[:, None]
    arc = np.maximum(g.r[1:, None] * ht[None, :], hr[1:, None])
    rate[1:] += np.abs(ut[1:]) / arc
    # the centre row has no angular extent; bound it by the speed over dr
    rate[0] = np.hypot(ur[0], ut[0]) / hr[0]
    rmax = float(np.max(rate))
    if rmax == 0.0:
        return float(dt_max)
    return float(min(dt_max, cfl / rmax))


def _trace_feet(grid: PolarGrid, vel, dt):
    """Backward midpoint characteristic feet of all nodes; ``vel(x1, x2)`` -> (u1, u2)."""
    x1, x2 = grid.points
    x1 = x1.ravel()
    x2 = x2.ravel()
    v1, v2 = vel(x1, x2)
    m1 = x1 - 0.5 * dt * v1
    m2 = x2 - 0.5 * dt * v2
    m1, m2, _ = project_to_disk(m1, m2)
    w1, w2 = vel(m1, m2)
    f1 = x1 - dt * w1
    f2 = x2 - dt * w2
    # the wall row moves along the wall; restore it exactly without counting
    wall = np.zeros(grid.shape, dtype=bool)
    wall[-1] = True
    wall = wall.ravel()
    f1[wall], f2[wall] = onto_circle(f1[wall], f2[wall])
    # straight chords near the curved wall overshoot by O((dt |u|)^2); only
    # feet beyond that consistency margin count as projected
    margin = (dt * float(np.max(np.hypot(w1, w2)))) ** 2
    over = wall_offset(f1, f2) > margin
    f1, f2, _ = project_to_disk(f1, f2)
    return f1, f2, int(np.count_nonzero(over & ~wall))


def _resample(fld: VorticityField, f1, f2, time):
    r, th, sign = to_grid_polar(f1, f2, fld.parity)
    vals = sign * interp_cubic(fld.grid, fld.values, np.minimum(r, 0.0), th, fld.parity)
    return fld.with_values(vals.reshape(fld.grid.shape), time)


def _stream_velocity(stream):
    def vel(a, b):
        return velocity_from_stream(stream, a, b)
    return vel


def _average_velocity(s0, s1):
    def vel(a, b):
        u0 = velocity_from_stream(s0, a, b)
        u1 = velocity_from_stream(s1, a, b)
        return 0.5 * (u0[0] + u1[0]), 0.5 * (u0[1] + u1[1])
    return vel


@dataclass(frozen=True)
class StepResult:
    field: VorticityField
    projected: int


def step(fld: VorticityField, dt: float, stream: StreamField | None = None,
         two_velocity=False) -> StepResult:
    """Advance vorticity by ``dt`` along backward characteristics.

    The velocity is frozen at the start of the step unless ``two_velocity``,
    in which case a predictor field supplies the end-of-step velocity and
    both stages use the average.
    """
    if stream is None:
        stream = solve_stream(fld)
    f1, f2, nproj = _trace_feet(fld.grid, _stream_velocity(stream), dt)
    new = _resample(fld, f1, f2, fld.time + dt)
    if two_velocity:
        pred = solve_stream(new)
        f1, f2, nproj = _trace_feet(fld.grid, _average_velocity(stream, pred), dt)
        new = _resample(fld, f1, f2, fld.time + dt)
    if nproj:
        log.debug("t=%.6g: %d characteristic feet projected onto the boundary", fld.time, nproj)
    return StepResult(new, nproj)


# ---------------------------------------------------------------------------
# tracers

@dataclass(frozen=True)
class TracerSet:
    positions: np.ndarray           # (n, 2)
    labels: tuple
    on_boundary: np.ndarray         # (n,) bool

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "on_boundary", np.asarray(self.on_boundary, dtype=bool).reshape(-1))
        if not (len(self.positions) == len(self.labels) == len(self.on_boundary)):
            raise ValueError("tracer arrays differ in length")

    def __len__(self):
        return len(self.labels)


def make_tracers(boundary_x1=(), points=()) -> TracerSet:
    pos, labels, onb = [], [], []
    for k, a in enumerate(boundary_x1):
        pos.append(tuple(float(c) for c in boundary_point(a)))
        labels.append(f"wall{k + 1}")
        onb.append(True)
    for k, p in enumerate(points):
        pos.append((float(p[0]), float(p[1])))
        labels.append(f"point{k + 1}")
        onb.append(False)
    return TracerSet(np.array(pos, dtype=float).reshape(-1, 2), tuple(labels), np.array(onb, dtype=bool))


def _to_wall(p, onb):
    p = p.copy()
    if np.any(onb):
        q1, q2 = onto_circle(p[onb, 0], p[onb, 1])
        p[onb] = np.column_stack([q1, q2])
    return p


def _wall_rate(stream: StreamField, alpha):
    """u_theta / theta on the wall row at arc angles ``alpha`` (odd data: smooth, even in alpha)."""
    th = stream.grid.theta
    ut = stream.polar_velocity[1][-1]
    ratio = np.empty_like(th)
    ratio[1:] = ut[1:] / th[1:]
    ratio[0] = ratio[1]
    return np.interp(np.abs(alpha), th, ratio)


def _advance_wall(alpha, dt, stream, stream_next):
    """Exponential midpoint rule for d(alpha)/dt = alpha g(alpha); exact for uniform contraction."""
    g0 = _wall_rate(stream, alpha)
    mid = alpha * np.exp(0.5 * dt * g0)
    g = _wall_rate(stream, mid)
    if stream_next is not None:
        g = 0.5 * (g + _wall_rate(stream_next, mid))
    return alpha * np.exp(dt * g)


def advance_tracers(tracers: TracerSet, fld: VorticityField, dt: float,
                    stream: StreamField | None = None,
                    stream_next: StreamField | None = None) -> TracerSet:
    """Forward midpoint update; wall tracers are put back on the circle after each stage.

    With ``stream_next`` the second stage uses the average of the velocities
    at both ends of the step.  For odd data the wall tracers are advanced in
    their arc angle by an exponential midpoint rule instead, so the relative
    accuracy does not degrade as they contract into the stagnation point.
    """
    if len(tracers) == 0:
        return tracers
    if stream is None:
        stream = solve_stream(fld)
    p = tracers.positions
    onb = tracers.on_boundary
    u1, u2 = velocity_from_stream(stream, p[:, 0], p[:, 1])
    mid = _to_wall(p + 0.5 * dt * np.column_stack([u1, u2]), onb)
    vel = _stream_velocity(stream) if stream_next is None else _average_velocity(stream, stream_next)
    w1, w2 = vel(mid[:, 0], mid[:, 1])
    new = _to_wall(p + dt * np.column_stack([w1, w2]), onb)
    if stream.parity < 0 and np.any(onb):
        alpha = np.arctan2(p[onb, 0], 1.0 - p[onb, 1])
        alpha = _advance_wall(alpha, dt, stream, stream_next)
        new[onb] = np.column_stack([np.sin(alpha), 2.0 * np.sin(0.5 * alpha) ** 2])
    return replace(tracers, positions=new)


# ---------------------------------------------------------------------------
# comparison abscissae

@dataclass(frozen=True)
class ABState:
    log_a: float
    log_b: float
    valid: bool = True

    @property
    def a(self):
        return math.exp(self.log_a)

    @property
    def b(self):
        return math.exp(self.log_b)


def _segment_ok(x1):
    return 0.0 < x1 < 1.0 and boundary_height(x1) < x1


def ab_rates(state: ABState, stream: StreamField, n=64, refine=16):
    """(max of u1/x1 on the segment at a, min of u1/x1 on the segment at b)."""
    def q1(a, b):
        return scaled_u1_from_stream(stream, a, b)
    qa = segment_extrema(state.a, q1, n, refine)[1]
    qb = segment_extrema(state.b, q1, n, refine)[0]
    return qa, qb


def integrate_ab(state: ABState, fld: VorticityField, dt: float,
                 stream: StreamField | None = None, stream_next: StreamField | None = None,
                 n=64, refine=16) -> ABState:
    """Advance log a and log b by a midpoint step of d(log a)/dt = max u1/x1 at a (min at b for b)."""
    if not state.valid:
        return state
    if stream is None:
        stream = solve_stream(fld)
    qa, qb = ab_rates(state, stream, n, refine)
    mid = ABState(state.log_a + 0.5 * dt * qa, state.log_b + 0.5 * dt * qb)
    if not (_segment_ok(mid.a) and _segment_ok(mid.b)):
        return replace(state, valid=False)
    qa, qb = ab_rates(mid, stream, n, refine)
    if stream_next is not None:
        qa2, qb2 = ab_rates(mid, stream_next, n, refine)
        qa, qb = 0.5 * (qa + qa2), 0.5 * (qb + qb2)
    new = ABState(state.log_a + dt * qa, state.log_b + dt * qb)
    if not (_segment_ok(new.a) and _segment_ok(new.b)) or new.log_a > new.log_b:
        return replace(new, valid=False)
    return new


def occupancy_probes(a, b, n=24):
    """Probe points of the open wedge O(a, b): log-spaced abscissae, fractional heights."""
    x1 = np.geomspace(a, b, n + 2)[1:-1]
    frac = np.linspace(0.0, 1.0, n + 1)[:-1]
    h = boundary_height(x1)
    X1 = np.repeat(x1, len(frac))
    X2 = (h[:, None] + (x1 - h)[:, None] * frac[None, :]).ravel()
    return X1, X2


def occupancy(fld: VorticityField, state: ABState, n=24) -> float:
    """Minimum of the sampled vorticity over O(a(t), b(t))."""
    if not state.valid:
        raise DomainError("occupancy requested for an invalid (a, b) state")
    x1, x2 = occupancy_probes(state.a, state.b, n)
    return float(np.min(sample(fld, x1, x2)))


# ---------------------------------------------------------------------------
# orchestration

def initial_field(cfg: SimConfig, grid: PolarGrid | None = None) -> VorticityField:
    grid = grid or cfg.grid_spec().build()
    d = cfg.initial_data
    if d.kind == "ks":
        return build_ks_data(cfg.data_params(), grid)
    if d.kind == "strip":
        return build_strip_data(d.delta, cfg.strip_width(), grid)
    if d.kind == "unit":
        return field_from_function(grid, lambda a, b: np.ones_like(a))
    if d.kind == "radial":
        return field_from_function(grid, lambda a, b: 1.0 - (a ** 2 + (b - 1.0) ** 2), parity=+1)
    return zero_field(grid)


def initial_tracers(cfg: SimConfig) -> TracerSet:
    d = cfg.initial_data
    s = cfg.diagnostics
    a0, b0 = d.epsilon ** d.p, d.epsilon
    if s.tracer_x1 == "auto":
        wall = (a0, b0, d.delta / 2) if d.kind == "ks" else (d.delta / 2,)
    else:
        wall = s.tracer_x1
    if s.tracer_points == "auto":
        if d.kind == "ks":
            m = math.sqrt(a0 * b0)
            pts = ((m, 0.5 * m), (0.3, 0.3))
        else:
            pts = ((0.3, 0.3),)
    else:
        pts = s.tracer_points
    return make_tracers(wall, pts)


def initial_ab(cfg: SimConfig, fld: VorticityField) -> ABState:
    d = cfg.initial_data
    valid = fld.parity < 0
    return ABState(d.p * math.log(d.epsilon), math.log(d.epsilon), valid)


def make_record(fld: VorticityField, stream: StreamField, state: ABState, tracers: TracerSet,
                cfg: SimConfig, projected=0, warnings=()) -> DiagnosticsRecord:
    s = cfg.diagnostics
    nan = float("nan")
    cell_w = cell_samples(fld)[2]
    warn = list(warnings)
    if state.valid:
        a, b = state.a, state.b
        om = omega_factor([b, b], [b, 0.0], fld, s.omega_sub, cell_omega=cell_w)
        omega_bb, omega_b0 = float(om[0]), float(om[1])
        occ = occupancy(fld, state, s.occupancy_probes)
        fan1 = sector_fan(b, s.gamma, 1, s.scan_angles)
        fan2 = sector_fan(b, s.gamma, 2, s.scan_angles)
        b1 = residual_B_spectral(fan1[0], fan1[1], fld, stream, "B1", s.omega_sub, cell_w)
        b2 = residual_B_spectral(fan2[0], fan2[1], fld, stream, "B2", s.omega_sub, cell_w)
        b1_max, b2_max = float(np.max(np.abs(b1))), float(np.max(np.abs(b2)))
    else:
        a = b = omega_bb = omega_b0 = occ = b1_max = b2_max = nan
        if fld.parity < 0:
            warn.append("ab_invalid")
    if projected:
        warn.append("projected")
    return DiagnosticsRecord(
        t=float(fld.time), a=float(a), b=float(b), omega_bb=omega_bb, omega_b0=omega_b0,
        grad_sup=grad_sup_fd(fld), occupancy_min=occ, supnorm=sup_norm(fld),
        area_05=level_set_area(fld, 0.5), b1_max=b1_max, b2_max=b2_max, projected=int(projected),
        tracers=tuple((float(x), float(y)) for x, y in tracers.positions),
        warnings=tuple(warn))


@dataclass
class RunState:
    field: VorticityField
    ab: ABState
    tracers: TracerSet
    records: list
    steps: int = 0
    projected: int = 0


def _state_path(snapshot_path) -> Path:
    return Path(str(snapshot_path) + ".state.json")


def save_state(run: RunState, snapshot_path):
    """Field snapshot plus a JSON sidecar with tracers, (a, b) and records so far."""
    snapshot_path = Path(snapshot_path)
    write_snapshot(run.field, snapshot_path)
    doc = {
        "log_a": run.ab.log_a, "log_b": run.ab.log_b, "valid": run.ab.valid,
        "tracers": run.tracers.positions.tolist(), "labels": list(run.tracers.labels),
        "on_boundary": run.tracers.on_boundary.tolist(),
        "steps": run.steps, "projected": run.projected,
        "records": [r.asdict() for r in run.records],
    }
    path = _state_path(snapshot_path)
    tmp = path.with_name(path.name + ".partial")
    tmp.write_text(json.dumps(doc))
    os.replace(tmp, path)


def load_state(snapshot_path, cfg: SimConfig) -> RunState:
    spec = cfg.grid_spec()
    fld = read_snapshot(snapshot_path, spec=spec)
    path = _state_path(snapshot_path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise SnapshotError(f"missing run state next to snapshot: {path}") from None
    if cfg.initial_data.kind == "radial":
        fld = VorticityField(fld.grid, fld.values, fld.time, parity=+1)
    tr = TracerSet(np.array(doc["tracers"], dtype=float).reshape(-1, 2), tuple(doc["labels"]),
                   np.array(doc["on_boundary"], dtype=bool))
    return RunState(fld, ABState(doc["log_a"], doc["log_b"], doc["valid"]), tr,
                    [DiagnosticsRecord.fromdict(r) for r in doc["records"]],
                    doc["steps"], doc["projected"])


def _event_index(t, cadence):
    """Index of the first cadence multiple strictly after ``t`` (robust to rounding)."""
    k = int(math.floor(t / cadence + 1e-9)) + 1
    return k


def run(cfg: SimConfig, resume=None, snapshot_dir=None, on_record=None):
    """Integrate to ``T_final``; returns the list of DiagnosticsRecord.

    Records are taken at multiples of ``record_cadence`` (step sizes are
    trimmed to land on them exactly).  With ``snapshot_dir`` a snapshot and
    state sidecar are written at multiples of ``snapshot_cadence`` and at the
    end.  ``resume`` is a snapshot path written by an earlier run.
    """
    tc = cfg.time
    s = cfg.diagnostics
    if snapshot_dir is not None:
        Path(snapshot_dir).mkdir(parents=True, exist_ok=True)
    if resume is not None:
        st = load_state(resume, cfg)
    else:
        fld = initial_field(cfg)
        st = RunState(fld, initial_ab(cfg, fld), initial_tracers(cfg), [])
    stream = solve_stream(st.field)
    if not st.records:
        st.records.append(make_record(st.field, stream, st.ab, st.tracers, cfg))
        if on_record:
            on_record(st.records[-1])
    T = tc.T_final
    cad = tc.record_cadence
    snap = cfg.output.snapshot_cadence
    pending_proj = 0
    while st.field.time < T - 1e-12:
        t = st.field.time
        k = _event_index(t, cad)
        t_event = min(k * cad, T)
        dt = cfl_dt(st.field, tc.cfl, tc.dt_max, stream, tc.cfl_mode)
        if t + dt >= t_event - 1e-12 * max(1.0, T):
            dt = t_event - t
            landed = True
        else:
            # avoid a sliver step before the event
            n_left = math.ceil((t_event - t) / dt)
            dt = (t_event - t) / n_left
            landed = n_left == 1
        res = step(st.field, dt, stream, tc.two_velocity)
        new = res.field
        if landed:
            new = new.with_values(new.values, t_event)
        stream_next = solve_stream(new)
        st.tracers = advance_tracers(st.tracers, st.field, dt, stream, stream_next)
        st.ab = integrate_ab(st.ab, st.field, dt, stream, stream_next, s.segment_samples,
                             s.segment_refine)
        st.field, stream = new, stream_next
        st.steps += 1
        st.projected += res.projected
        pending_proj += res.projected
        if landed:
            rec = make_record(st.field, stream, st.ab, st.tracers, cfg, pending_proj)
            pending_proj = 0
            st.records.append(rec)
            if on_record:
                on_record(rec)
            if snapshot_dir is not None and snap > 0:
                ks = st.field.time / snap
                if abs(ks - round(ks)) < 1e-9 and st.field.time < T - 1e-12:
                    save_state(st, Path(snapshot_dir) / f"field_t{st.field.time:.6f}.bin")
    if snapshot_dir is not None:
        save_state(st, Path(snapshot_dir) / "final.bin")
    return st.records, st
