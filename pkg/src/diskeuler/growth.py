"""Quantitative checks of the growth mechanism.

Residuals of the velocity decomposition u1 = x1(-Omega + B1),
u2 = x2(Omega + B2), radial scans of the residuals near the origin, the
logarithmic lower bound on Omega for strip data, the cone condition on the
diagonal, the comparison-ODE envelopes, and a monitor that fits the
smallest constants making the differential inequalities for a(t), b(t)
hold along a recorded run.  Constants are always outputs, never inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .biot_savart import (StreamField, omega_factor, scaled_u1, scaled_u1_from_stream,
                          velocity_direct, velocity_from_stream)
from .field import VorticityField
from .geometry import DomainError

TWO_PI = 2.0 * math.pi
AUX_BOUND = math.log(2.0) / math.pi        # sup of Omega(b, 0) - Omega(b, b) per unit |omega|


# ---------------------------------------------------------------------------
# records

@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    a: float
    b: float
    omega_bb: float
    omega_b0: float
    grad_sup: float
    occupancy_min: float
    supnorm: float
    area_05: float
    b1_max: float
    b2_max: float
    projected: int = 0
    tracers: tuple = ()
    warnings: tuple = ()

    @property
    def log_gap(self):
        """log a - log b (negative while a < b)."""
        return math.log(self.a) - math.log(self.b) if self.a > 0 and self.b > 0 else float("nan")

    SCALARS = ("t", "a", "b", "log_gap", "omega_bb", "omega_b0", "grad_sup", "occupancy_min",
               "supnorm", "area_05", "b1_max", "b2_max", "projected")

    @staticmethod
    def header(ntracers):
        cols = list(DiagnosticsRecord.SCALARS)
        for k in range(ntracers):
            cols += [f"tracer{k + 1}_x1", f"tracer{k + 1}_x2"]
        return cols + ["warnings"]

    def row(self):
        vals = [repr(float(getattr(self, c))) if c != "projected" else str(self.projected)
                for c in self.SCALARS]
        for x1, x2 in self.tracers:
            vals += [repr(float(x1)), repr(float(x2))]
        return vals + [";".join(self.warnings)]

    def asdict(self):
        d = asdict(self)
        d["tracers"] = [list(p) for p in self.tracers]
        d["warnings"] = list(self.warnings)
        return d

    @staticmethod
    def fromdict(d):
        d = dict(d)
        d["tracers"] = tuple(tuple(p) for p in d["tracers"])
        d["warnings"] = tuple(d["warnings"])
        return DiagnosticsRecord(**d)


def records_csv(records) -> str:
    n = len(records[0].tracers) if records else 0
    lines = [",".join(DiagnosticsRecord.header(n))]
    lines += [",".join(r.row()) for r in records]
    return "\n".join(lines) + "\n"


def parse_records_csv(text):
    """Read back the scalar columns of a diagnostics CSV as a dict of arrays."""
    lines = text.strip().splitlines()
    head = lines[0].split(",")
    cols = {h: [] for h in head}
    for line in lines[1:]:
        for h, v in zip(head, line.split(",")):
            cols[h].append(v)
    out = {}
    for h, v in cols.items():
        out[h] = v if h == "warnings" else np.array([float(x) for x in v])
    return out


# ---------------------------------------------------------------------------
# velocity decomposition residuals

def residual_B(x1, x2, fld: VorticityField, which="both", sub=3):
    """(B1, B2) with B1 = u1/x1 + Omega and B2 = u2/x2 - Omega, direct quadrature."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if which in ("both", "B1") and np.any(x1 <= 0):
        raise DomainError("B1 needs x1 > 0")
    if which in ("both", "B2") and np.any(x2 <= 0):
        raise DomainError("B2 needs x2 > 0")
    om = omega_factor(x1, x2, fld, sub)
    b1 = b2 = None
    if which in ("both", "B1"):
        b1 = scaled_u1(x1, x2, fld) + om
    if which in ("both", "B2"):
        b2 = velocity_direct(x1, x2, fld)[1] / x2 - om
    return b1, b2


def residual_B_spectral(x1, x2, fld: VorticityField, stream: StreamField, which, sub=3,
                        cell_omega=None):
    """One residual (``B1`` or ``B2``) from the stream-function velocity."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    om = omega_factor(x1, x2, fld, sub, cell_omega)
    if which == "B1":
        return scaled_u1_from_stream(stream, x1, x2) + om
    return velocity_from_stream(stream, x1, x2)[1] / x2 - om


def wall_angle(radius):
    """Polar angle (from the x1 axis) of the wall point at distance ``radius`` from the origin."""
    return math.asin(radius / 2.0)


def sector_fan(radius, gamma, index, n):
    """``n`` points at distance ``radius`` from the origin inside sector 1 or 2.

    Sector 1 is phi <= pi/2 - gamma, sector 2 is phi >= gamma (phi measured
    from the x1 axis); the fan stays strictly above the wall.
    """
    lo = wall_angle(radius)
    if index == 1:
        hi = math.pi / 2 - gamma
        phi = lo + (hi - lo) * np.arange(1, n + 1) / n
    else:
        lo = max(lo, gamma)
        phi = lo + (math.pi / 2 - lo) * np.arange(n) / max(n - 1, 1)
    return radius * np.cos(phi), radius * np.sin(phi), phi


@dataclass(frozen=True)
class LemmaScanRow:
    radius: float
    angle: float
    sector: int
    Omega: float
    B1: float
    B2: float


@dataclass(frozen=True)
class LemmaScan:
    rows: list
    max_B1: dict            # radius -> max |B1|
    max_B2: dict
    omega_diag: dict        # s -> Omega(s, s)
    omega_slope: float

    def bounded(self, factor=3.0):
        """max residual over the two smallest radii <= factor * value at the largest."""
        radii = sorted(self.max_B1)
        small, big = radii[:2], radii[-1]
        ok1 = max(self.max_B1[r] for r in small) <= factor * self.max_B1[big]
        ok2 = max(self.max_B2[r] for r in small) <= factor * self.max_B2[big]
        return ok1, ok2


def lemma_scan(fld: VorticityField, gamma=math.pi / 16, radii=(0.1, 0.05, 0.025, 0.0125),
               n_angles=5, sub=3) -> LemmaScan:
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii) or any(a <= b for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be positive and descending")
    rows = []
    mb1, mb2 = {}, {}
    for r in radii:
        for index in (1, 2):
            x1, x2, phi = sector_fan(r, gamma, index, n_angles)
            om = omega_factor(x1, x2, fld, sub)
            if index == 1:
                res = scaled_u1(x1, x2, fld) + om
                mb1[r] = float(np.max(np.abs(res)))
            else:
                res = velocity_direct(x1, x2, fld)[1] / x2 - om
                mb2[r] = float(np.max(np.abs(res)))
            for k in range(len(phi)):
                b1 = float(res[k]) if index == 1 else float("nan")
                b2 = float(res[k]) if index == 2 else float("nan")
                rows.append(LemmaScanRow(r, float(phi[k]), index, float(om[k]), b1, b2))
    s = np.array(radii)
    od = omega_factor(s, s, fld, sub)
    slope = float(np.polyfit(np.log(1.0 / s), od, 1)[0])
    return LemmaScan(rows, mb1, mb2, dict(zip(radii, od.tolist())), slope)


def strip_probes(delta, n=8):
    """Fan of points of D+ with |x| <= delta: n radii times n angles."""
    pts1, pts2 = [], []
    for r in delta * np.arange(1, n + 1) / n:
        lo = wall_angle(r)
        phi = lo + (math.pi / 2 - lo) * np.arange(1, n + 1) / n
        pts1.append(r * np.cos(phi))
        pts2.append(r * np.sin(phi))
    return np.concatenate(pts1), np.concatenate(pts2)


@dataclass(frozen=True)
class StripBound:
    omega_min: float
    C1_fit: float
    max_B1: float
    margin: float           # min over probes of Omega - B1 = -max u1/x1

    @property
    def dominant(self):
        return self.margin >= 1.0


def strip_bound(fld: VorticityField, delta, n=8, sub=3, stream: StreamField | None = None):
    """Minimum of Omega over |x| <= delta and the implied log coefficient.

    Also reports the contraction margin min(Omega - B1) = -max(u1/x1) over
    the same probes; a margin of at least 1 is the dominance condition.
    """
    x1, x2 = strip_probes(delta, n)
    om = omega_factor(x1, x2, fld, sub)
    omin = float(np.min(om))
    if omin == 0.0 and not np.any(fld.values):
        return StripBound(0.0, 0.0, 0.0, 0.0)
    q = scaled_u1(x1, x2, fld) if stream is None else scaled_u1_from_stream(stream, x1, x2)
    b1 = q + om
    return StripBound(omin, omin / math.log(1.0 / delta), float(np.max(np.abs(b1))),
                      float(np.min(-q)))


@dataclass(frozen=True)
class ConeCheck:
    C_fit: float
    passed: bool
    ratios: np.ndarray


def cone_check(fld: VorticityField, delta, n=16, stream: StreamField | None = None):
    """Cone condition on the diagonal: -u1/u2 close to 1 with log(1/delta) dominance.

    C_fit is the smallest C with (L - C)/(L + C) <= -u1/u2 <= (L + C)/(L - C),
    L = log(1/delta); ``passed`` requires u1 < 0 < u2 at every probe.
    """
    s = np.geomspace(delta * 1e-3, 0.99 * delta / math.sqrt(2.0), n)
    if stream is None:
        u1, u2 = velocity_direct(s, s, fld)
    else:
        u1, u2 = velocity_from_stream(stream, s, s)
    passed = bool(np.all(u2 > 0) and np.all(u1 < 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = -u1 / u2
    L = math.log(1.0 / delta)
    if not passed or not np.all(np.isfinite(ratio)) or np.any(ratio <= 0):
        return ConeCheck(float("inf"), False, ratio)
    C = float(np.max(L * np.abs(ratio - 1.0) / (ratio + 1.0)))
    return ConeCheck(C, passed, ratio)


# ---------------------------------------------------------------------------
# envelopes

@dataclass(frozen=True)
class EnvelopeParams:
    A: float = 1.0
    B: float = 10.0
    C_upper: float = 1.0
    c_lower: float = 0.1
    epsilon: float = 0.05
    C_gap: float = 0.0

    def validate(self):
        if not self.A > 0:
            raise DomainError(f"A must be positive, got {self.A}")
        if not self.C_upper > 0 or not self.c_lower > 0:
            raise DomainError("envelope constants must be positive")
        if not (0.0 < self.epsilon < 1.0):
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        return self


def envelope_upper(p: EnvelopeParams, t):
    """(1 + log(1 + B/A)) exp(C A t)."""
    t = np.asarray(t, dtype=float)
    return (1.0 + math.log1p(p.B / p.A)) * np.exp(p.C_upper * p.A * t)


def comparison_ode_log(p: EnvelopeParams, t, tol=1e-8):
    """z = log y for y'/y = C A (1 + log(1 + y)), y(0) = B/A; finite where y overflows."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise DomainError("comparison ODE needs t >= 0")
    ca = p.C_upper * p.A

    def rhs(_, z):
        return [ca * (1.0 + np.logaddexp(0.0, z[0]))]

    z0 = math.log(p.B / p.A)
    tmax = float(t_arr.max())
    if tmax == 0.0:
        out = np.full_like(t_arr, z0)
    else:
        ts = np.unique(np.concatenate([[0.0], t_arr]))
        sol = solve_ivp(rhs, (0.0, tmax), [z0], method="DOP853", t_eval=ts, rtol=tol,
                        atol=tol * 1e-3)
        if not sol.success:
            raise RuntimeError(f"comparison ODE failed: {sol.message}")
        out = sol.y[0][np.searchsorted(sol.t, t_arr)]
    return out if np.ndim(t) else float(out[0])


def comparison_ode(p: EnvelopeParams, t, tol=1e-8):
    """y(t) for y'/y = C A (1 + log(1 + y)), y(0) = B/A, integrated in z = log y."""
    with np.errstate(over="ignore"):
        return np.exp(comparison_ode_log(p, t, tol))


def ode_majorant_gap(p: EnvelopeParams, t, tol=1e-8):
    """upper - (1 + log(1 + y)): nonnegative when the envelope majorizes the ODE."""
    z = np.asarray(comparison_ode_log(p, t, tol))
    return envelope_upper(p, t) - (1.0 + np.logaddexp(0.0, z))


def envelope_lower(p: EnvelopeParams, t):
    """(B/A) ** (c exp(c A t))."""
    if not p.B / p.A > 1.0:
        raise DomainError(f"lower envelope needs B/A > 1, got {p.B / p.A}")
    t = np.asarray(t, dtype=float)
    return (p.B / p.A) ** (p.c_lower * np.exp(p.c_lower * p.A * t))


def gronwall_gap(p: EnvelopeParams, t, p_cut):
    """((p_cut - 1) log eps + C_gap) exp(t / 2 pi): bound on log a - log b."""
    if not (0.0 < p.epsilon < 1.0):
        raise DomainError(f"epsilon must lie in (0, 1), got {p.epsilon}")
    t = np.asarray(t, dtype=float)
    return ((p_cut - 1.0) * math.log(p.epsilon) + p.C_gap) * np.exp(t / TWO_PI)


# ---------------------------------------------------------------------------
# monitor

@dataclass(frozen=True)
class InequalityResult:
    name: str
    inequality: str
    constant: float
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MonitorReport:
    results: list
    notes: list

    def by_name(self, name):
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def all_passed(self):
        return all(r.passed for r in self.results)

    def as_dict(self):
        return {"results": [_jsonable(asdict(r)) for r in self.results], "notes": list(self.notes)}

    def text(self):
        return format_blocks([asdict(r) for r in self.results], self.notes)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def format_blocks(blocks, notes=()):
    """Key-value text: one block per inequality, blank line between blocks."""
    out = []
    for b in blocks:
        out.append(f"name = {b['name']}")
        out.append(f"inequality = {b['inequality']}")
        out.append(f"constant = {b['constant']!r}")
        out.append(f"pass = {'true' if b['passed'] else 'false'}")
        for k, v in b.get("detail", {}).items():
            out.append(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")
        out.append("")
    for n in notes:
        out.append(f"note = {n}")
    return "\n".join(out) + "\n"


def report_json(report: MonitorReport) -> str:
    return json.dumps(report.as_dict(), indent=2, sort_keys=True)


def _ddt(y, t):
    return np.gradient(y, t) if len(t) >= 3 else np.zeros_like(y)


def _fit_max(v):
    v = np.asarray(v, dtype=float)
    if v.size == 0 or not np.all(np.isfinite(v)):
        return float("inf")
    return float(np.max(v))


def monitor(records, p: EnvelopeParams | None = None, pairs=None) -> MonitorReport:
    """Fit the smallest constants for which the a/b inequalities hold along ``records``.

    Time derivatives are centred differences on the record times (one-sided
    at the two ends).  ``pairs`` lists tracer index pairs for the two-sided
    flow-map bound; by default consecutive tracers.
    """
    if len(records) < 3:
        raise ValueError("monitor needs at least 3 records")
    t = np.array([r.t for r in records])
    if np.any(np.diff(t) < 0):
        raise ValueError("record times must be non-decreasing")
    a = np.array([r.a for r in records])
    b = np.array([r.b for r in records])
    ob = np.array([r.omega_bb for r in records])
    o0 = np.array([r.omega_b0 for r in records])
    G = np.array([r.grad_sup for r in records])
    S = np.array([r.supnorm for r in records])
    A = float(S[0]) if p is None else float(p.A)
    results = []
    notes = ["time derivatives: centred differences, one-sided at the first and last record"]

    if np.all(np.isfinite(a)) and np.all(a > 0) and np.all(b > 0):
        la, lb = np.log(a), np.log(b)
        gap = la - lb
        dla, dlb, dgap = _ddt(la, t), _ddt(lb, t), _ddt(gap, t)
        c_cd = _fit_max(-ob - dlb)
        c_ab = _fit_max(dla - gap / TWO_PI + ob)
        c_f1 = _fit_max((dgap - gap / TWO_PI) / 2.0)
        results.append(InequalityResult(
            "log_b_rate", "d/dt log b >= -Omega(b,b) - C", c_cd, math.isfinite(c_cd)))
        results.append(InequalityResult(
            "log_a_rate", "d/dt log a <= (log a - log b)/(2 pi) - Omega(b,b) + C", c_ab,
            math.isfinite(c_ab)))
        results.append(InequalityResult(
            "log_gap_rate", "d/dt (log a - log b) <= (log a - log b)/(2 pi) + 2C", c_f1,
            math.isfinite(c_f1)))
        c_aux = _fit_max(o0 - ob)
        bound = AUX_BOUND * A
        results.append(InequalityResult(
            "omega_segment_spread", "Omega(b, x2) <= Omega(b, b) + C for x2 <= b", c_aux,
            bool(c_aux <= 1.02 * bound + 1e-12), {"bound": bound}))
    else:
        notes.append("a/b columns incomplete; a/b inequalities skipped")

    # two-sided flow-map bound from the gradient history
    ntr = len(records[0].tracers)
    if pairs is None:
        pairs = [(k, k + 1) for k in range(ntr - 1)]
    if pairs and A > 0:
        integ = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (
            (1 + np.log1p(G[1:] / A)) + (1 + np.log1p(G[:-1] / A))))])
        worst = 0.0
        for i, j in pairs:
            pi0 = np.array(records[0].tracers[i])
            pj0 = np.array(records[0].tracers[j])
            d0 = np.linalg.norm(pi0 - pj0)
            d = np.array([np.linalg.norm(np.array(r.tracers[i]) - np.array(r.tracers[j]))
                          for r in records])
            m = integ > 0
            if d0 > 0 and np.any(m):
                worst = max(worst, float(np.max(np.abs(np.log(d[m] / d0)) / (A * integ[m]))))
        results.append(InequalityResult(
            "flow_map_two_sided", "1/f(t) <= |Phi(x)-Phi(y)|/|x-y| <= f(t)", worst,
            math.isfinite(worst), {"pairs": len(pairs)}))

    # upper envelope from the recorded gradient
    if G[0] > 0 and np.all(S > 0):
        m = 1.0 + np.log1p(G / S)
        later = t > t[0]
        c_up = 0.0
        if np.any(later):
            c_up = max(0.0, float(np.max(np.log(m[later] / m[0]) / (A * (t[later] - t[0])))))
        env = EnvelopeParams(A=A, B=float(G[0]), C_upper=max(c_up, 1e-300))
        bound = envelope_upper(env, t - t[0])
        results.append(InequalityResult(
            "gradient_upper_envelope", "1 + log(1 + |grad w|/|w|) <= (1 + log(1 + B/A)) exp(C A t)",
            c_up, bool(np.all(m <= bound * (1 + 1e-12)))))
    return MonitorReport(results, notes)


# ---------------------------------------------------------------------------
# growth fits

def fit_growth(t, values, model="exponential"):
    """Least-squares rate of log(value) (or log log value) against t; returns (rate, r2)."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(t) < 4:
        raise ValueError("need at least 4 points")
    if model == "exponential":
        if np.any(v <= 0):
            raise DomainError("exponential fit needs positive values")
        y = np.log(v)
    elif model == "double_exponential":
        if np.any(v <= 1):
            raise DomainError("double-exponential fit needs values > 1")
        y = np.log(np.log(v))
    else:
        raise ValueError(f"unknown model {model!r}")
    slope, icpt = np.polyfit(t, y, 1)
    resid = y - (slope * t + icpt)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 if ss == 0 else float(1.0 - np.sum(resid ** 2) / ss)
    return float(slope), r2
