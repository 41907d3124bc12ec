"""End-to-end acceptance checks; each test prints one PASS/FAIL line.

The two scenario runs (default grid and the doubled grid) are shared
session fixtures; together they take roughly 15-20 minutes on one core.
"""
import math
import time

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import VERDICTS
from diskeuler.biot_savart import solve_stream, velocity_direct, velocity_from_stream
from diskeuler.cli import kernel_battery, main
from diskeuler.config import SimConfig
from diskeuler.field import build_strip_data, field_from_function
from diskeuler.geometry import boundary_height
from diskeuler.grid import GridSpec
from diskeuler.growth import (EnvelopeParams, envelope_upper, lemma_scan, monitor,
                              ode_majorant_gap, strip_bound)
from diskeuler.kernel import random_interior_points
from diskeuler.transport import initial_tracers, run

STRIP_DELTAS = (1e-2, 1e-3)
STRIP_SCENARIO_DELTA = 1e-2


def verdict(label, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
    VERDICTS.append(line)
    print(line)
    assert ok, line


def ones(a, b):
    return np.ones_like(a)


def omega_unit_diag(s):
    """Omega(s, s) for the unit field by 1-D quadrature of the inner integral in closed form."""
    def inner(y1):
        lo = max(s, float(boundary_height(y1)))
        hi = 1 + math.sqrt(1 - y1 * y1)
        return y1 * (0.5 / (y1 * y1 + lo * lo) - 0.5 / (y1 * y1 + hi * hi))
    val, _ = quad(inner, s, 1.0, limit=200, epsabs=1e-13)
    return 4 / math.pi * val


def strip_config(delta=STRIP_SCENARIO_DELTA, **time):
    return (SimConfig()
            .with_section("initial_data", kind="strip", delta=delta, epsilon=delta / 4)
            .with_section("time", **time))


@pytest.fixture(scope="session")
def scenario():
    cfg = SimConfig()
    records, state = run(cfg)
    return cfg, records, state


@pytest.fixture(scope="session")
def scenario_doubled():
    spec = SimConfig().grid_spec().doubled()
    cfg = SimConfig().with_section("grid", nr=spec.nr, ntheta=spec.ntheta)
    records, _ = run(cfg)
    return cfg, records


@pytest.fixture(scope="session")
def strip_runs():
    base = strip_config()
    fine = strip_config(cfl=base.time.cfl / 2)
    return run(base)[0], run(fine)[0]


def test_1_rigid_rotation():
    t0 = time.perf_counter()
    g = GridSpec(257, 513).build()
    f = field_from_function(g, ones, parity=+1)
    x1, x2 = random_interior_points(np.random.default_rng(1), 100, rmax=0.95)
    e1, e2 = (x2 - 1) / 2, -x1 / 2
    scale = np.max(np.hypot(e1, e2))
    errs = {}
    for path in ("spectral", "direct"):
        u1, u2 = (velocity_from_stream(solve_stream(f), x1, x2) if path == "spectral"
                  else velocity_direct(x1, x2, f))
        errs[path] = float(np.max(np.hypot(u1 - e1, u2 - e2)) / scale)
    elapsed = time.perf_counter() - t0
    ok = max(errs.values()) <= 2e-3 and elapsed <= 60
    verdict("1 rigid rotation", ok,
            f"spectral={errs['spectral']:.2e} direct={errs['direct']:.2e} (<=2e-3) "
            f"time={elapsed:.1f}s (<=60)")


def test_2_path_equivalence():
    f = build_strip_data(STRIP_SCENARIO_DELTA, STRIP_SCENARIO_DELTA / 2,
                         SimConfig().grid_spec().build())
    x1, x2 = random_interior_points(np.random.default_rng(2), 100, rmax=0.95)
    a = velocity_direct(x1, x2, f)
    b = velocity_from_stream(solve_stream(f), x1, x2)
    rel = float(np.max(np.hypot(a[0] - b[0], a[1] - b[1])) / np.max(np.hypot(*b)))
    verdict("2 path equivalence", rel <= 1e-3, f"max relative discrepancy={rel:.2e} (<=1e-3)")


def test_3_green_battery():
    results = kernel_battery(seed=0)
    wanted = {"green_boundary_limit", "green_symmetry", "green_hand_value"}
    got = {name: (ok, val) for name, ok, val in results if name in wanted}
    ok = set(got) == wanted and all(v[0] for v in got.values())
    verdict("3 green battery", ok, " ".join(f"{k}={v[1]:.3g}" for k, v in sorted(got.items())))


def test_4_lemma_scan():
    t0 = time.perf_counter()
    g = GridSpec(161, 321, theta_h0=1e-6, wall_h0=1e-6).build()
    scan = lemma_scan(field_from_function(g, ones))
    elapsed = time.perf_counter() - t0
    s = np.array(sorted(scan.omega_diag, reverse=True))
    oracle = float(np.polyfit(np.log(1 / s), [omega_unit_diag(v) for v in s], 1)[0])
    slope_ok = abs(scan.omega_slope - 2 / math.pi) <= 0.1 * 2 / math.pi
    oracle_ok = abs(scan.omega_slope - oracle) <= 0.1 * abs(oracle)
    b1_ok, b2_ok = scan.bounded(3.0)
    ok = slope_ok and oracle_ok and b1_ok and b2_ok and elapsed <= 300
    verdict("4 lemma scan", ok,
            f"slope={scan.omega_slope:.4f} target 2/pi={2 / math.pi:.4f} oracle={oracle:.4f} "
            f"B1 bounded={b1_ok} B2 bounded={b2_ok} time={elapsed:.0f}s")


def test_5_strip_lower_bound():
    g = SimConfig().grid_spec().build()
    fits = {d: strip_bound(build_strip_data(d, d / 2, g), d) for d in STRIP_DELTAS}
    c = [fits[d].C1_fit for d in STRIP_DELTAS]
    spread = abs(c[0] - c[1]) / max(c)
    ok = min(c) > 0 and spread <= 0.3
    verdict("5 Omega lower bound", ok,
            " ".join(f"C1(delta={d:g})={fits[d].C1_fit:.4f} margin={fits[d].margin:.2f}"
                     for d in STRIP_DELTAS) + f" spread={spread:.1%} (<=30%)")


def test_6_boundary_contraction(strip_runs):
    d = STRIP_SCENARIO_DELTA
    dominance = strip_bound(build_strip_data(d, d / 2, SimConfig().grid_spec().build()), d)
    base, fine = strip_runs
    t = np.array([r.t for r in base])
    x = np.array([r.tracers[0][0] for r in base])
    ratio = float(np.max(x / (x[0] * np.exp(-0.9 * t))))
    change = abs(fine[-1].tracers[0][0] - base[-1].tracers[0][0]) / abs(base[-1].tracers[0][0])
    ok = dominance.dominant and ratio <= 1.0 and change <= 5e-3 and t[-1] == 3.0
    verdict("6 boundary contraction", ok,
            f"delta={d:g} dominance margin={dominance.margin:.2f} (>=1) "
            f"max x1(t)/(x1(0)e^-0.9t)={ratio:.4f} (<=1) x1(3)={base[-1].tracers[0][0]:.4e} "
            f"dt-halving change={change:.2%} (<=0.5%)")


def test_7a_ab_decreasing(scenario):
    _, rec, _ = scenario
    a = np.array([r.a for r in rec])
    b = np.array([r.b for r in rec])
    ok = bool(np.all(np.diff(a) < 0) and np.all(np.diff(b) < 0)) and rec[-1].t == 3.0
    verdict("7a a,b strictly decreasing", ok, f"a(3)={a[-1]:.3e} b(3)={b[-1]:.3e}")


def test_7b_occupancy(scenario):
    _, rec, _ = scenario
    occ = min(r.occupancy_min for r in rec)
    verdict("7b occupancy", occ >= 0.99, f"min occupancy={occ:.4f} (>=0.99)")


def test_7c_constants_under_doubling(scenario, scenario_doubled):
    _, rec, _ = scenario
    cfg2, rec2 = scenario_doubled
    m1, m2 = monitor(rec), monitor(rec2)
    parts, ok = [], True
    for name in ("log_b_rate", "log_a_rate", "log_gap_rate"):
        c1, c2 = m1.by_name(name).constant, m2.by_name(name).constant
        rel = abs(c1 - c2) / abs(c2) if math.isfinite(c1) and math.isfinite(c2) else math.inf
        ok = ok and rel <= 0.5
        parts.append(f"{name}: {c1:.4f} vs {c2:.4f} ({rel:.1%})")
    verdict("7c constants under doubling", ok,
            f"grid {cfg2.grid.nr}x{cfg2.grid.ntheta}: " + "; ".join(parts) + " (<=50%)")


def test_7d_gap_acceleration(scenario):
    _, rec, _ = scenario
    t = np.array([r.t for r in rec])
    gap = np.array([math.log(r.b) - math.log(r.a) for r in rec])
    inc = np.diff(gap)
    late = t[:-1] >= t[-1] / 3 - 1e-12
    second = np.diff(inc[late])
    ok = bool(np.all(inc > 0) and np.all(second >= 0))
    verdict("7d gap acceleration", ok,
            f"log(b/a): {gap[0]:.3f} -> {gap[-1]:.3f}, min increment={inc.min():.4f}, "
            f"min late second difference={second.min():.4f}")


def test_8_envelope_majorization(scenario):
    tol = 1e-8
    t = np.linspace(0.0, 5.0, 101)
    worst = math.inf
    for A in (0.5, 1.0, 2.0):
        for ratio in (2.0, 10.0, 100.0):
            for C in (0.5, 1.0):
                p = EnvelopeParams(A=A, B=ratio * A, C_upper=C)
                worst = min(worst, float(np.min(ode_majorant_gap(p, t, tol))))
    _, rec, _ = scenario
    fit = monitor(rec).by_name("gradient_upper_envelope").constant
    tt = np.array([r.t for r in rec])
    S = np.array([r.supnorm for r in rec])
    G = np.array([r.grad_sup for r in rec])
    p = EnvelopeParams(A=S[0], B=G[0], C_upper=fit)
    measured = 1 + np.log1p(G / S)
    slack = float(np.min(envelope_upper(p, tt) - measured))
    ok = worst >= -10 * tol and slack >= -1e-9 * float(np.max(measured))
    verdict("8 envelope majorization", ok,
            f"min(upper - ode transform)={worst:.3e} (>=-1e-7) fitted C={fit:.4f} "
            f"min(envelope - measured)={slack:.3e}")


def test_9_conservation(scenario):
    cfg, rec, _ = scenario
    S = np.array([r.supnorm for r in rec])
    A = np.array([r.area_05 for r in rec])
    sup_drift = float(np.max(np.abs(S - S[0])) / S[0])
    area_drift = float(np.max(np.abs(A - A[0])) / A[0])
    wall = initial_tracers(cfg).on_boundary
    radius = max(abs(math.hypot(p[0], p[1] - 1.0) - 1.0)
                 for r in rec for p, w in zip(r.tracers, wall) if w)
    ok = sup_drift <= 0.01 and area_drift <= 0.02 and radius <= 1e-8
    verdict("9 conservation", ok,
            f"sup drift={sup_drift:.2e} (<=1e-2) area drift={area_drift:.2e} (<=2e-2) "
            f"tracer radius drift={radius:.1e} (<=1e-8)")


SMALL = """
[grid]
nr = 49
ntheta = 97
theta_h0 = 0
wall_h0 = 0
[initial_data]
kind = strip
[time]
T_final = {T}
record_cadence = 0.125
[output]
snapshot_cadence = 0.25
"""


def test_10_determinism_and_resume(tmp_path):
    full_cfg = tmp_path / "full.cfg"
    full_cfg.write_text(SMALL.format(T=0.5))
    half_cfg = tmp_path / "half.cfg"
    half_cfg.write_text(SMALL.format(T=0.25))
    codes = [main(["simulate", "--config", str(full_cfg), "--out", str(tmp_path / d)])
             for d in ("a", "b")]
    same = (tmp_path / "a" / "diagnostics.csv").read_bytes() == \
        (tmp_path / "b" / "diagnostics.csv").read_bytes()
    main(["simulate", "--config", str(half_cfg), "--out", str(tmp_path / "h")])
    main(["simulate", "--config", str(full_cfg), "--out", str(tmp_path / "r"),
          "--resume", str(tmp_path / "h" / "snapshots" / "final.bin")])

    def rows(d):
        lines = (tmp_path / d / "diagnostics.csv").read_text().splitlines()[1:]
        return np.array([[float(v) for v in ln.split(",")[:-1]] for ln in lines])
    a, r = rows("a"), rows("r")
    dev = float(np.max(np.abs(a - r) / np.maximum(1.0, np.abs(a)))) if a.shape == r.shape else math.inf
    ok = same and dev <= 1e-10 and all(c in (0, 2) for c in codes)
    verdict("10 determinism and resume", ok,
            f"repeat CSV byte-identical={same} resume max deviation={dev:.1e} (<=1e-10)")
