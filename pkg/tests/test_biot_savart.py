import math

import numpy as np
import pytest
from scipy.integrate import quad

from diskeuler.biot_savart import (SparseStreamSolver, StreamSolver, discrete_laplacian,
                                   get_solver, omega_factor, scaled_u1, scaled_u1_from_stream,
                                   segment_extrema, solve_stream, velocity_direct,
                                   velocity_from_stream)
from diskeuler.field import build_strip_data, field_from_function
from diskeuler.geometry import DomainError, boundary_height
from diskeuler.grid import GridSpec
from diskeuler.kernel import random_interior_points


def ones(a, b):
    return np.ones_like(a)


def rigid(x1, x2):
    return (x2 - 1) / 2, -x1 / 2


def mms_psi(x1, x2):
    # odd, zero on the wall, laplacian 8 x1
    return x1 * (x1 ** 2 + (x2 - 1) ** 2 - 1)


def mms_velocity(x1, x2):
    q = x1 ** 2 + (x2 - 1) ** 2 - 1
    return 2 * x1 * (x2 - 1), -(q + 2 * x1 ** 2)


@pytest.fixture(scope="module")
def probes():
    return random_interior_points(np.random.default_rng(11), 60, rmax=0.95)


@pytest.mark.parametrize("parity", [-1, 1])
def test_modal_and_sparse_solvers_agree(parity):
    g = GridSpec(33, 65, theta_h0=1e-4).build()
    rng = np.random.default_rng(0)
    w = rng.random(g.shape)
    a = StreamSolver(g, parity).solve(w)
    b = SparseStreamSolver(g, parity).solve(w)
    assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(a))


def test_auto_switches_on_strong_grading():
    mild = GridSpec(17, 33).build()
    steep = GridSpec(17, 33, theta_h0=1e-10).build()
    assert isinstance(get_solver(mild, -1), StreamSolver)
    assert isinstance(get_solver(steep, -1), SparseStreamSolver)


def test_discrete_laplacian_inverts_solver():
    g = GridSpec(33, 65).build()
    f = field_from_function(g, lambda a, b: np.sin(4 * a) * b)
    s = solve_stream(f)
    lap, idx = discrete_laplacian(g, s.values, -1)
    assert np.max(np.abs(lap - f.values[1:-1][:, idx])) <= 1e-9


def test_manufactured_solution_second_order(probes):
    x1, x2 = np.abs(probes[0]), probes[1]
    e1, e2 = mms_velocity(x1, x2)
    errs = []
    for n in (17, 33, 65):
        g = GridSpec(n, 2 * n - 1).build()
        f = field_from_function(g, lambda a, b: 8 * a)
        s = solve_stream(f)
        P, T = g.mesh
        X1, X2 = g.points
        errs.append(np.max(np.abs(s.values - mms_psi(X1, X2))))
        u1, u2 = velocity_from_stream(s, x1, x2)
    assert errs[1] < errs[0] / 3 and errs[2] < errs[1] / 3
    assert np.max(np.hypot(u1 - e1, u2 - e2)) <= 5e-3


def test_graded_grid_manufactured_solution(probes):
    # graded lattices go through the sparse solver; accuracy must not degrade
    g = GridSpec(65, 161, theta_h0=1e-12, wall_h0=1e-14, theta_band=0.5, wall_band=0.5).build()
    s = solve_stream(field_from_function(g, lambda a, b: 8 * a))
    X1, X2 = g.points
    assert np.max(np.abs(s.values - mms_psi(X1, X2))) <= 2e-3
    x1 = np.geomspace(1e-12, 1e-3, 5)
    q = scaled_u1_from_stream(s, x1, 0.5 * x1)
    assert q == pytest.approx(2 * (0.5 * x1 - 1), rel=1e-2)


@pytest.mark.parametrize("path", ["spectral", "direct"])
def test_rigid_rotation(path, probes):
    g = GridSpec(65, 129).build()
    f = field_from_function(g, ones, parity=+1)
    x1, x2 = probes[0][:20], probes[1][:20]
    if path == "spectral":
        u1, u2 = velocity_from_stream(solve_stream(f), x1, x2)
    else:
        u1, u2 = velocity_direct(x1, x2, f)
    e1, e2 = rigid(x1, x2)
    assert np.max(np.hypot(u1 - e1, u2 - e2)) / np.max(np.hypot(e1, e2)) <= 5e-3


def test_no_flow_on_wall():
    g = GridSpec(33, 65).build()
    s = solve_stream(field_from_function(g, lambda a, b: np.cos(3 * a) * a))
    ang = np.linspace(0.2, 3.0, 30)
    b1, b2 = np.sin(ang), 1 - np.cos(ang)
    u1, u2 = velocity_from_stream(s, b1, b2)
    assert np.max(np.abs(u1 * b1 + u2 * (b2 - 1))) <= 1e-12


def test_odd_velocity_symmetry():
    g = GridSpec(33, 65).build()
    f = field_from_function(g, lambda a, b: np.sin(3 * a) * (1 + b))
    s = solve_stream(f)
    x1, x2 = np.array([0.2, 0.4]), np.array([0.5, 1.1])
    a = velocity_from_stream(s, x1, x2)
    b = velocity_from_stream(s, -x1, x2)
    assert b[0] == pytest.approx(-a[0], abs=1e-14)
    assert b[1] == pytest.approx(a[1], abs=1e-14)


def test_paths_agree_on_strip_data():
    g = GridSpec(97, 193, theta_h0=1e-5, wall_h0=1e-5).build()
    f = build_strip_data(0.1, 0.05, g)
    rng = np.random.default_rng(3)
    x1, x2 = random_interior_points(rng, 20, rmax=0.9)
    x1 = np.abs(x1)
    a = velocity_direct(x1, x2, f)
    b = velocity_from_stream(solve_stream(f), x1, x2)
    scale = np.max(np.hypot(*b))
    assert np.max(np.hypot(a[0] - b[0], a[1] - b[1])) / scale <= 1e-3


def test_scaled_u1_matches_velocity():
    g = GridSpec(65, 129, theta_h0=1e-6, wall_h0=1e-6).build()
    f = build_strip_data(0.1, 0.05, g)
    x1, x2 = np.array([0.05, 0.2]), np.array([0.3, 0.5])
    u1, _ = velocity_direct(x1, x2, f)
    assert scaled_u1(x1, x2, f) * x1 == pytest.approx(u1, rel=1e-10, abs=1e-14)
    s = solve_stream(f)
    assert scaled_u1_from_stream(s, x1, x2) == pytest.approx(u1 / x1, rel=1e-2)


def test_scaled_u1_finite_on_axis():
    g = GridSpec(33, 65).build()
    f = field_from_function(g, ones)
    q = scaled_u1(np.array([0.0]), np.array([0.5]), f)
    assert np.isfinite(q[0])


def omega_unit_diag(s):
    """(4/pi) int_Q y1 y2 / |y|^4 over the half disk above/right of (s, s), by 1-D quad."""
    def inner(y1):
        lo = max(s, float(boundary_height(y1)))
        hi = 1 + math.sqrt(1 - y1 * y1)
        return y1 * (0.5 / (y1 * y1 + lo * lo) - 0.5 / (y1 * y1 + hi * hi))
    val, _ = quad(inner, s, 1.0, limit=200, epsabs=1e-13)
    return 4 / math.pi * val


@pytest.mark.parametrize("s", [0.1, 0.05, 0.025])
def test_omega_factor_unit_field(s):
    g = GridSpec(161, 321, theta_h0=1e-6, wall_h0=1e-6).build()
    f = field_from_function(g, ones)
    assert omega_factor([s], [s], f)[0] == pytest.approx(omega_unit_diag(s), rel=1e-2)


def test_omega_factor_zero_field():
    g = GridSpec(17, 33).build()
    f = field_from_function(g, lambda a, b: np.zeros_like(a))
    assert omega_factor([0.1], [0.1], f)[0] == 0.0


def test_segment_extrema_known_function():
    lo, hi = segment_extrema(0.3, lambda a, b: -(b - 0.1) ** 2)
    assert hi == pytest.approx(0.0, abs=1e-4)
    h = float(boundary_height(0.3))
    assert lo == pytest.approx(-(0.3 - 0.1) ** 2, abs=1e-12)
    assert lo < hi and h < 0.3


def test_segment_domain():
    with pytest.raises(DomainError):
        segment_extrema(0.0, lambda a, b: a)
