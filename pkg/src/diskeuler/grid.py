"""Polar lattice over the right half disk and interpolation on it.

Nodes sit at disk-centred polar coordinates ``(r_i, theta_j)`` with
``r`` in [0, 1] and ``theta`` in [0, pi]; node (i, j) is the point
``(r sin theta, 1 - r cos theta)``.  The radial coordinate is stored as
``rho = r - 1`` (zero on the wall) so that wall distances far below the
spacing of doubles near 1 stay exact; every radial difference, search and
interpolation works in ``rho``.  ``theta = 0`` is the lower half of the
symmetry axis, so the corner ``r = 1, theta = 0`` is the origin where the
hyperbolic stagnation point lives.  Both coordinates can carry a geometric
refinement band toward that corner.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import wall_offset


class GridError(ValueError):
    pass


def banded_nodes(n_intervals, length, h0, band_fraction):
    """Nodes on [0, length]: geometric spacing from h0 over a band, then uniform.

    The band uses ``round(band_fraction * n_intervals)`` intervals whose
    spacing grows by a constant ratio up to the uniform spacing of the rest,
    so the spacing is continuous across the junction.
    """
    n_g = int(round(band_fraction * n_intervals))
    n_u = n_intervals - n_g
    if n_g < 1 or n_u < 1:
        raise GridError("band must leave at least one geometric and one uniform interval")
    if h0 * n_intervals >= length:
        raise GridError(f"minimum spacing {h0} too large for {n_intervals} intervals")

    def total(rho):
        return h0 * (rho ** n_g - 1.0) / (rho - 1.0) + n_u * h0 * rho ** n_g

    lo, hi = 1.0 + 1e-12, 2.0
    while total(hi) < length:
        hi = 1.0 + 2.0 * (hi - 1.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) < length:
            lo = mid
        else:
            hi = mid
    rho = 0.5 * (lo + hi)
    steps = np.concatenate([h0 * rho ** np.arange(n_g), np.full(n_u, h0 * rho ** n_g)])
    nodes = np.concatenate([[0.0], np.cumsum(steps)])
    nodes *= length / nodes[-1]
    nodes[-1] = length
    return nodes


@dataclass(frozen=True)
class GridSpec:
    """Lattice parameters.

    ``q`` is the power-law radial grading ``r = 1 - (1 - s)^q``.  A positive
    ``wall_h0`` replaces it by a geometric wall band of first spacing
    ``wall_h0``; a positive ``theta_h0`` puts a geometric band of first
    spacing ``theta_h0`` at ``theta = 0`` (otherwise theta is uniform).
    """

    nr: int = 129
    ntheta: int = 257
    q: float = 2.0
    theta_h0: float = 0.0
    theta_band: float = 0.5
    wall_h0: float = 0.0
    wall_band: float = 0.5

    def validate(self):
        if self.nr < 4 or self.ntheta < 4:
            raise GridError("need nr, ntheta >= 4")
        if self.q < 1.0:
            raise GridError("radial grading exponent q must be >= 1")
        for name in ("theta_band", "wall_band"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise GridError(f"{name} must lie in (0, 1)")
        if self.theta_h0 < 0 or self.wall_h0 < 0:
            raise GridError("band spacings must be >= 0")

    def build(self) -> "PolarGrid":
        self.validate()
        if self.wall_h0 > 0:
            depth = banded_nodes(self.nr - 1, 1.0, self.wall_h0, self.wall_band)
            rho = -depth[::-1].copy()
        else:
            s = np.linspace(0.0, 1.0, self.nr)
            rho = -(1.0 - s) ** self.q
        if self.theta_h0 > 0:
            theta = banded_nodes(self.ntheta - 1, np.pi, self.theta_h0, self.theta_band)
        else:
            theta = np.linspace(0.0, np.pi, self.ntheta)
        rho[0] = -1.0
        rho[-1] = 0.0
        theta[-1] = np.pi
        return PolarGrid(rho=rho, theta=theta, spec=self)

    def doubled(self) -> "GridSpec":
        return GridSpec(2 * self.nr - 1, 2 * self.ntheta - 1, self.q, self.theta_h0,
                        self.theta_band, self.wall_h0, self.wall_band)


def _d1_weights(x):
    """Second-order first-derivative weights on a non-uniform 1D grid.

    Returns (wm, w0, wp) arrays for interior nodes 1..n-2 and one-sided
    3-point formulas at both ends folded into the same triple layout via
    index offsets; see :func:`deriv1`.
    """
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    wm = -hp / (hm * (hm + hp))
    w0 = (hp - hm) / (hm * hp)
    wp = hm / (hp * (hm + hp))
    return wm, w0, wp


def deriv1(x, f, axis, left_ghost=None, right_ghost=None):
    """Derivative of f along ``axis`` on nodes x, second order.

    Without ghosts the end nodes use one-sided 3-point stencils.  Ghosts are
    ``(x_ghost, f_slice)`` pairs supplying a virtual neighbour beyond the end;
    ``f_slice`` is the cross-section with ``axis`` removed.
    """
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    xs = np.asarray(x, dtype=float)
    out = np.empty_like(f)
    xx = xs
    ff = f
    lo = 0
    if left_ghost is not None:
        xx = np.concatenate([[left_ghost[0]], xx])
        ff = np.concatenate([np.asarray(left_ghost[1], dtype=float)[None], ff])
        lo = 1
    if right_ghost is not None:
        xx = np.concatenate([xx, [right_ghost[0]]])
        ff = np.concatenate([ff, np.asarray(right_ghost[1], dtype=float)[None]])
    wm, w0, wp = _d1_weights(xx)
    shape = (-1,) + (1,) * (f.ndim - 1)
    inner = wm.reshape(shape) * ff[:-2] + w0.reshape(shape) * ff[1:-1] + wp.reshape(shape) * ff[2:]
    n = len(xs)
    # inner[k] is the derivative at extended node k+1
    ext_deriv = np.empty((len(xx),) + f.shape[1:])
    ext_deriv[1:-1] = inner
    # one-sided ends of the extended array
    for end in (0, -1):
        if end == 0:
            a, b, c = xx[0], xx[1], xx[2]
            fa, fb, fc = ff[0], ff[1], ff[2]
        else:
            a, b, c = xx[-1], xx[-2], xx[-3]
            fa, fb, fc = ff[-1], ff[-2], ff[-3]
        h1, h2 = b - a, c - a
        ext_deriv[end] = (-(h1 + h2) / (h1 * h2) * fa + h2 / (h1 * (h2 - h1)) * fb
                          - h1 / (h2 * (h2 - h1)) * fc)
    out[:] = ext_deriv[lo:lo + n]
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True, eq=False)
class PolarGrid:
    rho: np.ndarray                 # r - 1, from -1 (centre) to 0 (wall)
    theta: np.ndarray
    spec: GridSpec = field(default_factory=GridSpec)

    @cached_property
    def r(self):
        return 1.0 + self.rho

    @property
    def nr(self):
        return len(self.rho)

    @property
    def ntheta(self):
        return len(self.theta)

    @property
    def shape(self):
        return (self.nr, self.ntheta)

    @cached_property
    def mesh(self):
        """(rho, theta) node arrays, each nr x ntheta."""
        return np.meshgrid(self.rho, self.theta, indexing="ij")

    @cached_property
    def points(self):
        """Cartesian node coordinates (x1, x2), each nr x ntheta."""
        P, T = self.mesh
        return from_grid_polar(P, T)

    @cached_property
    def cell_mid(self):
        """(rho, theta) of cell midpoints, each (nr-1) x (ntheta-1)."""
        pm = 0.5 * (self.rho[1:] + self.rho[:-1])
        tm = 0.5 * (self.theta[1:] + self.theta[:-1])
        return np.meshgrid(pm, tm, indexing="ij")

    @cached_property
    def cell_area(self):
        dr2 = 0.5 * np.diff(self.rho) * (self.r[1:] + self.r[:-1])
        dth = np.diff(self.theta)
        return dr2[:, None] * dth[None, :]

    @cached_property
    def cell_mid_points(self):
        P, T = self.cell_mid
        return from_grid_polar(P, T)

    @cached_property
    def min_cell_diameter(self):
        return float(np.min(self.cell_diameters))

    @cached_property
    def cell_diameters(self):
        dr = np.diff(self.rho)[:, None]
        dth = np.diff(self.theta)[None, :]
        return np.sqrt(dr ** 2 + (self.r[1:, None] * dth) ** 2)

    @cached_property
    def node_spacing(self):
        """Per-node local spacing (radial, angular) used by CFL estimates."""
        dr = np.diff(self.rho)
        hr = np.empty(self.nr)
        hr[0], hr[-1] = dr[0], dr[-1]
        hr[1:-1] = np.minimum(dr[1:], dr[:-1])
        dt = np.diff(self.theta)
        ht = np.empty(self.ntheta)
        ht[0], ht[-1] = dt[0], dt[-1]
        ht[1:-1] = np.minimum(dt[1:], dt[:-1])
        return hr, ht

    def locate(self, rho, theta):
        i = np.clip(np.searchsorted(self.rho, rho, side="right") - 1, 0, self.nr - 2)
        j = np.clip(np.searchsorted(self.theta, theta, side="right") - 1, 0, self.ntheta - 2)
        return i, j

    # -- extended angular arrays with reflection ghosts -----------------
    def theta_ext(self):
        t = self.theta
        return np.concatenate([[-t[1]], t, [2.0 * np.pi - t[-2]]])

    @staticmethod
    def values_ext(values, parity):
        v = values
        return np.concatenate([parity * v[:, 1:2], v, parity * v[:, -2:-1]], axis=1)


def from_grid_polar(rho, theta):
    """Cartesian point of (rho, theta); x2 = 2 sin^2(theta/2) - rho cos(theta)."""
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    half = np.sin(0.5 * theta)
    return (1.0 + rho) * np.sin(theta), 2.0 * half * half - rho * np.cos(theta)


def to_grid_polar(x1, x2, parity):
    """Grid coordinates (rho, theta) of query points, folding x1 < 0 by reflection.

    Returns (rho, theta, sign) where ``sign`` is the factor to apply to the
    interpolated value (``parity`` for reflected points, 1 otherwise).
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    neg = x1 < 0
    ax1 = np.abs(x1)
    rho = wall_offset(ax1, x2)
    theta = np.arctan2(ax1, 1.0 - x2)
    sign = np.where(neg, float(parity), 1.0)
    return rho, theta, sign


def _lagrange4(xs, x):
    """Cubic Lagrange weights; xs has shape (4, n), x shape (n,)."""
    w = []
    for k in range(4):
        num = np.ones_like(x)
        den = np.ones_like(x)
        for m in range(4):
            if m != k:
                num = num * (x - xs[m])
                den = den * (xs[k] - xs[m])
        w.append(num / den)
    return w


def interp_cubic(grid: PolarGrid, values, rho, theta, parity=-1, limit=True):
    """Tensor-product cubic Lagrange interpolation clamped to cell bounds.

    ``values`` is the nr x ntheta nodal array; (rho, theta) already folded
    into the half disk.  Exact at nodes; reproduces constants exactly.
    """
    rho = np.minimum(np.asarray(rho, dtype=float).ravel(), 0.0)
    theta = np.asarray(theta, dtype=float).ravel()
    i, j = grid.locate(rho, theta)
    te = grid.theta_ext()
    ve = grid.values_ext(values, parity)
    jr = j[None, :] + np.arange(4)[:, None]            # ext indices j..j+3
    ir = np.clip(i - 1, 0, grid.nr - 4)[None, :] + np.arange(4)[:, None]
    wt = _lagrange4(te[jr], theta)
    wr = _lagrange4(grid.rho[ir], rho)
    acc = np.zeros_like(rho)
    for a in range(4):
        row = np.zeros_like(rho)
        for b in range(4):
            row += wt[b] * ve[ir[a], jr[b]]
        acc += wr[a] * row
    if limit:
        c00 = ve[i, j + 1]
        c01 = ve[i, j + 2]
        c10 = ve[i + 1, j + 1]
        c11 = ve[i + 1, j + 2]
        lo = np.minimum(np.minimum(c00, c01), np.minimum(c10, c11))
        hi = np.maximum(np.maximum(c00, c01), np.maximum(c10, c11))
        acc = np.clip(acc, lo, hi)
    return acc


def interp_linear(grid: PolarGrid, values, rho, theta, parity=-1):
    """Bilinear interpolation in (rho, theta)."""
    rho = np.asarray(rho, dtype=float).ravel()
    theta = np.asarray(theta, dtype=float).ravel()
    i, j = grid.locate(rho, theta)
    r0, r1 = grid.rho[i], grid.rho[i + 1]
    t0, t1 = grid.theta[j], grid.theta[j + 1]
    fr = np.clip((rho - r0) / (r1 - r0), 0.0, 1.0)
    ft = (theta - t0) / (t1 - t0)
    v = values
    return ((1 - fr) * ((1 - ft) * v[i, j] + ft * v[i, j + 1])
            + fr * ((1 - ft) * v[i + 1, j] + ft * v[i + 1, j + 1]))
