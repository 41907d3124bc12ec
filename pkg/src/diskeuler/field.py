"""Odd-symmetric vorticity on the half-disk lattice.

Only the right half disk is stored; the odd extension is implicit and every
query with x1 < 0 is answered by reflection, so the symmetry residual is
zero by construction.  Snapshot files use the little-endian layout::

    b"EULDISK1" | nr:u64 | ntheta:u64 | time:f64 | values: nr*ntheta f64 (row-major, r outer)
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass

import numpy as np

from .geometry import DomainError
from .grid import GridError, GridSpec, PolarGrid, deriv1, interp_cubic, to_grid_polar

MAGIC = b"EULDISK1"
_HEADER = struct.Struct("<8sQQd")


class ConfigurationError(ValueError):
    pass


class SnapshotError(ValueError):
    pass


@dataclass(eq=False)
class VorticityField:
    grid: PolarGrid
    values: np.ndarray
    time: float = 0.0
    parity: int = -1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid {self.grid.shape}")
        self.pin_axis()

    @property
    def nr(self):
        return self.grid.nr

    @property
    def ntheta(self):
        return self.grid.ntheta

    def pin_axis(self):
        if self.parity < 0:
            self.values[:, 0] = 0.0
            self.values[:, -1] = 0.0
            self.values[0, :] = 0.0

    def with_values(self, values, time=None):
        return VorticityField(self.grid, values, self.time if time is None else time, self.parity)

    def scaled(self, alpha):
        return self.with_values(alpha * self.values)

    def copy(self):
        return self.with_values(self.values.copy())


@dataclass(frozen=True)
class DataParams:
    epsilon: float = 0.05
    delta: float = 0.2
    cutoff_exponent: float = 3.0
    smoothing_width: float = 0.5

    def validate(self):
        if not (0.0 < self.epsilon < self.delta < 1.0):
            raise ConfigurationError(
                f"need 0 < epsilon < delta < 1 (got epsilon={self.epsilon}, delta={self.delta})")
        if self.smoothing_width <= 0.0:
            raise ConfigurationError("smoothing_width must be > 0")
        if self.cutoff_exponent < 1.0:
            raise ConfigurationError("cutoff_exponent must be >= 1")

    @property
    def a0(self):
        return self.epsilon ** self.cutoff_exponent

    @property
    def b0(self):
        return self.epsilon


def smoothstep(s):
    """Quintic C2 ramp: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


def zero_field(grid: PolarGrid, parity=-1) -> VorticityField:
    return VorticityField(grid, np.zeros(grid.shape), 0.0, parity)


def field_from_function(grid: PolarGrid, fn, parity=-1) -> VorticityField:
    x1, x2 = grid.points
    return VorticityField(grid, np.array(fn(x1, x2), dtype=float) * np.ones(grid.shape), 0.0, parity)


def build_strip_data(delta, w, grid: PolarGrid) -> VorticityField:
    """One on the half disk except a strip of width ``delta`` along the axis.

    The profile ramps 0 -> 1 in x1 over ``[delta - w, delta]``.
    """
    if not (0.0 < delta < 0.5):
        raise ConfigurationError(f"strip width must lie in (0, 0.5), got {delta}")
    if not (0.0 < w < delta):
        raise ConfigurationError(f"need 0 < w < delta, got w={w}, delta={delta}")
    x1, _ = grid.points
    return VorticityField(grid, smoothstep((x1 - (delta - w)) / w))


def ks_profile(x1, x2, params: DataParams):
    """Initial vorticity for the double-exponential scenario, evaluated pointwise.

    Near the origin the data is a plateau on the wedge O(a0, b0) (a0 = eps^p,
    b0 = eps).  The left and right cutoffs are ramps of relative width
    ``sigma = smoothing_width`` just outside the wedge; across the diagonal the
    plateau extends to x2/x1 = 1 + sigma before ramping to zero at 1 + 2 sigma,
    so that the wedge is strictly inside the plateau.  Away from the origin it is one outside the ball ``|x| < delta`` and
    outside the axis strip ``x1 < delta`` with ramps of width ``sigma*delta``.
    """
    sig = params.smoothing_width
    a0, b0, d = params.a0, params.b0, params.delta
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    s_left = smoothstep((x1 - a0 * (1.0 - sig)) / (sig * a0))
    s_right = 1.0 - smoothstep((x1 - b0) / (sig * b0))
    safe = np.where(x1 > 0, x1, 1.0)
    ratio = np.where(x1 > 0, x2 / safe, np.inf)
    s_diag = 1.0 - smoothstep((ratio - 1.0 - sig) / sig)
    near = s_left * s_right * s_diag
    wf = sig * d
    far = smoothstep((x1 - (d - wf)) / wf) * smoothstep((np.hypot(x1, x2) - (d - wf)) / wf)
    return np.maximum(near, far)


def build_ks_data(params: DataParams, grid: PolarGrid, min_cells=3) -> VorticityField:
    params.validate()
    sig = params.smoothing_width
    if sig >= 1.0:
        raise ConfigurationError("smoothing_width must be < 1 for the wedge data")
    if params.b0 * (1.0 + sig) * np.hypot(1.0, 1.0 + 2.0 * sig) >= params.delta:
        raise ConfigurationError("wedge neighbourhood must sit inside the ball |x| < delta")
    a0 = params.a0
    lo, hi = a0 * (1.0 - sig), a0
    # the left ramp lives at the wall where arc length ~ theta
    n_inside = int(np.count_nonzero((grid.theta >= lo) & (grid.theta <= hi)))
    if n_inside < min_cells:
        dth = np.diff(grid.theta)
        j = int(np.searchsorted(grid.theta, hi))
        have = dth[min(j, len(dth) - 1)]
        raise ConfigurationError(
            f"cutoff width {sig * a0:.3e} at x1={a0:.3e} is unresolved: local angular spacing "
            f"{have:.3e}, need <= {sig * a0 / min_cells:.3e} (refine theta_h0/ntheta)")
    x1, x2 = grid.points
    return VorticityField(grid, ks_profile(x1, x2, params))


def sample(fld: VorticityField, x1, x2, tol=1e-12):
    """Interpolated vorticity at points of the closed disk (odd reflection for x1 < 0)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    shape = np.broadcast(x1, x2).shape
    x1, x2 = np.broadcast_arrays(x1, x2)
    r, th, sign = to_grid_polar(x1, x2, fld.parity)
    if np.any(~np.isfinite(r)) or np.any(r > tol):
        raise DomainError("sample point outside the disk")
    v = interp_cubic(fld.grid, fld.values, np.minimum(r, 0.0).ravel(), th.ravel(), fld.parity)
    out = v.reshape(shape) * sign
    return out if shape else float(out)


def sup_norm(fld: VorticityField) -> float:
    return float(np.max(np.abs(fld.values))) if fld.values.size else 0.0


def polar_gradient(grid: PolarGrid, values, parity=-1):
    """(d/dr, d/dtheta) of nodal values with reflection ghosts in theta."""
    th = grid.theta
    v_r = deriv1(grid.rho, values, axis=0)
    v_t = deriv1(th, values, axis=1,
                 left_ghost=(-th[1], parity * values[:, 1]),
                 right_ghost=(2 * np.pi - th[-2], parity * values[:, -2]))
    return v_r, v_t


def grad_magnitude(fld: VorticityField):
    """Nodal |grad omega| in physical coordinates; the centre row is excluded (NaN)."""
    g = fld.grid
    v_r, v_t = polar_gradient(g, fld.values, fld.parity)
    mag = np.full(g.shape, np.nan)
    mag[1:] = np.hypot(v_r[1:], v_t[1:] / g.r[1:, None])
    return mag


def grad_sup_fd(fld: VorticityField) -> float:
    if fld.nr < 4 or fld.ntheta < 4:
        raise GridError("need nr, ntheta >= 4")
    return float(np.nanmax(grad_magnitude(fld)))


def level_set_area(fld: VorticityField, threshold, sub=4) -> float:
    """Measure of {omega > threshold} in the half disk.

    Each cell is split into ``sub x sub`` pieces, the bilinear interpolant of
    its corners decides each piece; cells straddling the level set therefore
    count fractionally.
    """
    v = fld.values
    c00, c01 = v[:-1, :-1], v[:-1, 1:]
    c10, c11 = v[1:, :-1], v[1:, 1:]
    r = fld.grid.r
    r_lo, dr = r[:-1, None], np.diff(fld.grid.rho)[:, None]
    r_mid = r_lo + 0.5 * dr
    s = (np.arange(sub) + 0.5) / sub
    frac = np.zeros_like(c00)
    for fr in s:
        # polar sub-pieces have area proportional to their radius
        w_r = (r_lo + fr * dr) / r_mid
        for ft in s:
            val = (1 - fr) * ((1 - ft) * c00 + ft * c01) + fr * ((1 - ft) * c10 + ft * c11)
            frac += w_r * (val > threshold)
    frac /= sub * sub
    return float(np.sum(frac * fld.grid.cell_area))


# -- persistence -----------------------------------------------------------

def snapshot_bytes(fld: VorticityField) -> bytes:
    head = _HEADER.pack(MAGIC, fld.nr, fld.ntheta, float(fld.time))
    return head + np.ascontiguousarray(fld.values, dtype="<f8").tobytes()


def write_snapshot(fld: VorticityField, path):
    """Write atomically: staging file then rename."""
    path = os.fspath(path)
    tmp = path + ".partial"
    with open(tmp, "wb") as fh:
        fh.write(snapshot_bytes(fld))
    os.replace(tmp, path)


def parse_snapshot(data: bytes):
    if len(data) < _HEADER.size:
        raise SnapshotError("snapshot truncated")
    magic, nr, nth, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"bad snapshot magic {magic!r}")
    n = nr * nth
    body = data[_HEADER.size:]
    if len(body) != 8 * n:
        raise SnapshotError(f"snapshot body has {len(body)} bytes, expected {8 * n}")
    values = np.frombuffer(body, dtype="<f8").reshape(nr, nth).astype(float)
    return values, t


def read_snapshot(path, grid: PolarGrid | None = None, spec: GridSpec | None = None):
    with open(path, "rb") as fh:
        values, t = parse_snapshot(fh.read())
    if grid is None:
        spec = spec or GridSpec(nr=values.shape[0], ntheta=values.shape[1])
        grid = spec.build()
    if grid.shape != values.shape:
        raise SnapshotError(f"snapshot lattice {values.shape} does not match grid {grid.shape}")
    fld = VorticityField(grid, values.copy(), t)
    return fld


def field_csv(fld: VorticityField) -> str:
    g = fld.grid
    P, T = g.mesh
    R = 1.0 + P
    x1, x2 = g.points
    buf = io.StringIO()
    buf.write("r,theta,x1,x2,value\n")
    rows = np.column_stack([R.ravel(), T.ravel(), x1.ravel(), x2.ravel(), fld.values.ravel()])
    for row in rows:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()
