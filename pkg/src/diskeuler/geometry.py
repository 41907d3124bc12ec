"""Disk geometry in boundary-origin coordinates.

The unit disk has its lowest boundary point at the origin and its centre at
``E2 = (0, 1)``.  All predicates and maps accept scalars or numpy arrays and
broadcast; the ``Point2`` wrappers exist for readability at call sites.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

E2 = (0.0, 1.0)


class DomainError(ValueError):
    """Raised when a geometric operation is undefined for its input."""


class Point2(NamedTuple):
    x1: float
    x2: float


class SectorSpec(NamedTuple):
    gamma: float
    index: int

    def check(self):
        if not (0.0 < self.gamma < np.pi / 2):
            raise DomainError(f"sector angle must lie in (0, pi/2), got {self.gamma}")
        if self.index not in (1, 2):
            raise DomainError(f"sector index must be 1 or 2, got {self.index}")


class RegionO(NamedTuple):
    """The wedge ``{a_lo < x1 < b_hi, x2 < x1}`` inside the half disk."""

    a_lo: float
    b_hi: float

    def check(self):
        if not (0.0 < self.a_lo < self.b_hi < 1.0):
            raise DomainError(f"need 0 < a_lo < b_hi < 1, got {self.a_lo}, {self.b_hi}")


def center_distance(x1, x2):
    return np.hypot(x1, np.asarray(x2) - 1.0)


def image_point(x1, x2):
    """Inversion across the unit circle about the centre: e2 + (y-e2)/|y-e2|^2."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    d1, d2 = x1, x2 - 1.0
    rr = d1 * d1 + d2 * d2
    if np.any(rr == 0.0):
        raise DomainError("image of the disk centre is at infinity")
    return d1 / rr, 1.0 + d2 / rr


def image(p: Point2) -> Point2:
    return Point2(*map(float, image_point(p.x1, p.x2)))


def reflect(p: Point2) -> Point2:
    return Point2(-p.x1, p.x2)


def _finite(x1, x2):
    return np.isfinite(x1) & np.isfinite(x2)


def in_disk(x1, x2):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    with np.errstate(invalid="ignore"):
        return _finite(x1, x2) & (center_distance(x1, x2) <= 1.0)


def in_half_disk(x1, x2):
    with np.errstate(invalid="ignore"):
        return in_disk(x1, x2) & (np.asarray(x1) >= 0.0)


def polar_angle(x1, x2):
    """Angle at the origin, counter-clockwise from the positive x1 axis."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if np.any((x1 == 0.0) & (x2 == 0.0)):
        raise DomainError("polar angle undefined at the origin")
    return np.arctan2(x2, x1)


def in_sector(x1, x2, sector: SectorSpec):
    sector.check()
    phi = polar_angle(x1, x2)
    if sector.index == 1:
        inside = (phi >= 0.0) & (phi <= np.pi / 2 - sector.gamma)
    else:
        inside = (phi >= sector.gamma) & (phi <= np.pi / 2)
    return inside & in_half_disk(x1, x2)


def in_Q(corner: Point2, y1, y2):
    """Membership of y in the half disk intersected with the quadrant above/right of corner."""
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    with np.errstate(invalid="ignore"):
        return in_half_disk(y1, y2) & (y1 >= corner.x1) & (y2 >= corner.x2)


def in_O(region: RegionO, x1, x2):
    region.check()
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    with np.errstate(invalid="ignore"):
        return in_half_disk(x1, x2) & (x1 > region.a_lo) & (x1 < region.b_hi) & (x2 < x1)


def boundary_height(x1):
    """Height of the lower boundary arc above the origin at abscissa x1.

    Written as x1^2 / (1 + sqrt(1 - x1^2)) to stay accurate for tiny x1.
    """
    x1 = np.asarray(x1, dtype=float)
    return x1 * x1 / (1.0 + np.sqrt(1.0 - x1 * x1))


def boundary_point(x1: float) -> Point2:
    if not (0.0 <= x1 < 1.0):
        raise DomainError(f"boundary abscissa must lie in [0, 1), got {x1}")
    return Point2(float(x1), float(boundary_height(x1)))


def to_polar(x1, x2):
    """Disk-centred polar coordinates (r, theta); theta=0 points at the origin.

    A point maps back as (r sin(theta), 1 - r cos(theta)).  theta lies in
    [-pi, pi]; it is in [0, pi] for x1 >= 0.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return np.hypot(x1, 1.0 - x2), np.arctan2(x1, 1.0 - x2)


def from_polar(r, theta):
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return r * np.sin(theta), 1.0 - r * np.cos(theta)


def wall_offset(x1, x2):
    """|x - e2| - 1 without cancellation: (x1^2 + x2^2 - 2 x2) / (1 + |x - e2|)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return (x1 * x1 + x2 * (x2 - 2.0)) / (1.0 + center_distance(x1, x2))


def onto_circle(x1, x2):
    """Radial projection of points onto the boundary circle, accurate near the origin."""
    rho = wall_offset(x1, x2)
    return np.asarray(x1) / (1.0 + rho), (np.asarray(x2) + rho) / (1.0 + rho)


def project_to_disk(x1, x2):
    """Radially project points outside the closed disk onto the circle.

    Returns the projected coordinates and a boolean mask of moved points.
    """
    x1 = np.asarray(x1, dtype=float).copy()
    x2 = np.asarray(x2, dtype=float).copy()
    out = wall_offset(x1, x2) > 0.0
    if np.any(out):
        x1[out], x2[out] = onto_circle(x1[out], x2[out])
    return x1, x2, out
