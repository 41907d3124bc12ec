"""Dirichlet Green's function of the disk and its Biot-Savart kernels.

Conventions: ``grad_perp = (d/dx2, -d/dx1)`` and velocity ``u = grad_perp psi``
with ``laplace(psi) = omega``.  All gradients are hand-differentiated closed
forms; finite differences only appear in the tests and in
:func:`kernel_grad_probe`.

Every function broadcasts over array arguments ``(x1, x2, y1, y2)``.
"""

from __future__ import annotations

import numpy as np

from .geometry import DomainError, center_distance, image_point

TWO_PI = 2.0 * np.pi


def _as(*args):
    return [np.asarray(a, dtype=float) for a in args]


def green(x1, x2, y1, y2):
    """G(x, y) = (log|x-y| - log|x-ybar| - log|y-e2|) / 2pi."""
    x1, x2, y1, y2 = _as(x1, x2, y1, y2)
    if np.any((x1 == y1) & (x2 == y2)):
        raise DomainError("Green's function is singular at coincident points")
    yb1, yb2 = image_point(y1, y2)
    d_xy = np.hypot(x1 - y1, x2 - y2)
    d_xyb = np.hypot(x1 - yb1, x2 - yb2)
    return (np.log(d_xy) - np.log(d_xyb) - np.log(center_distance(y1, y2))) / TWO_PI


def green_sym(x1, x2, y1, y2):
    """Odd-symmetrised Green's function G(x, y) - G(x, y~) for y in the half disk.

    The near-cancelling pairs are combined through log1p using
    ``|x-y|^2 - |x~-y|^2 = -4 x1 y1`` (and the same identity for the image).
    """
    x1, x2, y1, y2 = _as(x1, x2, y1, y2)
    yb1, yb2 = image_point(y1, y2)
    s_direct = (x1 + y1) ** 2 + (x2 - y2) ** 2
    s_image = (x1 + yb1) ** 2 + (x2 - yb2) ** 2
    if np.any(s_direct == 0.0):
        raise DomainError("symmetrised Green's function singular at this pair")
    direct = 0.5 * np.log1p(-4.0 * x1 * y1 / s_direct)
    mirror = 0.5 * np.log1p(-4.0 * x1 * yb1 / s_image)
    return (direct - mirror) / TWO_PI


def kernel_K(x1, x2, y1, y2):
    """Biot-Savart kernel grad_perp_x G(x, y); returns (k1, k2)."""
    x1, x2, y1, y2 = _as(x1, x2, y1, y2)
    yb1, yb2 = image_point(y1, y2)
    a1, a2 = x1 - y1, x2 - y2
    b1, b2 = x1 - yb1, x2 - yb2
    ra = a1 * a1 + a2 * a2
    if np.any(ra == 0.0):
        raise DomainError("kernel singular at coincident points")
    rb = b1 * b1 + b2 * b2
    k1 = (a2 / ra - b2 / rb) / TWO_PI
    k2 = -(a1 / ra - b1 / rb) / TWO_PI
    return k1, k2


def kernel_sym(x1, x2, y1, y2, parity=-1):
    """Half-disk kernel for a symmetric source pair (y, y~).

    ``parity=-1`` (default) is the odd extension omega(y~) = -omega(y) used
    throughout; ``parity=+1`` is the even extension used by test modes.
    The pairing of x with x~ is written so the x1=0 axis produces an exactly
    zero first component in the odd case.
    """
    x1, x2, y1, y2 = _as(x1, x2, y1, y2)
    if np.any((x1 == y1) & (x2 == y2)) or (parity > 0 and np.any((x1 == -y1) & (x2 == y2))):
        raise DomainError("symmetrised kernel singular at this pair")
    return kernel_sym_raw(x1, x2, y1, y2, parity)


def kernel_sym_raw(x1, x2, y1, y2, parity=-1):
    """:func:`kernel_sym` without argument checks (singular pairs give inf/nan)."""
    yb1, yb2 = image_point(y1, y2)
    dy2 = x2 - y2
    dyb2 = x2 - yb2
    r_xy = (x1 - y1) ** 2 + dy2 ** 2
    r_txy = (x1 + y1) ** 2 + dy2 ** 2
    r_xyb = (x1 - yb1) ** 2 + dyb2 ** 2
    r_txyb = (x1 + yb1) ** 2 + dyb2 ** 2
    if parity < 0:
        # d/dx2 of the four-term log, combined pairwise without cancellation
        k1 = (dy2 * 4.0 * x1 * y1 / (r_xy * r_txy)
              - dyb2 * 4.0 * x1 * yb1 / (r_xyb * r_txyb)) / TWO_PI
        k2 = -((x1 - y1) / r_xy - (x1 - yb1) / r_xyb
               - (x1 + y1) / r_txy + (x1 + yb1) / r_txyb) / TWO_PI
    else:
        k1 = (dy2 / r_xy + dy2 / r_txy - dyb2 / r_xyb - dyb2 / r_txyb) / TWO_PI
        k2 = -((x1 - y1) / r_xy - (x1 - yb1) / r_xyb
               + (x1 + y1) / r_txy - (x1 + yb1) / r_txyb) / TWO_PI
    return k1, k2


def kernel_q1(x1, x2, y1, y2):
    """First component of the odd kernel divided by x1.

    Finite on the axis; integrates to u1/x1.
    """
    yb1, yb2 = image_point(y1, y2)
    dy2 = x2 - y2
    dyb2 = x2 - yb2
    r_xy = (x1 - y1) ** 2 + dy2 ** 2
    r_txy = (x1 + y1) ** 2 + dy2 ** 2
    r_xyb = (x1 - yb1) ** 2 + dyb2 ** 2
    r_txyb = (x1 + yb1) ** 2 + dyb2 ** 2
    return (dy2 * 4.0 * y1 / (r_xy * r_txy) - dyb2 * 4.0 * yb1 / (r_xyb * r_txyb)) / TWO_PI


def random_interior_points(rng, n, rmax=0.98):
    """Uniform random points of the disk with |p - e2| < rmax."""
    rad = rmax * np.sqrt(rng.random(n))
    ang = TWO_PI * rng.random(n)
    return rad * np.sin(ang), 1.0 - rad * np.cos(ang)


def kernel_grad_probe(samples, rng=None, min_separation=0.0, h=1e-6, pairs=None):
    """Empirical constant in |grad_x K_D(x, y)| <= C |x - y|^-2.

    Draws ``samples`` random interior pairs (or uses ``pairs``, a tuple
    ``(x1, x2, y1, y2)`` of arrays), differentiates ``kernel_K`` by centred
    differences and returns the max of ``|grad K| |x-y|^2`` (Frobenius norm).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if pairs is None:
        rng = np.random.default_rng(0) if rng is None else rng
        xs1, xs2, ys1, ys2 = [], [], [], []
        need = samples
        while need > 0:
            a1, a2 = random_interior_points(rng, 2 * need)
            b1, b2 = random_interior_points(rng, 2 * need)
            sep = np.hypot(a1 - b1, a2 - b2)
            keep = sep > max(min_separation, 1e3 * h)
            xs1.append(a1[keep][:need]); xs2.append(a2[keep][:need])
            ys1.append(b1[keep][:need]); ys2.append(b2[keep][:need])
            need -= int(min(keep.sum(), need))
        x1, x2, y1, y2 = map(np.concatenate, (xs1, xs2, ys1, ys2))
    else:
        x1, x2, y1, y2 = _as(*pairs)
    pk = kernel_K(x1 + h, x2, y1, y2)
    mk = kernel_K(x1 - h, x2, y1, y2)
    pl = kernel_K(x1, x2 + h, y1, y2)
    ml = kernel_K(x1, x2 - h, y1, y2)
    g = np.zeros_like(x1)
    for c in range(2):
        g += ((pk[c] - mk[c]) / (2 * h)) ** 2 + ((pl[c] - ml[c]) / (2 * h)) ** 2
    sep2 = (x1 - y1) ** 2 + (x2 - y2) ** 2
    return float(np.max(np.sqrt(g) * sep2))
