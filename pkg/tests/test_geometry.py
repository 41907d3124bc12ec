import math
from decimal import Decimal, localcontext

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diskeuler.geometry import (DomainError, Point2, RegionO, SectorSpec, boundary_height,
                                boundary_point, center_distance, from_polar, image, image_point,
                                in_disk, in_half_disk, in_O, in_Q, in_sector, onto_circle,
                                polar_angle, project_to_disk, reflect, to_polar, wall_offset)

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_image_of_interior_point():
    p = image(Point2(0.0, 1.5))
    assert p == pytest.approx((0.0, 3.0), abs=1e-15)


def test_image_of_centre_raises():
    with pytest.raises(DomainError):
        image_point(0.0, 1.0)


@given(st.floats(0.05, 0.99), st.floats(0, 2 * math.pi))
def test_image_is_involution(rad, ang):
    x1, x2 = from_polar(rad, ang)
    y1, y2 = image_point(*image_point(x1, x2))
    assert (y1, y2) == pytest.approx((x1, x2), abs=1e-12)


@given(st.floats(0.0, 2 * math.pi))
def test_image_fixes_the_circle(ang):
    x1, x2 = from_polar(1.0, ang)
    y1, y2 = image_point(x1, x2)
    assert (y1, y2) == pytest.approx((x1, x2), abs=1e-14)


def test_reflect():
    assert reflect(Point2(0.3, 0.2)) == Point2(-0.3, 0.2)


@pytest.mark.parametrize("x1", [0.0, 1e-12, 1e-6, 0.1, 0.5, 0.9])
def test_boundary_point_on_circle(x1):
    p = boundary_point(x1)
    assert center_distance(p.x1, p.x2) == pytest.approx(1.0, abs=1e-15)
    assert p.x2 <= p.x1 * p.x1


def test_boundary_height_small_argument_is_accurate():
    # x1^2 / 2 to leading order; naive 1 - sqrt(1 - x1^2) would round to 0
    assert boundary_height(1e-10) == pytest.approx(5e-21, rel=1e-12)


@pytest.mark.parametrize("x1", [-0.1, 1.0, 1.5])
def test_boundary_point_domain(x1):
    with pytest.raises(DomainError):
        boundary_point(x1)


def test_membership():
    assert in_disk(0.0, 0.0) and in_disk(0.0, 2.0)
    assert not in_disk(0.0, -1e-9)
    assert not in_disk(np.nan, 0.5)
    assert not in_half_disk(-0.1, 1.0)
    assert in_half_disk(0.1, 1.0)


def test_sectors():
    s1 = SectorSpec(math.pi / 16, 1)
    s2 = SectorSpec(math.pi / 16, 2)
    assert in_sector(0.1, 0.01, s1) and not in_sector(0.1, 0.01, s2)
    assert in_sector(0.01, 0.1, s2) and not in_sector(0.01, 0.1, s1)
    with pytest.raises(DomainError):
        in_sector(0.1, 0.1, SectorSpec(math.pi / 16, 3))
    with pytest.raises(DomainError):
        polar_angle(0.0, 0.0)


def test_region_O_and_Q():
    reg = RegionO(0.01, 0.1)
    assert in_O(reg, 0.05, 0.01)
    assert not in_O(reg, 0.05, 0.06)
    assert not in_O(reg, 0.2, 0.01)
    with pytest.raises(DomainError):
        in_O(RegionO(0.1, 0.01), 0.05, 0.01)
    c = Point2(0.1, 0.1)
    assert in_Q(c, 0.2, 0.2) and not in_Q(c, 0.05, 0.2)


@given(st.floats(0.0, 1.0), st.floats(0.0, math.pi))
def test_polar_round_trip(rad, th):
    x1, x2 = from_polar(rad, th)
    r, t = to_polar(x1, x2)
    assert r == pytest.approx(rad, abs=1e-14)
    if rad > 1e-6:
        assert t == pytest.approx(th, abs=1e-9)


def _offset_decimal(x1, x2):
    with localcontext() as ctx:
        ctx.prec = 80
        a, b = Decimal(x1), Decimal(x2)
        return float((a * a + (1 - b) ** 2).sqrt() - 1)


@pytest.mark.parametrize("x1", [1e-20, 1e-12, 1e-3, 0.5])
def test_wall_offset_resolves_tiny_distances(x1):
    x2 = 2 * float(boundary_height(x1))
    rho = float(wall_offset(x1, x2))
    assert rho < 0
    assert rho == pytest.approx(_offset_decimal(x1, x2), rel=1e-13)


@settings(max_examples=50)
@given(st.floats(0.0, 2 * math.pi), st.floats(1.0, 2.0))
def test_projection_lands_on_circle(ang, rad):
    x1, x2 = from_polar(rad, ang)
    p1, p2, moved = project_to_disk(np.array([x1]), np.array([x2]))
    assert center_distance(p1[0], p2[0]) == pytest.approx(1.0, abs=1e-14)
    assert bool(moved[0]) == (float(wall_offset(x1, x2)) > 0)


def test_projection_keeps_inside_points():
    p1, p2, moved = project_to_disk(np.array([0.1, 0.0]), np.array([0.5, 1.0]))
    assert not moved.any()
    assert p1.tolist() == [0.1, 0.0] and p2.tolist() == [0.5, 1.0]


def test_onto_circle_near_origin():
    x1, x2 = onto_circle(1e-15, -1e-16)
    assert x2 == pytest.approx(float(boundary_height(x1)), abs=1e-30)
