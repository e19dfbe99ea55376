from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from conftest import random_box, rotated_boxes
from fisheyeloc.camera import ImagePoint
from fisheyeloc.errors import DegenerateRadialError, ValidationError
from fisheyeloc.geometry import (
    RadiusAlignedBox,
    RotatedBox,
    anchor_point,
    clip_polygon,
    convex_hull,
    intersect_area,
    min_enclosing_box,
    min_enclosing_box_grid,
    polygon_area,
    rotate_box,
    rotate_point,
    rotate_radius_aligned,
    rotated_giou,
    rotated_iou,
    wrap_angle,
)

ORIGIN = ImagePoint(0.0, 0.0)
angles = st.floats(-4 * math.pi, 4 * math.pi, allow_nan=False)


def unit_square(cx: float, cy: float = 0.0) -> RotatedBox:
    return RotatedBox(cx, cy, 1.0, 1.0, 0.0)


def inside(box: RotatedBox, pts: np.ndarray) -> np.ndarray:
    """Point-in-box test in box-local coordinates (h along alpha, w across)."""
    c, s = math.cos(box.alpha), math.sin(box.alpha)
    d = pts - (box.cx, box.cy)
    along = d[:, 0] * c + d[:, 1] * s
    across = d[:, 0] * s - d[:, 1] * c
    return (np.abs(along) <= 0.5 * box.h) & (np.abs(across) <= 0.5 * box.w)


def monte_carlo_intersection(a: RotatedBox, b: RotatedBox, n: int, rng) -> tuple[float, float]:
    """Area estimate and its binomial standard error, sampling a's bounding rectangle."""
    corners = a.corners()
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    pts = rng.uniform(lo, hi, size=(n, 2))
    hit = inside(a, pts) & inside(b, pts)
    frame = float(np.prod(hi - lo))
    p = hit.mean()
    return frame * p, frame * math.sqrt(max(p * (1 - p), 1.0 / n) / n)


# ---------------------------------------------------------------------------
# Box types

def test_corners_counter_clockwise_from_local_minus_minus():
    b = RotatedBox(0.0, 0.0, 2.0, 4.0, 0.0)
    # h runs along +u, w along -v
    assert b.corners().tolist() == [[-2.0, 1.0], [-2.0, -1.0], [2.0, -1.0], [2.0, 1.0]]
    assert polygon_area(b.corners()) == pytest.approx(8.0)


@given(rotated_boxes())
def test_corner_polygon_has_box_area(b):
    assert polygon_area(b.corners()) == pytest.approx(b.area, rel=1e-9)


@pytest.mark.parametrize("w,h", [(0.0, 1.0), (1.0, 1e-7), (-1.0, 1.0), (math.inf, 1.0)])
def test_degenerate_boxes_rejected(w, h):
    with pytest.raises(ValidationError):
        RotatedBox(0.0, 0.0, w, h)
    with pytest.raises(ValidationError):
        RadiusAlignedBox(0.0, 0.0, w, h)


@given(angles)
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.cos(w) == pytest.approx(math.cos(a), abs=1e-9)


def test_wrap_angle_maps_minus_pi_to_pi():
    assert wrap_angle(-math.pi) == math.pi


def test_radius_aligned_alpha_is_radial():
    box = RadiusAlignedBox(10.0, 10.0, 2.0, 3.0)
    assert box.alpha(ORIGIN) == pytest.approx(math.pi / 4)
    assert box.to_rotated(ORIGIN) == RotatedBox(10.0, 10.0, 2.0, 3.0, box.alpha(ORIGIN))


def test_radius_aligned_equality_is_fieldwise():
    assert RadiusAlignedBox(1, 2, 3, 4) == RadiusAlignedBox(1.0, 2.0, 3.0, 4.0)
    assert RadiusAlignedBox(1, 2, 3, 4) != RadiusAlignedBox(1, 2, 4, 3)


# ---------------------------------------------------------------------------
# Rotation

def test_rotate_by_zero_is_identity(rng):
    b = random_box(rng)
    assert rotate_box(b, 0.0, ImagePoint(3.0, -2.0)) == b


@given(rotated_boxes())
def test_full_turn_is_identity(b):
    r = rotate_box(b, 2 * math.pi, ImagePoint(1.0, 2.0))
    assert r.cx == pytest.approx(b.cx, abs=1e-9)
    assert r.cy == pytest.approx(b.cy, abs=1e-9)
    assert math.remainder(r.alpha - b.alpha, 2 * math.pi) == pytest.approx(0.0, abs=1e-9)


def test_quarter_turn():
    r = rotate_box(RotatedBox(100.0, 0.0, 4.0, 2.0, 0.0), math.pi / 2, ORIGIN)
    assert (r.cx, r.cy) == pytest.approx((0.0, 100.0), abs=1e-12)
    assert r.alpha == pytest.approx(math.pi / 2)
    assert (r.w, r.h) == (4.0, 2.0)


@given(rotated_boxes(), angles, angles)
def test_rotation_is_a_group_action(b, a1, a2):
    pivot = ImagePoint(0.3, -0.7)
    two = rotate_box(rotate_box(b, a1, pivot), a2, pivot)
    one = rotate_box(b, a1 + a2, pivot)
    assert (two.cx, two.cy) == pytest.approx((one.cx, one.cy), abs=1e-9)
    assert math.remainder(two.alpha - one.alpha, 2 * math.pi) == pytest.approx(0.0, abs=1e-9)


def test_half_turn_of_radius_aligned_box():
    r = rotate_radius_aligned(RadiusAlignedBox(50.0, 0.0, 4.0, 9.0), math.pi, ORIGIN)
    assert (r.cx, r.cy) == pytest.approx((-50.0, 0.0), abs=1e-12)
    assert (r.w, r.h) == (4.0, 9.0)


@given(st.floats(-100, 100), st.floats(-100, 100), angles)
def test_radius_alignment_preserved(cx, cy, angle):
    assume(math.hypot(cx, cy) > 1e-3)
    box = RadiusAlignedBox(cx, cy, 2.0, 5.0)
    r = rotate_radius_aligned(box, angle, ORIGIN)
    d = math.remainder(r.alpha(ORIGIN) - box.alpha(ORIGIN) - angle, 2 * math.pi)
    assert abs(d) <= 1e-12 * max(1.0, abs(angle))
    # conversion commutes with rotation
    via_rotated = rotate_box(box.to_rotated(ORIGIN), angle, ORIGIN)
    assert r.to_rotated(ORIGIN).as_list()[:4] == pytest.approx(via_rotated.as_list()[:4], abs=1e-9)
    assert math.remainder(r.to_rotated(ORIGIN).alpha - via_rotated.alpha, 2 * math.pi) == pytest.approx(0, abs=1e-9)


# ---------------------------------------------------------------------------
# Overlap

def test_self_intersection_is_area(rng):
    b = random_box(rng)
    assert intersect_area(b, b) == pytest.approx(b.area, rel=1e-12)


def test_half_overlap():
    assert intersect_area(unit_square(0.0), unit_square(0.5)) == pytest.approx(0.5, abs=1e-12)
    assert rotated_iou(unit_square(0.0), unit_square(0.5)) == pytest.approx(1 / 3, abs=1e-12)


def test_iou_extremes():
    assert rotated_iou(unit_square(0.0), unit_square(0.0)) == 1.0
    assert rotated_iou(unit_square(0.0), unit_square(5.0)) == 0.0


def test_clip_of_disjoint_polygons_is_empty():
    assert clip_polygon(unit_square(0.0).corners(), unit_square(3.0).corners()).area == 0.0


@given(rotated_boxes(), rotated_boxes())
def test_intersection_symmetric_and_bounded(a, b):
    ab, ba = intersect_area(a, b), intersect_area(b, a)
    assert ab == pytest.approx(ba, abs=1e-9)
    assert -1e-9 <= ab <= min(a.area, b.area) + 1e-9
    assert 0.0 <= rotated_iou(a, b) <= 1.0


def test_intersection_matches_monte_carlo():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a, b = random_box(rng, 3.0), random_box(rng, 3.0)
        est, se = monte_carlo_intersection(a, b, 200_000, rng)
        assert abs(intersect_area(a, b) - est) <= 3 * se + 1e-12


@given(rotated_boxes(), rotated_boxes(), angles, st.floats(-5, 5), st.floats(-5, 5))
def test_overlap_metrics_rotation_invariant(a, b, angle, pu, pv):
    pivot = ImagePoint(pu, pv)
    ra, rb = rotate_box(a, angle, pivot), rotate_box(b, angle, pivot)
    assert rotated_iou(ra, rb) == pytest.approx(rotated_iou(a, b), abs=1e-9)
    assert rotated_giou(ra, rb) == pytest.approx(rotated_giou(a, b), abs=1e-9)


# ---------------------------------------------------------------------------
# Enclosing box and GIoU

def test_hull_of_square_corners():
    assert len(convex_hull([(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)])) == 4


def test_enclosing_box_of_identical_boxes(rng):
    b = random_box(rng)
    assert min_enclosing_box(b, b).area == pytest.approx(b.area, abs=1e-9)


def test_enclosing_box_of_collinear_squares():
    assert min_enclosing_box(unit_square(0.0), unit_square(2.0)).area == pytest.approx(3.0, abs=1e-12)


@given(rotated_boxes(), rotated_boxes())
def test_enclosing_box_contains_both(a, b):
    e = min_enclosing_box(a, b)
    grown = RotatedBox(e.cx, e.cy, e.w * (1 + 1e-9) + 1e-9, e.h * (1 + 1e-9) + 1e-9, e.alpha)
    assert inside(grown, np.vstack([a.corners(), b.corners()])).all()


def test_hull_edge_box_never_worse_than_grid():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a, b = random_box(rng), random_box(rng)
        assert min_enclosing_box(a, b).area <= min_enclosing_box_grid(a, b).area * (1 + 1e-12)


def test_grid_gap_within_angular_resolution_bound():
    # a 0.05 degree orientation error costs at most about delta*(L/W + W/L)
    # relative area on a rectangle with sides L, W
    rng = np.random.default_rng(6)
    delta = math.radians(0.05)
    for _ in range(50):
        a, b = random_box(rng), random_box(rng)
        exact = min_enclosing_box(a, b)
        grid = min_enclosing_box_grid(a, b)
        ratio = exact.h / exact.w
        bound = delta * (ratio + 1 / ratio) + delta**2 * 2
        assert grid.area / exact.area - 1 <= bound


def test_giou_identical_boxes():
    assert rotated_giou(unit_square(0.0), unit_square(0.0)) == pytest.approx(1.0)


def test_giou_closed_form_for_distant_squares():
    assert rotated_giou(unit_square(0.0), unit_square(10.0)) == pytest.approx(-9 / 11, abs=1e-12)


@given(rotated_boxes(), rotated_boxes())
def test_giou_bounds(a, b):
    g = rotated_giou(a, b)
    assert -1.0 < g <= 1.0
    assert g <= rotated_iou(a, b) + 1e-12


@given(rotated_boxes(), st.floats(0.1, 0.9), st.floats(0.1, 0.9))
def test_giou_equals_iou_under_containment(outer, sw, sh):
    inner = RotatedBox(outer.cx, outer.cy, outer.w * sw, outer.h * sh, outer.alpha)
    assert rotated_giou(outer, inner) == pytest.approx(rotated_iou(outer, inner), abs=1e-9)


# ---------------------------------------------------------------------------
# Anchor point

@pytest.mark.parametrize("box,expected", [
    (RadiusAlignedBox(100.0, 0.0, 10.0, 40.0), (80.0, 0.0)),
    (RadiusAlignedBox(0.0, 60.0, 10.0, 20.0), (0.0, 50.0)),
])
def test_anchor_on_axis(box, expected):
    p = anchor_point(box, ORIGIN)
    assert (p.u, p.v) == pytest.approx(expected, abs=1e-12)


def test_anchor_at_principal_is_degenerate():
    with pytest.raises(DegenerateRadialError):
        anchor_point(RadiusAlignedBox(5.0, 5.0, 1.0, 1.0), ImagePoint(5.0, 5.0))


@given(st.floats(-500, 500), st.floats(-500, 500), st.floats(1, 50), st.floats(1, 50))
def test_anchor_is_nearest_side_midpoint(cx, cy, w, h):
    assume(math.hypot(cx, cy) > 1.0)
    box = RadiusAlignedBox(cx, cy, w, h)
    c = box.to_rotated(ORIGIN).corners()
    mids = [(c[i] + c[(i + 1) % 4]) / 2 for i in range(4)]
    # sides 0-1 and 2-3 are perpendicular to the radial h axis
    radial = [mids[0], mids[2]]
    nearest = min(radial, key=lambda m: math.hypot(*m))
    p = anchor_point(box, ORIGIN)
    assert (p.u, p.v) == pytest.approx(tuple(nearest), abs=1e-9)


@given(st.floats(-500, 500), st.floats(-500, 500), angles)
def test_anchor_equivariance(cx, cy, angle):
    principal = ImagePoint(1476.0, 1476.0)
    box = RadiusAlignedBox(principal.u + cx, principal.v + cy, 8.0, 20.0)
    assume(math.hypot(cx, cy) > 1e-3)
    a = anchor_point(rotate_radius_aligned(box, angle, principal), principal)
    b = rotate_point(anchor_point(box, principal), angle, principal)
    assert (a.u, a.v) == pytest.approx((b.u, b.v), abs=1e-9)
