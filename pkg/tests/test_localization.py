from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fisheyeloc.camera import FisheyeModel, ImagePoint, pixel_to_ray
from fisheyeloc.errors import OutOfRangeError, UnlocalizableError, ValidationError
from fisheyeloc.geometry import RadiusAlignedBox, rotate_radius_aligned
from fisheyeloc.localization import (
    AnchorStrategy,
    compare_strategies,
    localize,
    localize_point,
    positional_error,
    select_anchor,
)
from fisheyeloc.matching import GroundTruthBox
from fisheyeloc.sim import Person, Scene, SceneConfig, default_model, generate_scene, render_annotations

EQUI = FisheyeModel(1000.0, 1476.0, 1476.0, (1, 0, 0, 0, 0), 3.0)
RADIAL = AnchorStrategy.RADIAL_NEAR_MIDPOINT


def test_nadir_box_localizes_to_origin():
    res = localize(RadiusAlignedBox(1476.0, 1476.0, 40.0, 40.0), EQUI)
    assert (res.X, res.Y) == (0.0, 0.0)
    assert res.anchor == EQUI.principal


def test_equidistant_closed_form():
    # anchor at r = pi/4 on the +u axis means theta = pi/4, so X = Z * tan(pi/4)
    r = 1000.0 * math.pi / 4
    box = RadiusAlignedBox(1476.0 + r + 30.0, 1476.0, 20.0, 60.0)
    res = localize(box, EQUI)
    assert (res.X, res.Y) == pytest.approx((3.0, 0.0), abs=1e-9)


def test_box_center_and_head_strategies():
    box = RadiusAlignedBox(1876.0, 1476.0, 20.0, 60.0)
    assert select_anchor(box, EQUI.principal, AnchorStrategy.BOX_CENTER) == ImagePoint(1876.0, 1476.0)
    head = ImagePoint(1900.0, 1476.0)
    assert select_anchor(box, EQUI.principal, "head-center", head) == head
    with pytest.raises(ValidationError):
        select_anchor(box, EQUI.principal, AnchorStrategy.HEAD_CENTER)


def test_horizon_guard():
    rim = ImagePoint(1476.0 + 1000.0 * (math.pi / 2 - 1e-9), 1476.0)
    with pytest.raises(UnlocalizableError):
        localize_point(rim, EQUI)


def test_anchor_outside_image_circle():
    with pytest.raises(OutOfRangeError):
        localize_point(ImagePoint(1476.0 + 1700.0, 1476.0), EQUI)


def test_altitude_required():
    with pytest.raises(ValidationError):
        localize_point(ImagePoint(1500.0, 1500.0), FisheyeModel(1000.0, 1476.0, 1476.0))


@given(st.floats(0, 1400), st.floats(-math.pi, math.pi))
def test_result_satisfies_projection_identity(rad, az):
    p = ImagePoint(1476.0 + rad * math.cos(az), 1476.0 + rad * math.sin(az))
    res = localize_point(p, EQUI)
    assert math.hypot(res.X, res.Y) == pytest.approx(3.0 * math.tan(res.theta), abs=1e-9 * max(1, math.tan(res.theta)))


@given(st.floats(1, 1300), st.floats(-math.pi, math.pi), st.floats(-10, 10))
def test_localization_rotates_with_box(rad, az, angle):
    m = default_model(3.0)
    box = RadiusAlignedBox(m.u0 + rad * math.cos(az), m.v0 + rad * math.sin(az), 30.0, 80.0)
    a = localize(box, m)
    b = localize(rotate_radius_aligned(box, angle, m.principal), m)
    c, s = math.cos(angle), math.sin(angle)
    assert (b.X, b.Y) == pytest.approx((c * a.X - s * a.Y, s * a.X + c * a.Y), abs=1e-9 * max(1, math.hypot(a.X, a.Y)))


@given(st.floats(1, 1300), st.floats(-math.pi, math.pi))
def test_doubling_altitude_doubles_position(rad, az):
    m = default_model(3.0)
    p = ImagePoint(m.u0 + rad * math.cos(az), m.v0 + rad * math.sin(az))
    a, b = localize_point(p, m), localize_point(p, m.with_altitude(6.0))
    assert (b.X, b.Y) == (2 * a.X, 2 * a.Y)


def test_positional_error_is_euclidean():
    assert positional_error((3.0, 4.0), (0.0, 0.0)) == 5.0


def test_nadir_scene_has_near_zero_error_for_every_strategy():
    m = default_model(3.0)
    scene = Scene(m, (Person(0.0, 0.0), Person(0.0, 0.0, 1.6)), 0)
    errs = compare_strategies(render_annotations(scene), m)
    assert all(v == pytest.approx(0.0, abs=1e-9) for v in errs.values())


def test_standard_scene_ordering():
    cfg = SceneConfig(num_persons=10, min_distance=2.0, max_distance=15.0,
                      height_range=(1.5, 1.9), radius_range=(0.2, 0.3))
    scene = generate_scene(cfg, seed=1)
    errs = compare_strategies(render_annotations(scene), scene.model)
    assert errs[RADIAL] < errs[AnchorStrategy.BOX_CENTER] < errs[AnchorStrategy.HEAD_CENTER]


def test_box_center_error_is_radial_discrepancy():
    m = default_model(3.0)
    person = Person(6.0, 2.0, 1.7, 0.25)
    ann = render_annotations(Scene(m, (person,), 0))[0]
    center = pixel_to_ray(m, ImagePoint(ann.box.cx, ann.box.cy))
    anchor = pixel_to_ray(m, ann.anchor)
    expected = abs(m.Z * math.tan(center.theta) - m.Z * math.tan(anchor.theta))
    got = compare_strategies([ann], m, [AnchorStrategy.BOX_CENTER])[AnchorStrategy.BOX_CENTER]
    assert got == pytest.approx(expected, rel=1e-9)


def test_compare_skips_entries_without_world_or_head():
    m = default_model(3.0)
    box = RadiusAlignedBox(m.u0 + 300, m.v0, 30, 80)
    entries = [GroundTruthBox(box), GroundTruthBox(box, (1.0, 0.0))]
    errs = compare_strategies(entries, m)
    assert math.isnan(errs[AnchorStrategy.HEAD_CENTER])
    assert errs[RADIAL] == pytest.approx(positional_error((localize(box, m).X, localize(box, m).Y), (1.0, 0.0)))
