from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fisheyeloc.camera import FisheyeModel, pixel_to_ray
from fisheyeloc.errors import GenerationError, ValidationError
from fisheyeloc.evaluation import DistanceBucket
from fisheyeloc.geometry import anchor_point, rotate_point, rotate_radius_aligned
from fisheyeloc.localization import AnchorStrategy, localize
from fisheyeloc.sim import (
    NoiseConfig,
    Person,
    Scene,
    SceneConfig,
    default_model,
    generate_scene,
    perturb_detections,
    render_annotations,
    render_person,
)

STANDARD = SceneConfig(num_persons=10, min_distance=2.0, max_distance=15.0,
                       height_range=(1.5, 1.9), radius_range=(0.2, 0.3))


def test_empty_scene():
    assert generate_scene(SceneConfig(num_persons=0), 5).persons == ()


def test_generation_is_deterministic():
    assert generate_scene(STANDARD, 42) == generate_scene(STANDARD, 42)
    assert generate_scene(STANDARD, 42) != generate_scene(STANDARD, 43)


def test_altitude_sampled_in_range():
    cfg = SceneConfig(num_persons=1, altitude=None)
    for seed in range(10):
        assert 2.5 <= generate_scene(cfg, seed).model.Z <= 4.0


def test_altitude_outside_range_rejected():
    with pytest.raises(ValidationError):
        generate_scene(SceneConfig(altitude=5.0), 0)


def test_infeasible_density_raises():
    cfg = SceneConfig(num_persons=50, max_distance=1.0, radius_range=(0.5, 0.5), max_retries=50)
    with pytest.raises(GenerationError):
        generate_scene(cfg, 0)


def test_bucket_proportions_match_disc_areas():
    # 10 m disc: every person is near
    small = generate_scene(SceneConfig(num_persons=10_000, max_distance=10.0, allow_overlap=True), 1)
    assert all(DistanceBucket.of((p.X, p.Y)) is DistanceBucket.NEAR for p in small.persons)
    # 30 m disc: areas 1/9, 3/9, 5/9
    big = generate_scene(SceneConfig(num_persons=10_000, max_distance=30.0, allow_overlap=True), 2)
    counts = {b: 0 for b in DistanceBucket}
    for p in big.persons:
        counts[DistanceBucket.of((p.X, p.Y))] += 1
    for b, frac in zip(DistanceBucket, (1 / 9, 3 / 9, 5 / 9)):
        assert counts[b] / 10_000 == pytest.approx(frac, abs=0.02)


def test_nadir_person():
    m = default_model(3.0)
    ann = render_person(m, Person(0.0, 0.0))
    assert (ann.box.cx, ann.box.cy) == (m.u0, m.v0)
    res = localize(ann.box, m)
    assert (res.X, res.Y) == (0.0, 0.0)


def test_equidistant_closed_form_foot():
    m = FisheyeModel(900.0, 1476.0, 1476.0, (1, 0, 0, 0, 0), 3.0)
    ann = render_person(m, Person(3.0, 0.0))
    assert ann.anchor.u == pytest.approx(1476.0 + 900.0 * math.pi / 4, abs=1e-9)
    assert ann.anchor.v == pytest.approx(1476.0, abs=1e-12)
    res = localize(ann.box, m)
    assert (res.X, res.Y) == pytest.approx((3.0, 0.0), abs=1e-6)


def test_person_taller_than_camera_is_unprojectable():
    ann = render_person(default_model(2.5), Person(1.0, 1.0, height=2.6))
    assert not ann.projectable and ann.box is None


@given(st.integers(0, 2**32 - 1))
def test_anchor_construction_and_round_trip(seed):
    scene = generate_scene(STANDARD, seed)
    for ann in render_annotations(scene):
        a = anchor_point(ann.box, scene.model.principal)
        assert math.hypot(a.u - ann.anchor.u, a.v - ann.anchor.v) <= 1e-6
        res = localize(ann.box, scene.model, AnchorStrategy.RADIAL_NEAR_MIDPOINT)
        assert math.hypot(res.X - ann.person.X, res.Y - ann.person.Y) <= 1e-6
        center = localize(ann.box, scene.model, AnchorStrategy.BOX_CENTER)
        assert math.hypot(center.X - ann.person.X, center.Y - ann.person.Y) > 0.0


@given(st.integers(0, 2**32 - 1), st.floats(-math.pi, math.pi))
def test_rendering_commutes_with_rotation(seed, angle):
    scene = generate_scene(STANDARD, seed)
    m = scene.model
    for orig, turned in zip(render_annotations(scene), render_annotations(scene.rotated(angle))):
        expected = rotate_radius_aligned(orig.box, angle, m.principal)
        assert turned.box.as_list() == pytest.approx(expected.as_list(), abs=1e-6)
        anchor = rotate_point(orig.anchor, angle, m.principal)
        assert (turned.anchor.u, turned.anchor.v) == pytest.approx((anchor.u, anchor.v), abs=1e-6)


def test_box_spans_foot_to_head_radially():
    m = default_model(3.0)
    ann = render_person(m, Person(4.0, -3.0, 1.7, 0.25))
    r = lambda p: math.hypot(p.u - m.u0, p.v - m.v0)  # noqa: E731
    assert ann.box.h == pytest.approx(r(ann.head) - r(ann.anchor), abs=1e-9)
    assert pixel_to_ray(m, ann.head).theta > pixel_to_ray(m, ann.anchor).theta


# ---------------------------------------------------------------------------
# Perturbed detections

def _boxes(seed=0, scenes=3):
    return [[a.box for a in render_annotations(generate_scene(STANDARD, seed + k))] for k in range(scenes)]


def test_zero_noise_reproduces_ground_truth():
    boxes = _boxes()
    out = perturb_detections(boxes, NoiseConfig(), seed=1)
    assert [[d.box for d in ds] for ds in out] == boxes
    assert all(d.score == 1.0 for ds in out for d in ds)


def test_full_miss_rate_empties_detections():
    assert perturb_detections(_boxes(), NoiseConfig(miss_rate=1.0), seed=1) == [[], [], []]


def test_miss_rate_is_binomial():
    boxes = [[b] for bs in _boxes(0, 1) for b in bs] * 1000
    n = len(boxes)
    kept = sum(len(d) for d in perturb_detections(boxes, NoiseConfig(miss_rate=0.3), seed=9))
    sigma = math.sqrt(n * 0.3 * 0.7)
    assert abs((n - kept) - 0.3 * n) <= 3 * sigma


def test_perturbation_is_deterministic():
    noise = NoiseConfig(center_sigma=3.0, size_sigma=2.0, score_range=(0.3, 1.0), miss_rate=0.2, fp_rate=0.4)
    assert perturb_detections(_boxes(), noise, 4) == perturb_detections(_boxes(), noise, 4)


def test_false_positives_land_in_image_circle():
    m = default_model(3.0)
    radius = m.f * m.r_max
    out = perturb_detections(_boxes(), NoiseConfig(miss_rate=1.0, fp_rate=1.0), 2, m.principal, radius)
    dets = [d for ds in out for d in ds]
    assert dets
    assert all(math.hypot(d.box.cx - m.u0, d.box.cy - m.v0) <= radius for d in dets)
    assert all(0.0 <= d.score <= 0.5 for d in dets)


@pytest.mark.parametrize("kwargs", [{"miss_rate": 1.5}, {"fp_rate": -0.1}, {"score_range": (0.8, 0.2)},
                                    {"center_sigma": -1.0}])
def test_invalid_noise_rejected(kwargs):
    with pytest.raises(ValidationError):
        NoiseConfig(**kwargs)


def test_scene_rotation_preserves_people():
    scene = generate_scene(STANDARD, 3)
    turned = scene.rotated(1.0)
    for a, b in zip(scene.persons, turned.persons):
        assert math.hypot(a.X, a.Y) == pytest.approx(math.hypot(b.X, b.Y), abs=1e-12)
    assert np.allclose([p.height for p in scene.persons], [p.height for p in turned.persons])
