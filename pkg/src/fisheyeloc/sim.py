"""Synthetic overhead-fisheye scenes with exact ground truth.

Each person is a vertical segment standing on the floor (foot at depth Z,
head at depth Z - height) with a lateral body radius. The radius-aligned GT
box spans the projected foot-to-head pixel interval along the radial line
and the projected body width at mid-height across it, so the near-side
midpoint of the box is the projected foot point by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .camera import FisheyeModel, ImagePoint, WorldPoint, ray_to_pixel
from .errors import GenerationError, ValidationError
from .evaluation import DistanceBucket
from .geometry import RadiusAlignedBox
from .localization import HORIZON_GUARD
from .matching import Detection

IMAGE_SIDE = 2952
ALTITUDE_RANGE = (2.5, 4.0)


def default_model(altitude: float | None = 3.0) -> FisheyeModel:
    """Square 2952 px sensor with the horizon on the image border, mild distortion."""
    k = (1.0, -0.03, 0.002, 0.0, 0.0)
    r_max = sum(c * (math.pi / 2) ** (2 * i + 1) for i, c in enumerate(k))
    return FisheyeModel(0.5 * IMAGE_SIDE / r_max, 0.5 * IMAGE_SIDE, 0.5 * IMAGE_SIDE, k, altitude)


@dataclass(frozen=True)
class Person:
    X: float
    Y: float
    height: float = 1.7
    radius: float = 0.25


@dataclass(frozen=True)
class SceneConfig:
    num_persons: int = 10
    altitude: float | None = 3.0
    altitude_range: tuple[float, float] = ALTITUDE_RANGE
    placement: str = "disc"
    min_distance: float = 0.0
    # 250 m^2 of floor, the middle of the 200-300 m^2 coverage range
    max_distance: float = math.sqrt(250.0 / math.pi)
    height_range: tuple[float, float] = (1.7, 1.7)
    radius_range: tuple[float, float] = (0.25, 0.25)
    allow_overlap: bool = False
    max_retries: int = 1000
    model: FisheyeModel | None = None


@dataclass(frozen=True)
class Scene:
    model: FisheyeModel
    persons: tuple[Person, ...]
    seed: int

    def rotated(self, angle: float) -> "Scene":
        c, s = math.cos(angle), math.sin(angle)
        persons = tuple(
            Person(c * p.X - s * p.Y, s * p.X + c * p.Y, p.height, p.radius) for p in self.persons
        )
        return Scene(self.model, persons, self.seed)


@dataclass(frozen=True)
class SimulatedAnnotation:
    person: Person
    box: RadiusAlignedBox | None
    anchor: ImagePoint | None
    head: ImagePoint | None
    world: tuple[float, float]
    bucket: DistanceBucket
    projectable: bool = True


def _uniform_range(rng: np.random.Generator, lo_hi: tuple[float, float]) -> float:
    lo, hi = lo_hi
    return float(lo) if lo == hi else float(rng.uniform(lo, hi))


def _visible(model: FisheyeModel, p: Person) -> bool:
    if model.Z is None or p.height >= model.Z:
        return False
    return math.atan2(math.hypot(p.X, p.Y), model.Z - p.height) < HORIZON_GUARD


def generate_scene(config: SceneConfig = SceneConfig(), seed: int = 0) -> Scene:
    if config.num_persons < 0:
        raise ValidationError("person count must be non-negative")
    if not 0.0 <= config.min_distance <= config.max_distance:
        raise ValidationError("need 0 <= min_distance <= max_distance")
    rng = np.random.default_rng(seed)
    lo, hi = config.altitude_range
    if config.altitude is None:
        altitude = float(rng.uniform(lo, hi))
    else:
        altitude = float(config.altitude)
        if not lo <= altitude <= hi:
            raise ValidationError(f"altitude {altitude} m outside [{lo}, {hi}] m")
    model = (config.model or default_model()).with_altitude(altitude)

    persons: list[Person] = []
    for _ in range(config.num_persons):
        for _attempt in range(config.max_retries):
            height = _uniform_range(rng, config.height_range)
            radius = _uniform_range(rng, config.radius_range)
            if config.placement == "disc":
                # area-uniform over the annulus [min_distance, max_distance]
                r2 = rng.uniform(config.min_distance**2, config.max_distance**2)
                d = math.sqrt(r2)
            elif config.placement == "radial":
                d = float(rng.uniform(config.min_distance, config.max_distance))
            else:
                raise ValidationError(f"unknown placement {config.placement!r}")
            a = float(rng.uniform(-math.pi, math.pi))
            cand = Person(d * math.cos(a), d * math.sin(a), height, radius)
            if not _visible(model, cand):
                continue
            if not config.allow_overlap and any(
                math.hypot(cand.X - q.X, cand.Y - q.Y) < cand.radius + q.radius for q in persons
            ):
                continue
            persons.append(cand)
            break
        else:
            raise GenerationError(
                f"could not place person {len(persons) + 1} within {config.max_retries} retries"
            )
    return Scene(model, tuple(persons), seed)


def render_person(model: FisheyeModel, p: Person) -> SimulatedAnnotation:
    world = (p.X, p.Y)
    bucket = DistanceBucket.of(world)
    if not _visible(model, p):
        return SimulatedAnnotation(p, None, None, None, world, bucket, projectable=False)
    Z = model.Z
    foot = ray_to_pixel(model, WorldPoint(p.X, p.Y, Z))
    head = ray_to_pixel(model, WorldPoint(p.X, p.Y, Z - p.height))
    rho = math.hypot(p.X, p.Y)
    if rho == 0.0:
        # seen from straight above the body is a disc around the nadir
        side = 2.0 * (ray_to_pixel(model, WorldPoint(p.radius, 0.0, Z - 0.5 * p.height)).u - model.u0)
        box = RadiusAlignedBox(model.u0, model.v0, side, side)
        return SimulatedAnnotation(p, box, model.principal, head, world, bucket)

    tx, ty = -p.Y / rho, p.X / rho
    mid_z = Z - 0.5 * p.height
    left = ray_to_pixel(model, WorldPoint(p.X - p.radius * tx, p.Y - p.radius * ty, mid_z))
    right = ray_to_pixel(model, WorldPoint(p.X + p.radius * tx, p.Y + p.radius * ty, mid_z))
    r_foot = math.hypot(foot.u - model.u0, foot.v - model.v0)
    r_head = math.hypot(head.u - model.u0, head.v - model.v0)
    ux, uy = p.X / rho, p.Y / rho
    r_mid = 0.5 * (r_foot + r_head)
    box = RadiusAlignedBox(
        model.u0 + r_mid * ux,
        model.v0 + r_mid * uy,
        math.hypot(right.u - left.u, right.v - left.v),
        r_head - r_foot,
    )
    return SimulatedAnnotation(p, box, foot, head, world, bucket)


def render_annotations(scene: Scene) -> list[SimulatedAnnotation]:
    return [render_person(scene.model, p) for p in scene.persons]


@dataclass(frozen=True)
class NoiseConfig:
    center_sigma: float = 0.0
    size_sigma: float = 0.0
    score_range: tuple[float, float] = (1.0, 1.0)
    miss_rate: float = 0.0
    fp_rate: float = 0.0
    fp_score_range: tuple[float, float] = (0.0, 0.5)

    def __post_init__(self):
        for name in ("miss_rate", "fp_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")
        for name in ("score_range", "fp_score_range"):
            lo, hi = getattr(self, name)
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValidationError(f"{name} must satisfy 0 <= low <= high <= 1")
        if self.center_sigma < 0 or self.size_sigma < 0:
            raise ValidationError("noise sigmas must be non-negative")


def perturb_detections(
    annotations: Sequence[Sequence[RadiusAlignedBox]],
    noise: NoiseConfig = NoiseConfig(),
    seed: int = 0,
    principal: ImagePoint = ImagePoint(0.5 * IMAGE_SIDE, 0.5 * IMAGE_SIDE),
    circle_radius: float = 0.5 * IMAGE_SIDE,
) -> list[list[Detection]]:
    """Fake detector output in pixel space, one list per image.

    Every GT draws its random numbers whether or not it is missed, so the
    stream for image k does not depend on the miss outcomes of earlier images.
    """
    rng = np.random.default_rng(seed)
    sizes = [(b.w, b.h) for boxes in annotations for b in boxes]
    out: list[list[Detection]] = []
    for boxes in annotations:
        dets: list[Detection] = []
        for b in boxes:
            missed = rng.random() < noise.miss_rate
            du, dv, dw, dh = rng.normal(0.0, 1.0, 4)
            score = float(rng.uniform(*noise.score_range))
            is_fp = rng.random() < noise.fp_rate
            fp_draw = rng.random(4)
            if not missed:
                jittered = RadiusAlignedBox(
                    b.cx + noise.center_sigma * du,
                    b.cy + noise.center_sigma * dv,
                    max(b.w + noise.size_sigma * dw, 1.0),
                    max(b.h + noise.size_sigma * dh, 1.0),
                )
                dets.append(Detection(jittered, score))
            if is_fp and sizes:
                w, h = sizes[int(fp_draw[0] * len(sizes))]
                rad = circle_radius * math.sqrt(fp_draw[1])
                ang = 2.0 * math.pi * fp_draw[2]
                lo, hi = noise.fp_score_range
                dets.append(
                    Detection(
                        RadiusAlignedBox(
                            principal.u + rad * math.cos(ang), principal.v + rad * math.sin(ang), w, h
                        ),
                        lo + (hi - lo) * float(fp_draw[3]),
                    )
                )
        out.append(dets)
    return out
