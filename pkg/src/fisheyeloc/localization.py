"""Image-plane detections to floor positions.

For an anchor pixel with incidence angle theta and polar angle phi, a camera
at altitude Z sees the floor point

    X = Z * tan(theta) * cos(phi),  Y = Z * tan(theta) * sin(phi)

in a frame whose origin is the nadir and whose axes follow the image +u/+v.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .camera import FisheyeModel, ImagePoint, pixel_to_ray
from .errors import UnlocalizableError, ValidationError
from .geometry import RadiusAlignedBox, anchor_point

HORIZON_GUARD = math.pi / 2 - 1e-6


class AnchorStrategy(str, enum.Enum):
    RADIAL_NEAR_MIDPOINT = "radial-near-midpoint"
    BOX_CENTER = "box-center"
    HEAD_CENTER = "head-center"


@dataclass(frozen=True)
class LocalizationResult:
    X: float
    Y: float
    anchor: ImagePoint
    theta: float
    phi: float


def select_anchor(
    box: RadiusAlignedBox,
    principal: ImagePoint,
    strategy: AnchorStrategy,
    head: ImagePoint | None = None,
) -> ImagePoint:
    strategy = AnchorStrategy(strategy)
    if strategy is AnchorStrategy.BOX_CENTER:
        return ImagePoint(box.cx, box.cy)
    if strategy is AnchorStrategy.HEAD_CENTER:
        if head is None:
            raise ValidationError("head-center strategy needs a head point")
        return head
    if box.cx == principal.u and box.cy == principal.v:
        # a box centered on the nadir covers it; its nearest point is the nadir itself
        return principal
    return anchor_point(box, principal)


def localize_point(p: ImagePoint, model: FisheyeModel) -> LocalizationResult:
    if model.Z is None:
        raise ValidationError("camera altitude Z is required for localization")
    ray = pixel_to_ray(model, p)
    if ray.theta >= HORIZON_GUARD:
        raise UnlocalizableError(f"anchor ray at theta={ray.theta:.9f} rad reaches the horizon")
    t = math.tan(ray.theta)
    return LocalizationResult(
        model.Z * t * math.cos(ray.phi), model.Z * t * math.sin(ray.phi), p, ray.theta, ray.phi
    )


def localize(
    box: RadiusAlignedBox,
    model: FisheyeModel,
    strategy: AnchorStrategy = AnchorStrategy.RADIAL_NEAR_MIDPOINT,
    head: ImagePoint | None = None,
) -> LocalizationResult:
    return localize_point(select_anchor(box, model.principal, strategy, head), model)


def positional_error(est: Sequence[float], truth: Sequence[float]) -> float:
    return math.hypot(est[0] - truth[0], est[1] - truth[1])


def compare_strategies(
    annotations: Iterable,
    model: FisheyeModel,
    strategies: Sequence[AnchorStrategy] = tuple(AnchorStrategy),
) -> dict[AnchorStrategy, float]:
    """Mean positional error per strategy over annotated persons.

    ``annotations`` holds objects with ``box``, ``world`` and ``head``
    attributes (simulator annotations or ground-truth boxes). Entries without a
    box or world position are skipped, as are head-center entries without a
    head point.
    """
    sums = {AnchorStrategy(s): 0.0 for s in strategies}
    counts = {s: 0 for s in sums}
    for ann in annotations:
        if getattr(ann, "box", None) is None or getattr(ann, "world", None) is None:
            continue
        for s in sums:
            head = getattr(ann, "head", None)
            if s is AnchorStrategy.HEAD_CENTER and head is None:
                continue
            res = localize(ann.box, model, s, head)
            sums[s] += positional_error((res.X, res.Y), ann.world)
            counts[s] += 1
    return {s: (sums[s] / counts[s] if counts[s] else math.nan) for s in sums}
