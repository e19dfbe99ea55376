"""Query-to-ground-truth matching and the rotation-equivariant detection loss.

The detector is any callable ``detector(image, angle) -> list[Detection]``
with a ``num_queries`` attribute. It stands in for the network evaluated on
the image rotated by ``angle`` about the principal point, so the equivariant
term is simply the ordinary detection loss of that output against the
equally rotated ground truth.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Protocol, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .camera import ImagePoint
from .errors import CapacityError, ContractError, ValidationError
from .geometry import RadiusAlignedBox, rotate_radius_aligned, rotated_giou

DEFAULT_LAMBDA = 0.5
_LOG_EPS = 1e-12


@dataclass(frozen=True)
class Detection:
    box: RadiusAlignedBox
    score: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score {self.score!r} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruthBox:
    box: RadiusAlignedBox
    world: tuple[float, float] | None = None
    head: ImagePoint | None = None


@dataclass(frozen=True)
class LossWeights:
    cls: float = 2.0
    l1: float = 5.0
    giou: float = 2.0


@dataclass(frozen=True)
class Assignment:
    """``targets[n]`` is the ground-truth index for query n, or None for no-object."""

    targets: tuple[int | None, ...]

    def pairs(self) -> list[tuple[int, int]]:
        return [(n, g) for n, g in enumerate(self.targets) if g is not None]


@dataclass(frozen=True)
class LossBreakdown:
    cls: float = 0.0
    l1: float = 0.0
    giou: float = 0.0
    det: float = 0.0
    rotat_equi: float = 0.0
    total: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in ("cls", "l1", "giou", "det", "rotat_equi", "total")}


class DetectorFn(Protocol):
    num_queries: int
    thread_safe: bool

    def __call__(self, image: Hashable, angle: float) -> list[Detection]: ...


def _l1(a: RadiusAlignedBox, b: RadiusAlignedBox) -> float:
    return abs(a.cx - b.cx) + abs(a.cy - b.cy) + abs(a.w - b.w) + abs(a.h - b.h)


def _giou(a: RadiusAlignedBox, b: RadiusAlignedBox, principal: ImagePoint) -> float:
    return rotated_giou(a.to_rotated(principal), b.to_rotated(principal))


def match_cost(
    detections: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    weights: LossWeights,
    principal: ImagePoint,
) -> np.ndarray:
    cost = np.empty((len(detections), len(gts)))
    for i, d in enumerate(detections):
        for j, g in enumerate(gts):
            cost[i, j] = (
                weights.cls * (1.0 - d.score)
                + weights.l1 * _l1(d.box, g.box)
                + weights.giou * (1.0 - _giou(d.box, g.box, principal))
            )
    return cost


def hungarian_match(
    detections: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    weights: LossWeights = LossWeights(),
    principal: ImagePoint = ImagePoint(0.5, 0.5),
) -> Assignment:
    if len(detections) < len(gts):
        raise CapacityError(f"{len(detections)} queries cannot cover {len(gts)} ground truths")
    targets: list[int | None] = [None] * len(detections)
    if gts:
        rows, cols = linear_sum_assignment(match_cost(detections, gts, weights, principal))
        for r, c in zip(rows, cols):
            targets[int(r)] = int(c)
    return Assignment(tuple(targets))


def detection_loss(
    detections: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    assignment: Assignment,
    weights: LossWeights = LossWeights(),
    principal: ImagePoint = ImagePoint(0.5, 0.5),
) -> LossBreakdown:
    """Binary log-loss over all queries plus L1 and (1 - GIoU) over matched pairs."""
    if len(assignment.targets) != len(detections):
        raise ContractError("assignment length differs from detection count")
    if not detections:
        return LossBreakdown()
    nll = 0.0
    for d, g in zip(detections, assignment.targets):
        p = d.score if g is not None else 1.0 - d.score
        nll -= math.log(max(p, _LOG_EPS))
    cls = nll / len(detections)
    pairs = assignment.pairs()
    if pairs:
        l1 = sum(_l1(detections[n].box, gts[g].box) for n, g in pairs) / len(pairs)
        giou = sum(1.0 - _giou(detections[n].box, gts[g].box, principal) for n, g in pairs) / len(pairs)
    else:
        l1 = giou = 0.0
    det = weights.cls * cls + weights.l1 * l1 + weights.giou * giou
    return LossBreakdown(cls=cls, l1=l1, giou=giou, det=det, total=det)


def total_loss(det: LossBreakdown | float, rotat_equi: float, lam: float = DEFAULT_LAMBDA) -> float:
    if lam < 0:
        raise ValidationError(f"lambda must be non-negative, got {lam}")
    base = det.det if isinstance(det, LossBreakdown) else float(det)
    return base + lam * rotat_equi


def rotate_gts(gts: Sequence[GroundTruthBox], angle: float, principal: ImagePoint) -> list[GroundTruthBox]:
    return [GroundTruthBox(rotate_radius_aligned(g.box, angle, principal), g.world, g.head) for g in gts]


_detector_locks: dict[int, threading.Lock] = {}
_registry_lock = threading.Lock()


def _invoke(detector: DetectorFn, image: Hashable, angle: float) -> list[Detection]:
    if getattr(detector, "thread_safe", False):
        out = detector(image, angle)
    else:
        with _registry_lock:
            lock = _detector_locks.setdefault(id(detector), threading.Lock())
        with lock:
            out = detector(image, angle)
    out = list(out)
    if len(out) != detector.num_queries:
        raise ContractError(
            f"detector returned {len(out)} detections, expected {detector.num_queries}"
        )
    return out


def branch_loss(
    detector: DetectorFn,
    image: Hashable,
    gts: Sequence[GroundTruthBox],
    angle: float,
    principal: ImagePoint,
    weights: LossWeights = LossWeights(),
) -> LossBreakdown:
    """Detection loss of the detector run under ``angle`` against rotated targets."""
    targets = rotate_gts(gts, angle, principal)
    dets = _invoke(detector, image, angle)
    assignment = hungarian_match(dets, targets, weights, principal)
    return detection_loss(dets, targets, assignment, weights, principal)


def rotat_equi_loss(
    detector: DetectorFn,
    image: Hashable,
    gts: Sequence[GroundTruthBox],
    angle: float,
    principal: ImagePoint,
    weights: LossWeights = LossWeights(),
) -> LossBreakdown:
    """Equivariant term: rotated-branch breakdown with ``rotat_equi`` set to its det."""
    b = branch_loss(detector, image, gts, angle, principal, weights)
    return LossBreakdown(cls=b.cls, l1=b.l1, giou=b.giou, det=b.det, rotat_equi=b.det, total=b.det)


def equivariant_objective(
    detector: DetectorFn,
    image: Hashable,
    gts: Sequence[GroundTruthBox],
    angle: float,
    principal: ImagePoint,
    weights: LossWeights = LossWeights(),
    lam: float = DEFAULT_LAMBDA,
) -> LossBreakdown:
    """det(unrotated branch) + lam * det(rotated branch); each branch matched on its own."""
    plain = branch_loss(detector, image, gts, 0.0, principal, weights)
    rotated = branch_loss(detector, image, gts, angle, principal, weights)
    return LossBreakdown(
        cls=plain.cls,
        l1=plain.l1,
        giou=plain.giou,
        det=plain.det,
        rotat_equi=rotated.det,
        total=total_loss(plain.det, rotated.det, lam),
    )


# ---- detectors --------------------------------------------------------------


def _filler(principal: ImagePoint, size: float) -> Detection:
    return Detection(RadiusAlignedBox(principal.u, principal.v, size, size), 0.0)


@dataclass
class OracleDetector:
    """Emits the ground truth rotated by the requested angle, optionally jittered.

    Unused queries are padded with zero-score boxes at the principal point.
    With ``ignore_angle`` the unrotated ground truth is returned regardless
    of the angle, which models a detector with no equivariance at all.
    """

    gts: Mapping[Hashable, Sequence[GroundTruthBox]]
    num_queries: int
    principal: ImagePoint = ImagePoint(0.5, 0.5)
    center_sigma: float = 0.0
    size_sigma: float = 0.0
    seed: int = 0
    ignore_angle: bool = False
    filler_size: float = 0.01
    thread_safe: bool = False
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    def __call__(self, image: Hashable, angle: float) -> list[Detection]:
        gts = self.gts[image]
        if len(gts) > self.num_queries:
            raise CapacityError(f"{len(gts)} ground truths exceed {self.num_queries} queries")
        use = 0.0 if self.ignore_angle else angle
        out = []
        for g in rotate_gts(gts, use, self.principal):
            b = g.box
            if self.center_sigma or self.size_sigma:
                du, dv = self._rng.normal(0.0, self.center_sigma, 2) if self.center_sigma else (0.0, 0.0)
                dw, dh = self._rng.normal(0.0, self.size_sigma, 2) if self.size_sigma else (0.0, 0.0)
                b = RadiusAlignedBox(
                    b.cx + du, b.cy + dv, max(b.w + dw, 1e-4), max(b.h + dh, 1e-4)
                )
            out.append(Detection(b, 1.0))
        out.extend(_filler(self.principal, self.filler_size) for _ in range(self.num_queries - len(out)))
        return out


@dataclass
class FileDetector:
    """Replays stored predictions keyed by (image id, rotation angle)."""

    records: Mapping[Hashable, Sequence[tuple[float, Sequence[Detection]]]]
    num_queries: int
    angle_tol: float = 1e-9
    thread_safe: bool = True

    def __call__(self, image: Hashable, angle: float) -> list[Detection]:
        for a, dets in self.records.get(image, ()):
            if abs(math.remainder(a - angle, 2 * math.pi)) <= self.angle_tol:
                return list(dets)
        raise ContractError(f"no replayed predictions for image {image!r} at angle {angle!r}")

