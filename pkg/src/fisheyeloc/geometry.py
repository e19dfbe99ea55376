"""Oriented rectangles on the fisheye image plane.

Box conventions
---------------
``RotatedBox(cx, cy, w, h, alpha)``: ``h`` is the extent along the unit axis
``(cos alpha, sin alpha)`` (the radial axis for radius-aligned boxes) and ``w``
the extent along ``(sin alpha, -cos alpha)``. That pair of axes is
right-handed, so ``corners()`` lists the local corners
(-w/2, -h/2), (w/2, -h/2), (w/2, h/2), (-w/2, h/2) with positive signed area.

``RadiusAlignedBox(cx, cy, w, h)`` stores no angle; its h-axis points from the
principal point through the box center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .camera import ImagePoint
from .errors import DegenerateRadialError, ValidationError

MIN_SIDE = 1e-6
TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    if -math.pi < a <= math.pi:
        return a
    a = math.remainder(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    return a


def _check_sides(cx, cy, w, h):
    if not all(math.isfinite(x) for x in (cx, cy, w, h)):
        raise ValidationError(f"non-finite box ({cx}, {cy}, {w}, {h})")
    if w < MIN_SIDE or h < MIN_SIDE:
        raise ValidationError(f"degenerate box: w={w}, h={h}")


@dataclass(frozen=True)
class RotatedBox:
    cx: float
    cy: float
    w: float
    h: float
    alpha: float = 0.0

    def __post_init__(self):
        _check_sides(self.cx, self.cy, self.w, self.h)
        if not math.isfinite(self.alpha):
            raise ValidationError("non-finite box angle")
        object.__setattr__(self, "alpha", wrap_angle(float(self.alpha)))

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> np.ndarray:
        """(4, 2) corner array in counter-clockwise order."""
        c, s = math.cos(self.alpha), math.sin(self.alpha)
        hw, hh = 0.5 * self.w, 0.5 * self.h
        out = np.empty((4, 2))
        for i, (a, b) in enumerate(((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh))):
            out[i, 0] = self.cx + a * s + b * c
            out[i, 1] = self.cy - a * c + b * s
        return out

    def as_list(self) -> list[float]:
        return [self.cx, self.cy, self.w, self.h, self.alpha]


@dataclass(frozen=True)
class RadiusAlignedBox:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        _check_sides(self.cx, self.cy, self.w, self.h)

    def alpha(self, principal: ImagePoint) -> float:
        """Radial direction of the center; 0 when the center is the principal point."""
        dx, dy = self.cx - principal.u, self.cy - principal.v
        if dx == 0.0 and dy == 0.0:
            return 0.0
        return wrap_angle(math.atan2(dy, dx))

    def to_rotated(self, principal: ImagePoint) -> RotatedBox:
        return RotatedBox(self.cx, self.cy, self.w, self.h, self.alpha(principal))

    def scaled(self, factor: float) -> "RadiusAlignedBox":
        return RadiusAlignedBox(self.cx * factor, self.cy * factor, self.w * factor, self.h * factor)

    def as_list(self) -> list[float]:
        return [self.cx, self.cy, self.w, self.h]


@dataclass(frozen=True)
class ConvexPolygon:
    """Counter-clockwise vertex list; may be empty after clipping."""

    vertices: tuple[tuple[float, float], ...]

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)


def polygon_area(vertices: Sequence[Sequence[float]]) -> float:
    n = len(vertices)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        acc += x1 * y2 - x2 * y1
    return 0.5 * acc


def _rotate_point(x: float, y: float, angle: float, pu: float, pv: float) -> tuple[float, float]:
    c, s = math.cos(angle), math.sin(angle)
    dx, dy = x - pu, y - pv
    return pu + c * dx - s * dy, pv + s * dx + c * dy


def rotate_point(p: ImagePoint, angle: float, pivot: ImagePoint) -> ImagePoint:
    if angle == 0.0:
        return p
    return ImagePoint(*_rotate_point(p.u, p.v, angle, pivot.u, pivot.v))


def rotate_box(box: RotatedBox, angle: float, pivot: ImagePoint) -> RotatedBox:
    if angle == 0.0:
        return box
    cx, cy = _rotate_point(box.cx, box.cy, angle, pivot.u, pivot.v)
    return RotatedBox(cx, cy, box.w, box.h, box.alpha + angle)


def rotate_radius_aligned(box: RadiusAlignedBox, angle: float, principal: ImagePoint) -> RadiusAlignedBox:
    """Rotate a radius-aligned box about the principal point.

    The center and its radial direction turn together, so the result is again
    radius-aligned with the same w and h.
    """
    if angle == 0.0:
        return box
    cx, cy = _rotate_point(box.cx, box.cy, angle, principal.u, principal.v)
    return RadiusAlignedBox(cx, cy, box.w, box.h)


# the name used by the equivariance checks
radius_aligned_preservation_check = rotate_radius_aligned


# ---- overlap ----------------------------------------------------------------


def clip_polygon(subject: Sequence[Sequence[float]], clip: Sequence[Sequence[float]]) -> ConvexPolygon:
    """Sutherland-Hodgman clipping of ``subject`` by the convex CCW polygon ``clip``."""
    out = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inp, out = out, []
        prev = inp[-1]
        prev_side = ex * (prev[1] - ay) - ey * (prev[0] - ax)
        for cur in inp:
            cur_side = ex * (cur[1] - ay) - ey * (cur[0] - ax)
            if cur_side >= 0.0:
                if prev_side < 0.0:
                    out.append(_cross_point(prev, cur, prev_side, cur_side))
                out.append(cur)
            elif prev_side >= 0.0:
                out.append(_cross_point(prev, cur, prev_side, cur_side))
            prev, prev_side = cur, cur_side
    return ConvexPolygon(tuple(out))


def _cross_point(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def intersect_area(a: RotatedBox, b: RotatedBox) -> float:
    poly = clip_polygon(a.corners().tolist(), b.corners().tolist())
    return max(0.0, poly.area)


def rotated_iou(a: RotatedBox, b: RotatedBox) -> float:
    inter = intersect_area(a, b)
    union = a.area + b.area - inter
    return min(1.0, max(0.0, inter / union))


# ---- minimum enclosing box --------------------------------------------------


def convex_hull(points: Iterable[Sequence[float]]) -> list[tuple[float, float]]:
    """Andrew's monotone chain; CCW, collinear points dropped."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _box_at_angle(pts: Sequence[Sequence[float]], angle: float) -> tuple[float, RotatedBox | None]:
    """Tightest rectangle with its h axis along ``angle``; None when degenerate."""
    c, s = math.cos(angle), math.sin(angle)
    pd = [x * c + y * s for x, y in pts]
    pn = [x * s - y * c for x, y in pts]
    d_lo, d_hi, n_lo, n_hi = min(pd), max(pd), min(pn), max(pn)
    h, w = d_hi - d_lo, n_hi - n_lo
    area = w * h
    if w < MIN_SIDE or h < MIN_SIDE:
        return area, None
    md, mn = 0.5 * (d_hi + d_lo), 0.5 * (n_hi + n_lo)
    return area, RotatedBox(md * c + mn * s, md * s - mn * c, w, h, angle)


def _corner_points(a: RotatedBox, b: RotatedBox) -> list[tuple[float, float]]:
    return [tuple(p) for p in a.corners().tolist() + b.corners().tolist()]


def min_enclosing_box(a: RotatedBox, b: RotatedBox) -> RotatedBox:
    """Minimum-area rectangle around both boxes.

    One side of the optimum is collinear with an edge of the convex hull, so
    trying every hull edge direction is exact.
    """
    hull = convex_hull(_corner_points(a, b))
    best_area, best = math.inf, None
    for i in range(len(hull)):
        (x1, y1), (x2, y2) = hull[i], hull[(i + 1) % len(hull)]
        area, box = _box_at_angle(hull, math.atan2(y2 - y1, x2 - x1))
        if box is not None and area < best_area:
            best_area, best = area, box
    return best


def min_enclosing_box_grid(a: RotatedBox, b: RotatedBox, step_deg: float = 0.1) -> RotatedBox:
    """Grid search over orientations in [0, 90) degrees."""
    pts = _corner_points(a, b)
    steps = int(round(90.0 / step_deg))
    best_area, best = math.inf, None
    for i in range(steps):
        area, box = _box_at_angle(pts, math.radians(i * step_deg))
        if box is not None and area < best_area:
            best_area, best = area, box
    return best


def rotated_giou(a: RotatedBox, b: RotatedBox) -> float:
    inter = intersect_area(a, b)
    union = a.area + b.area - inter
    iou = min(max(inter / union, 0.0), 1.0)
    enclosing = max(min_enclosing_box(a, b).area, union)
    return iou - (enclosing - union) / enclosing


# ---- anchor -----------------------------------------------------------------


def anchor_point(box: RadiusAlignedBox, principal: ImagePoint) -> ImagePoint:
    """Midpoint of the box side nearest the principal point."""
    dx, dy = box.cx - principal.u, box.cy - principal.v
    rho = math.hypot(dx, dy)
    if rho == 0.0:
        raise DegenerateRadialError("box center coincides with the principal point")
    k = 0.5 * box.h / rho
    return ImagePoint(box.cx - k * dx, box.cy - k * dy)
