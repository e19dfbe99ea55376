"""
Generic polynomial fisheye camera model.

Projection model (odd-power series in the incidence angle):
  - theta: angle between the incoming ray and the optical axis, in [0, pi/2]
  - r(theta) = k1*theta + k2*theta^3 + k3*theta^5 + k4*theta^7 + k5*theta^9
  - r is in focal-normalized units: x = (u - u0)/f, y = (v - v0)/f, r = hypot(x, y)

Forward projection of a camera-frame point P = (X, Y, Z), Z > 0:
  theta = atan2(hypot(X, Y), Z), phi = atan2(Y, X)
  u = u0 + f*r(theta)*cos(phi), v = v0 + f*r(theta)*sin(phi)

The inverse needs theta from r, which has no closed form for n = 5; it is
solved with a bracketed Newton iteration (see ``radial_inverse``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import (
    CalibrationError,
    DomainError,
    InsufficientCorrespondencesError,
    NumericalError,
    OutOfRangeError,
    ValidationError,
)

THETA_MAX = math.pi / 2
NUM_COEFFS = 5
RESIDUAL_TOL = 1e-10
MAX_CALIBRATION_ITERS = 200
MONOTONE_MARGIN = 1e-3
MONOTONE_PENALTY = 10.0


def _as_coeffs(k: Sequence[float]) -> tuple[float, ...]:
    k = tuple(float(c) for c in k)
    if len(k) > NUM_COEFFS:
        raise ValidationError(f"at most {NUM_COEFFS} coefficients, got {len(k)}")
    return k + (0.0,) * (NUM_COEFFS - len(k))


def _min_slope(k: tuple[float, ...]) -> float:
    """Minimum of dr/dtheta over [0, pi/2].

    dr/dtheta is a quartic in s = theta^2, so its extrema on the interval
    are the endpoints plus the real roots of its derivative.
    """
    q = np.array([(2 * i + 1) * c for i, c in enumerate(k)])
    s_max = THETA_MAX**2
    candidates = [0.0, s_max]
    dq = np.polynomial.polynomial.polyder(q)
    if np.any(dq != 0):
        for root in np.polynomial.polynomial.polyroots(dq):
            if abs(root.imag) < 1e-12 and 0.0 < root.real < s_max:
                candidates.append(float(root.real))
    return float(min(np.polynomial.polynomial.polyval(s, q) for s in candidates))


@dataclass(frozen=True)
class FisheyeModel:
    """Intrinsics of a fisheye camera plus its optional mounting altitude.

    Attributes:
        f: focal length in pixels.
        u0, v0: principal point in pixels.
        k: five polynomial coefficients k1..k5; shorter inputs are zero-padded.
        Z: camera altitude above the floor in meters (needed for localization).
    """

    f: float
    u0: float
    v0: float
    k: tuple[float, ...] = (1.0, 0.0, 0.0, 0.0, 0.0)
    Z: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "f", float(self.f))
        object.__setattr__(self, "u0", float(self.u0))
        object.__setattr__(self, "v0", float(self.v0))
        object.__setattr__(self, "k", _as_coeffs(self.k))
        if self.Z is not None:
            object.__setattr__(self, "Z", float(self.Z))
        values = (self.f, self.u0, self.v0, *self.k) + ((self.Z,) if self.Z is not None else ())
        if not all(math.isfinite(x) for x in values):
            raise ValidationError("model parameters must be finite")
        if self.f <= 0:
            raise ValidationError(f"focal length must be positive, got {self.f}")
        if self.Z is not None and self.Z <= 0:
            raise ValidationError(f"altitude must be positive, got {self.Z}")
        if self.k[0] <= 0:
            raise ValidationError(f"k1 must be positive, got {self.k[0]}")
        if _min_slope(self.k) <= 0:
            raise ValidationError(
                f"projection r(theta) is not monotonic on [0, pi/2] for k={self.k}"
            )

    @property
    def principal(self) -> "ImagePoint":
        return ImagePoint(self.u0, self.v0)

    @property
    def r_max(self) -> float:
        """Largest normalized radius, reached at theta = pi/2."""
        return _poly(self.k, THETA_MAX)

    def with_altitude(self, Z: float) -> "FisheyeModel":
        return FisheyeModel(self.f, self.u0, self.v0, self.k, Z)


@dataclass(frozen=True)
class ImagePoint:
    u: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValidationError(f"non-finite image point ({self.u}, {self.v})")


@dataclass(frozen=True)
class WorldPoint:
    """Camera-centered coordinates in meters; Z is depth along the optical axis."""

    X: float
    Y: float
    Z: float


@dataclass(frozen=True)
class NormalizedRay:
    x: float
    y: float
    r: float
    theta: float
    phi: float


def _poly(k: Sequence[float], theta: float) -> float:
    t2 = theta * theta
    acc = 0.0
    for c in reversed(k):
        acc = acc * t2 + c
    return acc * theta


def _slope(k: Sequence[float], theta: float) -> float:
    t2 = theta * theta
    acc = 0.0
    for i in range(len(k) - 1, -1, -1):
        acc = acc * t2 + (2 * i + 1) * k[i]
    return acc


def radial_forward(model: FisheyeModel, theta: float) -> float:
    """Normalized radial distance r(theta) for an incidence angle in [0, pi/2]."""
    if not 0.0 <= theta <= THETA_MAX:
        raise DomainError(f"theta={theta!r} outside [0, pi/2]")
    return _poly(model.k, theta)


def radial_inverse(model: FisheyeModel, r: float) -> float:
    """Solve r(theta) = r for theta.

    Newton steps starting from r/k1, kept inside a shrinking [lo, hi]
    bracket; any step that leaves the bracket is replaced by bisection.
    Monotonicity of the model guarantees a unique root.
    """
    r_max = model.r_max
    if not 0.0 <= r <= r_max:
        raise OutOfRangeError(f"r={r!r} outside image circle [0, {r_max!r}]", max_r=r_max)
    if r == 0.0:
        return 0.0
    k = model.k
    lo, hi = 0.0, THETA_MAX
    theta = min(r / k[0], THETA_MAX)
    for _ in range(200):
        g = _poly(k, theta) - r
        if g == 0.0:
            return theta
        if g < 0.0:
            lo = theta
        else:
            hi = theta
        nxt = theta - g / _slope(k, theta)
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - theta) <= 1e-15 * theta:
            theta = nxt
            break
        theta = nxt
    if abs(_poly(k, theta) - r) > RESIDUAL_TOL:
        raise NumericalError(f"radial inverse did not converge for r={r!r}")
    return theta


def pixel_to_ray(model: FisheyeModel, p: ImagePoint) -> NormalizedRay:
    x = (p.u - model.u0) / model.f
    y = (p.v - model.v0) / model.f
    r = math.hypot(x, y)
    if r == 0.0:
        return NormalizedRay(x, y, 0.0, 0.0, 0.0)
    phi = math.atan2(y, x)
    if phi == -math.pi:
        phi = math.pi
    theta = radial_inverse(model, r)
    return NormalizedRay(x, y, r, theta, phi)


def ray_to_pixel(model: FisheyeModel, P: WorldPoint) -> ImagePoint:
    if not P.Z > 0:
        raise DomainError(f"point depth Z={P.Z!r} must be positive")
    rho = math.hypot(P.X, P.Y)
    if rho == 0.0:
        return ImagePoint(model.u0, model.v0)
    theta = math.atan2(rho, P.Z)
    r = _poly(model.k, theta)
    # direction cosines straight from X, Y keep the polar angle exact
    scale = model.f * r / rho
    return ImagePoint(model.u0 + scale * P.X, model.v0 + scale * P.Y)


def ray_direction_to_pixel(model: FisheyeModel, theta: float, phi: float) -> ImagePoint:
    r = radial_forward(model, theta)
    return ImagePoint(model.u0 + model.f * r * math.cos(phi), model.v0 + model.f * r * math.sin(phi))


# ---- calibration ------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    model: FisheyeModel
    rms_px: float
    iterations: int
    residuals: np.ndarray = field(repr=False, compare=False)


def _project_arrays(f, u0, v0, k, X, Y, Z):
    rho = np.hypot(X, Y)
    theta = np.arctan2(rho, Z)
    t2 = theta * theta
    r = np.zeros_like(theta)
    for c in reversed(k):
        r = r * t2 + c
    r = r * theta
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(rho > 0, f * r / np.where(rho > 0, rho, 1.0), 0.0)
    return u0 + scale * X, v0 + scale * Y


def calibrate(
    correspondences: Sequence[tuple[WorldPoint, ImagePoint]],
    initial_focal: float,
    *,
    principal: ImagePoint | None = None,
    fix_principal: bool = False,
    altitude: float | None = None,
) -> CalibrationResult:
    """Fit (f, u0, v0, k2..k5) to floor-point/pixel pairs, with k1 pinned to 1.

    f and k1 only ever appear as the product f*k1 in pixel space, so k1 is
    held at 1 and the scale lives in f. The principal point is estimated
    unless ``fix_principal`` is set, in which case ``principal`` is used.

    Raises:
        InsufficientCorrespondencesError: fewer than 7 points, or fewer than
            3 distinct incidence angles.
        CalibrationError: iteration cap reached, or the fitted model is not
            monotonic.
    """
    pts = list(correspondences)
    if len(pts) < 7:
        raise InsufficientCorrespondencesError(
            f"need at least 7 correspondences, got {len(pts)}"
        )
    if not initial_focal > 0:
        raise InsufficientCorrespondencesError("initial focal guess must be positive")
    if fix_principal and principal is None:
        raise InsufficientCorrespondencesError("fix_principal requires a principal point")
    W = np.array([[w.X, w.Y, w.Z] for w, _ in pts], dtype=float)
    P = np.array([[p.u, p.v] for _, p in pts], dtype=float)
    if not (np.all(np.isfinite(W)) and np.all(np.isfinite(P))):
        raise InsufficientCorrespondencesError("correspondences must be finite")
    if np.any(W[:, 2] <= 0):
        raise InsufficientCorrespondencesError("all world points need positive depth")
    X, Y, Z = W.T
    theta = np.arctan2(np.hypot(X, Y), Z)
    if len(np.unique(np.round(theta, 9))) < 3:
        raise InsufficientCorrespondencesError(
            "correspondences span fewer than 3 distinct radial distances"
        )
    if altitude is None:
        altitude = float(Z[0]) if np.all(Z == Z[0]) else None

    f0 = float(initial_focal)
    if principal is not None:
        c0 = (principal.u, principal.v)
    else:
        # equidistant seed: u - f*theta*cos(phi) estimates u0 for every point
        eq_u, eq_v = _project_arrays(f0, 0.0, 0.0, (1.0,), X, Y, Z)
        c0 = (float(np.mean(P[:, 0] - eq_u)), float(np.mean(P[:, 1] - eq_v)))

    def unpack(x):
        if fix_principal:
            return x[0], c0[0], c0[1], (1.0, *x[1:])
        return x[0], x[1], x[2], (1.0, *x[3:])

    # slope samples for the monotonicity penalty; only used on a refit
    s_grid = np.linspace(0.0, THETA_MAX, 64) ** 2
    powers = np.array([(2 * i + 1) * s_grid**i for i in range(NUM_COEFFS)])

    def residuals(x, penalty=0.0):
        f, u0, v0, k = unpack(x)
        u, v = _project_arrays(f, u0, v0, k, X, Y, Z)
        out = [u - P[:, 0], v - P[:, 1]]
        if penalty:
            slope = np.asarray(k) @ powers
            # smooth hinge: about margin - slope below the margin, near 0 above it
            out.append(penalty * f * MONOTONE_MARGIN * np.logaddexp(0.0, 1.0 - slope / MONOTONE_MARGIN))
        return np.concatenate(out)

    def solve(start, penalty=0.0, tol=1e-15):
        return least_squares(
            residuals,
            np.asarray(start, dtype=float),
            method="trf",
            x_scale="jac",
            ftol=tol,
            xtol=tol,
            gtol=tol,
            max_nfev=MAX_CALIBRATION_ITERS,
            kwargs={"penalty": penalty},
        )

    x0 = [f0] + ([] if fix_principal else list(c0)) + [0.0] * (NUM_COEFFS - 1)
    sol = solve(x0)
    if sol.status > 0 and _min_slope(unpack(sol.x)[3]) <= 0.0:
        # the data rarely reach pi/2, so the free fit can turn over past the
        # last correspondence; refit with a soft hinge on small slopes
        sol = solve(sol.x, penalty=MONOTONE_PENALTY, tol=1e-10)
    res = sol.fun[: 2 * len(pts)]
    rms = float(np.sqrt(np.mean(res[: len(pts)] ** 2 + res[len(pts):] ** 2)))
    if sol.status == 0:
        raise CalibrationError(
            f"calibration did not converge in {MAX_CALIBRATION_ITERS} iterations "
            f"(best rms {rms:.6g} px)",
            rms_px=rms,
        )
    f, u0, v0, k = unpack(sol.x)
    try:
        model = FisheyeModel(f, u0, v0, k, altitude)
    except ValidationError as exc:
        raise CalibrationError(f"fitted model rejected: {exc}", rms_px=rms) from exc
    return CalibrationResult(model, rms, int(sol.nfev), res)
