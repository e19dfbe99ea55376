"""Overhead-fisheye person localization: camera model, box geometry,
equivariant matching loss, metrics and a synthetic scene oracle."""

from __future__ import annotations

from .camera import (
    CalibrationResult,
    FisheyeModel,
    ImagePoint,
    NormalizedRay,
    WorldPoint,
    calibrate,
    pixel_to_ray,
    radial_forward,
    radial_inverse,
    ray_to_pixel,
)
from .errors import (
    CalibrationError,
    FisheyeLocError,
    NumericalError,
    ParseError,
    UnlocalizableError,
    ValidationError,
)
from .evaluation import DistanceBucket, EvalReport, evaluate
from .geometry import RadiusAlignedBox, RotatedBox, rotated_giou, rotated_iou
from .localization import AnchorStrategy, localize
from .matching import Detection, GroundTruthBox, LossWeights, hungarian_match

__version__ = "0.1.0"
