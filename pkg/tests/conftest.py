from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from fisheyeloc.camera import FisheyeModel
from fisheyeloc.errors import ValidationError
from fisheyeloc.geometry import RotatedBox

settings.register_profile(
    "default", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_model(rng: np.random.Generator, Z: float | None = 3.0) -> FisheyeModel:
    """A valid (monotone) 5-term model; redraws until the slope stays positive."""
    while True:
        k = (1.0, *rng.uniform(-0.08, 0.08, 1), *rng.uniform(-0.01, 0.01, 3))
        try:
            return FisheyeModel(float(rng.uniform(300, 1500)), float(rng.uniform(1000, 2000)),
                                float(rng.uniform(1000, 2000)), k, Z)
        except ValidationError:
            continue


def random_box(rng: np.random.Generator, spread: float = 10.0) -> RotatedBox:
    return RotatedBox(
        float(rng.uniform(-spread, spread)),
        float(rng.uniform(-spread, spread)),
        float(rng.uniform(0.5, 8.0)),
        float(rng.uniform(0.5, 8.0)),
        float(rng.uniform(-math.pi, math.pi)),
    )


@st.composite
def models(draw, Z: float | None = 3.0):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_model(np.random.default_rng(seed), Z)


@st.composite
def rotated_boxes(draw, spread: float = 10.0):
    coord = st.floats(-spread, spread, allow_nan=False)
    side = st.floats(0.1, 10.0, allow_nan=False)
    angle = st.floats(-math.pi, math.pi, allow_nan=False)
    return RotatedBox(draw(coord), draw(coord), draw(side), draw(side), draw(angle))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


# one line per acceptance criterion, appended by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
