import sys

import numpy as np
import pytest
from hypothesis import strategies as st

from guided_anchoring.geometry import Box
from guided_anchoring.pyramid import GroundTruthScene, PyramidConfig

# The single-object fixture used across modules: a 64x64 box centered at (100, 100).
FIXTURE_GT = Box(100.0, 100.0, 64.0, 64.0)

coords = st.floats(-500, 500, allow_nan=False, allow_infinity=False)
sizes = st.floats(0.5, 400, allow_nan=False, allow_infinity=False)
boxes = st.builds(Box, coords, coords, sizes, sizes)


@pytest.fixture
def fixture_scene():
    return GroundTruthScene(0, 256, 256, (FIXTURE_GT,))


@pytest.fixture
def single_level_cfg():
    return PyramidConfig.for_image(256, 256, strides=(16,), sigma=8.0, sigma1=0.2, sigma2=0.5)


@pytest.fixture
def three_level_cfg():
    # sigma=4 puts the 64x64 fixture on the stride-16 level so both neighbours exist
    return PyramidConfig.for_image(256, 256, strides=(8, 16, 32), sigma=4.0, sigma1=0.2, sigma2=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "CRITERION_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
