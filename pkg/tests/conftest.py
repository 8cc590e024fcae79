import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import ndimage

sys.path.insert(0, str(Path(__file__).parent))

from roitrack.geometry import Homography  # noqa: E402

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def noise256():
    return np.random.default_rng(7).integers(0, 256, (256, 256), dtype=np.uint8)


@pytest.fixture(scope="session")
def smooth_texture():
    """512x512 Gaussian-smoothed noise in [0, 255] (float)."""
    t = ndimage.gaussian_filter(np.random.default_rng(8).random((512, 512)) * 255, 1.0)
    return (t - t.min()) / (t.max() - t.min()) * 255


def random_homography(rng, strength=1.0):
    """Near-identity projective transform, always invertible."""
    m = np.eye(3)
    m[:2, :2] += rng.uniform(-0.15, 0.15, (2, 2)) * strength
    m[:2, 2] = rng.uniform(-20, 20, 2) * strength
    m[2, :2] = rng.uniform(-4e-4, 4e-4, 2) * strength
    return Homography(m)
