import math

import pytest

from spherebilliards.geometry import Metric
from spherebilliards.orbits import find_birkhoff
from spherebilliards.table import build_table

ALPHA = 0.7
STRONG = [(2, 0.05, 0.0), (3, 0.0, 0.02)]
MILD = [(2, 0.01, 0.0), (3, 0.0, 0.004)]
HARMONICS = [(2, 1, 0.05), (3, -2, 0.03), (1, 0, 0.1)]
POLE = [0.0, 0.0, 1.0]


@pytest.fixture(scope="session")
def round_metric():
    return Metric.round()


@pytest.fixture(scope="session")
def conformal_metric():
    return Metric.conformal(HARMONICS)


@pytest.fixture(scope="session")
def circle(round_metric):
    return build_table(round_metric, POLE, [], radius=ALPHA)


@pytest.fixture(scope="session")
def strong(round_metric):
    """Round metric, boundary with k = 2, 3 modes; all low-period Birkhoff orbits hyperbolic."""
    return build_table(round_metric, POLE, STRONG, radius=ALPHA)


@pytest.fixture(scope="session")
def mild(round_metric):
    """Weaker modes; its (1, 3) minimax orbit is elliptic."""
    return build_table(round_metric, POLE, MILD, radius=ALPHA)


@pytest.fixture(scope="session")
def conformal(conformal_metric):
    return build_table(conformal_metric, POLE, STRONG, radius=ALPHA)


@pytest.fixture(scope="session")
def strong_min12(strong):
    return find_birkhoff(strong, 1, 2)


@pytest.fixture(scope="session")
def mild_minimax13(mild):
    return find_birkhoff(mild, 1, 3, kind="minimax")


def circle_chord(theta: float, alpha: float = ALPHA) -> float:
    """Spherical-trigonometry chord of a circle of geodesic radius alpha: tan(l/2) = sin(theta) tan(alpha)."""
    return 2.0 * math.atan(math.sin(theta) * math.tan(alpha))
