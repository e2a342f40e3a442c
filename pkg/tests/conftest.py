import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from crinfsup.mesh import random_patch

settings.register_profile(
    "default", deadline=None, max_examples=30,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

MIN_ANGLE = math.radians(20.0)


def patch_for_seed(seed: int):
    """Admissible random patch with m in 3..12 drawn from the seed."""
    m = int(np.random.default_rng(seed).integers(3, 13))
    return random_patch(m, MIN_ANGLE, seed=seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def pytest_terminal_summary(terminalreporter):
    import sys

    lines = {}
    for mod in list(sys.modules.values()):
        lines.update(getattr(mod, "ACCEPTANCE_LINES", None) or {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
