import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_simplex(rng, d, min_volume=1e-2):
    """Random nondegenerate d-simplex (rows are vertices)."""
    while True:
        S = rng.standard_normal((d + 1, d))
        vol = abs(np.linalg.det(S[:-1] - S[-1]))
        if vol > min_volume:
            return S


# acceptance criteria report: criterion number -> "CRITERION k: PASS|FAIL ..." line
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
