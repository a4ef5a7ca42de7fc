import numpy as np
import pytest
from hypothesis import settings

from platoon_fdi.platoon import ReferenceProfile, Segment

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def maneuver_reference() -> ReferenceProfile:
    """0 -> 20 m/s in 10 s, cruise 20 s, brake to 10 m/s in 5 s."""
    return ReferenceProfile((Segment(10, "accelerate", 2.0), Segment(20, "cruise"),
                             Segment(5, "brake", 2.0)), 0.0)


# fault times at the middle of each maneuver segment
MANEUVERS = {"accelerate": 5.0, "cruise": 20.0, "brake": 32.5}


@pytest.fixture
def ref():
    return maneuver_reference()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
