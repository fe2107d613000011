import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.spatial.transform import Rotation

from refalign.geometry import Intrinsics, Pose

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_pose(rng, max_deg=30.0, max_t=1.0):
    rotvec = rng.normal(size=3)
    rotvec *= np.radians(rng.uniform(0, max_deg)) / np.linalg.norm(rotvec)
    return Pose(Rotation.from_rotvec(rotvec).as_matrix(), rng.uniform(-max_t, max_t, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def k640():
    return Intrinsics(500.0, 500.0, 320.0, 180.0)


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
