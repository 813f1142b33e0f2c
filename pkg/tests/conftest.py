import numpy as np
import pytest

from insod.trajsim import DEFAULT_ORIGIN, DEG, SegmentSpec, SensorSpec, build_trajectory


def short_segments():
    """Two-minute profile with every segment kind except ``still``."""
    return [
        SegmentSpec("const_speed", 10.0, speed=8.0),
        SegmentSpec("sine_accel", 10.0, speed=14.0),
        SegmentSpec("const_speed", 15.0),
        SegmentSpec("turn", 11.0, turn_rate=9.0 * DEG, ramp=1.0),
        SegmentSpec("const_accel", 10.0, accel=0.3),
        SegmentSpec("const_speed", 14.0),
        SegmentSpec("turn", 11.0, turn_rate=-9.0 * DEG, ramp=1.0),
        SegmentSpec("sine_accel", 10.0, speed=9.0),
        SegmentSpec("const_speed", 29.0),
    ]


@pytest.fixture(scope="session")
def short_spec():
    return SensorSpec()


@pytest.fixture(scope="session")
def short_truth(short_spec):
    return build_trajectory(short_segments(), DEFAULT_ORIGIN, 0.3, 0.01, short_spec.mounting,
                            short_spec.lever)


@pytest.fixture(scope="session")
def reference():
    """Reference 5000 s truth and its clean IMU increments."""
    from insod.experiments import reference_scenario

    return reference_scenario(SensorSpec())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one summary line per acceptance criterion."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
