import pytest

from distill_lab import NoiseSchedule


@pytest.fixture(scope="session")
def schedule():
    return NoiseSchedule()
