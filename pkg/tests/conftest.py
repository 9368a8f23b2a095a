import numpy as np
import pytest

from irsnoma.channels import ChannelParams, ChannelSet, Geometry, sample_channels


def random_channels(seed, k=2, n=1, m=4, positions="reference"):
    geo = Geometry() if positions == "reference" else Geometry(user_positions=None)
    return sample_channels(geo.with_elements(m), ChannelParams(), k, n, seed)


def toy_channels(rng, k=2, n=1, m=3, scale=1.0):
    def cn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return ChannelSet(cn(m, n) * scale, cn(k, m) * scale, cn(k, n) * scale, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance lines, keyed by criterion number
REPORT = {}


def pytest_terminal_summary(terminalreporter):
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for key in sorted(REPORT):
            terminalreporter.write_line(REPORT[key])
