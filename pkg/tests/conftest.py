import numpy as np
import pytest
from hypothesis import settings

from irsnoma.scenario import ChannelRealization, SystemConfig, sample_channels

settings.register_profile("repo", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("repo")


def synthetic_channel(h, z=None, noise_power=1.0):
    """Realization with prescribed direct gains ``h`` (N, K) and cascaded rows ``z`` (N, K, M)."""
    h = np.asarray(h, complex)
    n, k = h.shape
    z = np.zeros((n, k, 0), complex) if z is None else np.asarray(z, complex)
    m = z.shape[2]
    f = np.ones((n, m), complex)
    return ChannelRealization(
        h=h, g=np.conj(z), f=f, f_los=f.copy(), f_nlos=np.zeros((n, m), complex),
        noise_power=noise_power, user_pos=np.zeros((k, 3)),
    )


@pytest.fixture(scope="session")
def config():
    return SystemConfig()


@pytest.fixture(scope="session")
def chan(config):
    return sample_channels(config, 3)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
