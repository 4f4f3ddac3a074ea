import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "soapool", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("soapool")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def spd_with_condition(rng, dim, cond):
    """Random eigenbasis, eigenvalues log-spaced between 1 and 1/cond."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    m = (q * np.geomspace(1.0, 1.0 / cond, dim)) @ q.T
    return (m + m.T) / 2


def wishart_spd(rng, dim):
    a = rng.standard_normal((dim, dim))
    return a.T @ a + 1e-3 * np.eye(dim)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num])
