import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fgp.market_sim import MarketModel, covariance

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def market3():
    return MarketModel.diagonal([0.2, 0.2, 0.2], growth=[0.05, 0.02, 0.08], riskless_rate=0.03)


@pytest.fixture
def cov3(market3):
    return covariance(market3)


@pytest.fixture
def grid50():
    """Fixed 50-point random positive grid in three dimensions with times in [0, 0.9]."""
    rng = np.random.default_rng(20240601)
    return rng.uniform(0.2, 5.0, size=(50, 3)), rng.uniform(0.0, 0.9, size=50)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture
def verdict(request):
    """Record a one-line pass/fail verdict for an acceptance criterion, then assert it."""

    def record(number, title, passed, detail):
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title} ({detail})"
        _ACCEPTANCE.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
