import numpy as np
import pytest

from logwave.geometry import constant_family, linear_family
from logwave.integrator import SimConfig

REFERENCE_DOMAIN = {"kind": "linear", "x_lo": 0.0, "x_hi": 1.0, "left0": 0.0, "right0": 0.5, "right_speed": 0.05}
REFERENCE_U0 = {"kind": "sine", "amplitude": 0.1, "period": 0.5}


def reference_config(**kw) -> SimConfig:
    base = dict(gamma=0.5, domain=REFERENCE_DOMAIN, u0=REFERENCE_U0, a=1.0, b=1.0, epsilon=1e-3, m=100, T=20.0)
    base.update(kw)
    return SimConfig(**base)


@pytest.fixture
def expanding():
    """Omega = (0, 1), Omega_t = (0, 0.5 + 0.1 t)."""
    return linear_family((0.0, 1.0), 0.0, 0.5, horizon=5.0, right_speed=0.1)


@pytest.fixture
def cylinder():
    return constant_family((0.0, 1.0), 0.0, 1.0, horizon=5.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# filled by the acceptance tests, echoed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
