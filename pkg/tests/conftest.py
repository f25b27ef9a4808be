import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from epsnet.operators import PAULI, DecomposedOperator

settings.register_profile(
    "default",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")

I2, X, Y, Z = PAULI["I"], PAULI["X"], PAULI["Y"], PAULI["Z"]
PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)


def rand_herm(rng, d, norm=None):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = (a + a.conj().T) / 2
    if norm is not None:
        h = h * (norm / np.linalg.norm(h, 2))
    return h


def rand_density(rng, d, rank=None):
    r = d if rank is None else rank
    g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def rand_unit(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def phi_plus_pauli(sign=1.0):
    """|Phi+><Phi+| = sum_j s_j (sigma_j/2) (x) (sigma_j/2), s = (+1, +1, -1, +1)."""
    terms = [(sign * s * P / 2, P / 2) for s, P in zip((1, 1, -1, 1), (I2, X, Y, Z))]
    return DecomposedOperator(terms, (2, 2), (0.5, 0.5))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
