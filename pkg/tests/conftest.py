import numpy as np
import pytest

from regot.dual import DualPoint
from regot.problem import ProblemInstance


def random_instance(rng, n, m, eta=0.1):
    M = rng.uniform(0.0, 1.0, size=(n, m))
    M /= M.max()
    a = rng.uniform(0.5, 1.5, size=n)
    b = rng.uniform(0.5, 1.5, size=m)
    return ProblemInstance(M, a / a.sum(), b / b.sum(), eta)


def random_point(rng, p, scale=None):
    """Dual point with log-normal perturbations and total plan mass 1."""
    scale = p.eta if scale is None else scale
    alpha = p.eta * np.log(p.a) + scale * rng.standard_normal(p.n)
    beta = p.eta * np.log(p.b) + scale * rng.standard_normal(p.m)
    z = (alpha[:, None] + beta[None, :] - p.M) / p.eta
    top = z.max()
    alpha -= p.eta * (top + np.log(np.exp(z - top).sum()))
    alpha += beta[-1]
    beta -= beta[-1]
    return DualPoint(alpha, beta)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# Acceptance verdicts, filled by test_acceptance and echoed after the run.
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])
