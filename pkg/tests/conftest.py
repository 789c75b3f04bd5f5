import math

import numpy as np
import pytest

from bautin_dde import catalog
from bautin_dde.eigenbasis import build_basis
from bautin_dde.manifold import expand
from bautin_dde.spectrum import find_leading_pair

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def wright():
    return catalog.wright()


@pytest.fixture
def golden():
    return catalog.golden()


@pytest.fixture
def family():
    return catalog.cubic_quintic()


WRIGHT_HOPF = (math.pi / 2, 0.0)


def pipeline(sys, alpha, order=5, basis=None):
    """(basis, expansion) at ``alpha``."""
    if basis is None:
        basis = build_basis(sys, alpha, find_leading_pair(sys, alpha).lam)
    return basis, expand(sys, alpha, basis, order)


def random_critical_system(rng, n, r=1.0):
    """Random ``(A, B)`` shifted so the rightmost pair sits on the imaginary axis.

    ``A -> A - mu I`` and ``B -> e^{-mu r} B`` move every root by ``-mu``.
    """
    from bautin_dde.system_model import DelaySystem

    while True:
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, n)) * 0.7
        sys = DelaySystem.build(n, r, A.tolist(), B.tolist())
        try:
            lead = find_leading_pair(sys, (0, 0))
        except Exception:
            continue
        mu = lead.lam.real
        A2 = A - mu * np.eye(n)
        B2 = math.exp(-mu * r) * B
        crit = DelaySystem.build(n, r, A2.tolist(), B2.tolist())
        try:
            lead2 = find_leading_pair(crit, (0, 0))
        except Exception:
            continue
        if abs(lead2.lam.real) < 1e-9 and lead2.lam.imag > 0.1:
            return crit, lead2.lam
