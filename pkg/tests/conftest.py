import math

import pytest

from lossy_cavity import SystemParams, TruncatedScenario

# 2g/kappa = 10, delta/kappa = 0.1, kappa1/kappa = 0.9, gamma/kappa = 0.5
BASE = SystemParams.from_ratios(10.0, 0.1, 0.9, 0.5)


@pytest.fixture
def base():
    return BASE


@pytest.fixture
def strong_resonant():
    return SystemParams.from_ratios(200.0, 0.0, 0.9, 0.5)


@pytest.fixture(params=["half", "full", "fixed"])
def truncated_case(request):
    if request.param == "half":
        return TruncatedScenario.half_rabi(BASE)
    if request.param == "full":
        return TruncatedScenario.full_rabi(BASE)
    return TruncatedScenario(BASE, 2.2)


def as_tuple(p):
    return p.g, p.kappa, p.gamma, p.delta
