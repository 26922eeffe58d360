import sys

import pytest

from fpdsim.circuit import default_chain
from fpdsim.devices import MosfetParams, PhotodiodeParams, Polarity
from fpdsim.panel import PanelConfig

IDEAL_NMOS = MosfetParams(Polarity.NMOS, vth=0.8, kp=5e-5, lam=0.0)
IDEAL_PMOS = MosfetParams(Polarity.PMOS, vth=0.9, kp=1.7e-5, lam=0.0)


def mismatched_devices(sigma, lam=0.02):
    return (MosfetParams(Polarity.NMOS, 0.8, 5e-5, lam, sigma),
            MosfetParams(Polarity.PMOS, 0.9, 1.7e-5, lam, sigma))


@pytest.fixture
def ideal_chain():
    return default_chain(IDEAL_NMOS, IDEAL_PMOS)


@pytest.fixture
def chain():
    return default_chain()


@pytest.fixture
def ideal_cfg():
    return PanelConfig(chain=default_chain(IDEAL_NMOS, IDEAL_PMOS))


@pytest.fixture
def cfg():
    return PanelConfig()


@pytest.fixture
def mismatch_cfg():
    nmos, pmos = mismatched_devices(0.01)
    return PanelConfig(chain=default_chain(nmos, pmos), seed=7)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = sorted(getattr(acceptance, "REPORT", []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
