import math

import numpy as np
import pytest

from uavcrn.io import load_bundled
from uavcrn.model import Eavesdropper, RadioConstants, Scenario

ACCEPTANCE = []


def record(criterion, ok, detail):
    """Collect one acceptance line; printed in the terminal summary."""
    ACCEPTANCE.append((criterion, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}")


@pytest.fixture(scope="session")
def scen1():
    return load_bundled("scenario1").scenario


def small_scenario(**kw):
    """Compact instance that solves in well under a second."""
    base = dict(
        users=[(0.0, 100.0), (60.0, 120.0)],
        primaries=[(200.0, -150.0)],
        eves=[Eavesdropper((150.0, 40.0), 10.0)],
        altitude=100.0,
        q_start=(-150.0, 0.0),
        q_end=(250.0, 0.0),
        n_slots=8,
        slot_len=1.0,
        v_max=80.0,
        p_max=3.0,
        gamma_it=1e-12,
        see_min=1.0,
        radio=RadioConstants(beta0=1e-6, sigma2=1e-14, alpha=2.2, pe=1e-7),
    )
    base.update(kw)
    return Scenario(**base)


@pytest.fixture
def small():
    return small_scenario()


def finite(x):
    return np.all(np.isfinite(x)) and not math.isnan(float(np.sum(x)))
