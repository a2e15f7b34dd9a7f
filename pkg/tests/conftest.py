import math

import pytest
from hypothesis import HealthCheck, settings

from cbmlab.levy_mech import (
    Atoms,
    CompoundExponential,
    LevyMechanism,
    StableTail,
    TabulatedTail,
)

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def sqrt_mech():
    """Psi(z) = z^2 - sqrt(z)."""
    return LevyMechanism(math.sqrt(2.0), 1.0 / math.sqrt(math.pi), StableTail(0.5, 1.0 / (2.0 * math.sqrt(math.pi))))


MECHANISMS = {
    "drift": LevyMechanism.linear(1.0),
    "brownian": LevyMechanism(math.sqrt(2.0), 0.0),
    "atoms": LevyMechanism(0.5, 0.0, Atoms(((0.5, 1.0), (2.0, 1.0)))),
    "compound_exp": LevyMechanism(1.0, -1.0, CompoundExponential(1.0, 0.5)),
    "stable_half": sqrt_mech(),
    "stable_1.5": LevyMechanism(0.3, 0.2, StableTail(1.5, 1.0)),
    "stable_1": LevyMechanism(0.0, -0.5, StableTail(1.0, 0.7)),
    "tabulated_none": LevyMechanism(0.5, 0.0, TabulatedTail((0.5, 1.0, 2.0, 3.0), (2.0, 1.0, 0.5, 0.0))),
    "tabulated_power": LevyMechanism(0.5, 0.0, TabulatedTail((0.5, 1.0, 2.0, 3.0), (2.0, 1.0, 0.5, 0.25), "power", 1.5)),
    "tabulated_log": LevyMechanism(1.0, -1.0, TabulatedTail((1.0, math.e, math.e**2), (2.0, 2.0, 1.0), "log")),
}


@pytest.fixture(params=sorted(MECHANISMS))
def mech_case(request):
    return request.param, MECHANISMS[request.param]


# acceptance criteria report one line each at the end of the run
ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    prev = ACCEPTANCE.get(number)
    if prev is not None:
        ok = ok and prev[0]
        detail = f"{prev[1]}; {detail}"
    ACCEPTANCE[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
