import os

import pytest
from hypothesis import HealthCheck, settings

from sngrav.model import Configuration, Prescription, Theory, internal_params

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CRITERIA = []


def record_criterion(label, ok, detail):
    CRITERIA.append((label, ok, detail))
    print(f"CRITERION {label}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(CRITERIA, key=lambda c: (len(c[0].rstrip("ab'")), c[0])):
        terminalreporter.write_line(f"CRITERION {label}: {'PASS' if ok else 'FAIL'} {detail}")


@pytest.fixture
def desk():
    """Desk-scale self-gravity set in internal units."""
    return internal_params(omega_m=1.0, q_m=1e3, Lambda=1.0, omega_sn=0.5)


@pytest.fixture
def desk_linear():
    return internal_params(omega_m=1.0, q_m=1e3, Lambda=1.0, omega_g=0.05,
                           configuration=Configuration.LINEAR)


@pytest.fixture
def desk_folded():
    return internal_params(omega_m=1.0, q_m=1e3, Lambda=1.0, omega_g=0.05,
                           configuration=Configuration.FOLDED)


def variants(p):
    """The four prescriptions/theories of a parameter set."""
    return {"pre": p.with_theory(Theory.SN, Prescription.PRE),
            "post": p.with_theory(Theory.SN, Prescription.POST),
            "causal": p.with_theory(Theory.SN, Prescription.CAUSAL),
            "qg": p.with_theory(Theory.QG)}
