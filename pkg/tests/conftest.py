import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("adsqnm", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("adsqnm")


@pytest.fixture(scope="session")
def params_ref():
    from adsqnm.geometry import BlackHoleParams

    return BlackHoleParams(1.0, 0.1, 1.5, 0)


@pytest.fixture(scope="session")
def ops_ref(params_ref):
    """Coarse and fine Dirichlet operators at (M=1, a=0.1, nu=3/2, k=0)."""
    from adsqnm.stationary import assemble, build_grid

    coarse = assemble(params_ref, build_grid(params_ref, 32, 12))
    fine = assemble(params_ref, build_grid(params_ref, 64, 24))
    return coarse, fine


@pytest.fixture(scope="session")
def spectrum_ref(ops_ref):
    from adsqnm.spectra import SearchRegion, solve_qnf

    coarse, fine = ops_ref
    return solve_qnf(coarse, SearchRegion(2.0, 15.0, -8.0, 1.0), fine)


@pytest.fixture(scope="session")
def sequence_ref(params_ref):
    from adsqnm.quasimodes import residual_sequence

    return residual_sequence(params_ref, range(3, 10))


@pytest.fixture(scope="session")
def small_bh():
    """A small black hole (r_+ = 0.2) whose photon region traps low-ell modes."""
    from adsqnm.geometry import BlackHoleParams

    return BlackHoleParams(0.13, 0.1, 1.5, 0)


ACCEPTANCE: dict = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    """Store one acceptance outcome; printed in the terminal summary."""
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
