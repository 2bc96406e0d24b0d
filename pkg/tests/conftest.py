import numpy as np
import pytest

from dirac_torus.rng import stream
from dirac_torus.spectral import LatticeSpec

# criterion number -> (passed, detail); filled by test_acceptance, printed at the end of the run
ACCEPTANCE: dict = {}


@pytest.fixture
def rng(request):
    return stream(0, request.node.name)


@pytest.fixture(scope="session")
def small_lattice():
    return LatticeSpec(K=3)


@pytest.fixture(scope="session")
def skew_lattice():
    return LatticeSpec(1.0, 2.0, 3.0, K=3)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_coeffs(rng, lattice, decay=2.0):
    n2 = np.sum(np.asarray(np.meshgrid(*[np.arange(-lattice.K, lattice.K + 1)] * 3, indexing="ij")) ** 2, axis=0)
    amp = (1.0 + n2.ravel()) ** (-decay / 2)
    c = rng.standard_normal((lattice.n_modes, 4)) + 1j * rng.standard_normal((lattice.n_modes, 4))
    return c * amp[:, None]
