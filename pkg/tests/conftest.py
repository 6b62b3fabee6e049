import numpy as np
import pytest

from homsamp.dyadic import build_dyadic_system, finest_level
from homsamp.space import discretize
from homsamp.wavelets import build_frame

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


class Bundle:
    """A space with its cube system and (lazily) its frame."""

    def __init__(self, space, system, C_phi=1.5):
        self.space, self.system, self.C_phi = space, system, C_phi
        self._frame = None

    @property
    def frame(self):
        if self._frame is None:
            self._frame = build_frame(self.system, self.space, self.C_phi, "tent")
        return self._frame


def _torus(n):
    space = discretize("torus-1d", n)
    return Bundle(space, build_dyadic_system(space, 0, finest_level(space)))


@pytest.fixture(scope="session")
def torus64():
    return _torus(64)


@pytest.fixture(scope="session")
def torus256():
    return _torus(256)


@pytest.fixture(scope="session")
def torus4096():
    return _torus(4096)


@pytest.fixture(scope="session")
def torus8192():
    return _torus(8192)


@pytest.fixture(scope="session")
def cantor8():
    space = discretize("cantor-dset", depth=8)
    return Bundle(space, build_dyadic_system(space, 0, 8, base=3))


@pytest.fixture(scope="session")
def aniso_matched():
    space = discretize("anisotropic-square", shape=(16, 256))
    return Bundle(space, build_dyadic_system(space, 0, finest_level(space)), C_phi=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
