import numpy as np
import pytest
from hypothesis import settings

from hilbert_diffuse import CovarianceSpectrum

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(params=["poly2", "geom2"])
def preset_spectrum(request):
    return CovarianceSpectrum.preset(request.param, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
