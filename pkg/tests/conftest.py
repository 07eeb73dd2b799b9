import numpy as np
import pytest

from wavesr import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    """Run a test once per available kernel backend."""
    previous = kernels.BACKEND
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)


@pytest.fixture(scope="session")
def natural_image():
    """A natural RGB test image in [0, 1], cropped to 128x128."""
    skdata = pytest.importorskip("skimage.data")
    img = skdata.astronaut()[96:224, 160:288].astype(np.float64) / 255.0
    return img.transpose(2, 0, 1).copy()


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
