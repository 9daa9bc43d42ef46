import numpy as np
import pytest

from qefl import _backend
from qefl.data import Dataset, gen_synthetic
from qefl.nn import Architecture, init_params


@pytest.fixture(params=sorted(_backend.KERNELS))
def kernels(request):
    """Every available kernel backend."""
    return _backend.KERNELS[request.param]


@pytest.fixture
def small_arch():
    return Architecture(4, (5, 3), 3)


@pytest.fixture
def small_data():
    rng = np.random.default_rng(7)
    X = rng.uniform(-1, 1, size=(23, 4))
    return Dataset(X, rng.integers(0, 3, size=23), 3)


@pytest.fixture
def synthetic_small():
    return gen_synthetic(120, 3)


@pytest.fixture
def synth_arch():
    return Architecture(10, (8,), 2)


@pytest.fixture
def synth_params(synth_arch):
    return init_params(synth_arch, 11)


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(label: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
