import numpy as np
import pytest

from casanet import kernels

KERNEL_NAMES = (
    "softmax_rows",
    "softmax_rows_backward",
    "median_filter",
    "label_runs",
    "intersection_length",
    "sweep_components",
    "assign_min_cost",
)

BACKENDS = ["python"] + (["cython"] if kernels.compiled_backend is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Route every kernel call through one backend for the duration of a test."""
    impl = kernels.python_backend if request.param == "python" else kernels.compiled_backend
    for name in KERNEL_NAMES:
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
