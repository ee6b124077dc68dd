import numpy as np
import pytest

from noisyctl import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_hermitian(rng, d, scale=1.0):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * (a + a.conj().T) / 2


def random_state(rng, d):
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request, monkeypatch):
    """Run a test once per kernel backend by swapping the module-level functions."""
    impl = kernels.available_backends()[request.param]
    monkeypatch.setattr(kernels, "phase_variance_grad", impl.phase_variance_grad)
    monkeypatch.setattr(kernels, "apply_kicks", impl.apply_kicks)
    return request.param


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    lines = test_acceptance.pytest_terminal_summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
