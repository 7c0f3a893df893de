import numpy as np
import pytest

from smiselect.kernel import SimilarityKernel

_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record a pass/fail line for an acceptance criterion."""

    def record(label, ok, detail=""):
        _CRITERIA[label] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_CRITERIA, key=lambda s: (len(s.split()[0]), s)):
        ok, detail = _CRITERIA[label]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")


def random_kernel(rng, n, m, dim=None, gamma=None):
    """Gaussian kernel on random points: ``n`` ground items, ``m`` targets."""
    dim = dim or int(rng.integers(1, 6))
    gamma = gamma or float(rng.uniform(0.1, 2.0))
    X = rng.normal(size=(n + m, dim))
    D = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
    K = np.exp(-gamma * D)
    return SimilarityKernel.from_matrices(K[:n, n:], K[n:, n:], K[:n, :n], gamma)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
