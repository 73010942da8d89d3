import numpy as np
import pytest

from gais.dataset import Dataset
from gais.graph import build_graph


def make_dataset(X, y, n_classes=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.int64)
    C = n_classes or int(y.max()) + 1
    return Dataset(X, y, C, [f"f{i}" for i in range(X.shape[1])])


def random_graph(m, rng, density=0.4):
    """Random symmetric similarity matrix thresholded into a graph."""
    S = rng.random((m, m))
    S = (S + S.T) / 2
    np.fill_diagonal(S, 1.0)
    return build_graph(S, 1.0 - density, 0.0, int(rng.integers(1 << 30)))


def blobs(n, rng, centers=((0.25, 0.25), (0.75, 0.75)), scale=0.1):
    y = np.arange(n) % len(centers)
    X = np.asarray(centers)[y] + rng.normal(scale=scale, size=(n, len(centers[0])))
    return make_dataset(X, y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
