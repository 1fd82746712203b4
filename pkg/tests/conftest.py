import numpy as np
import pytest
from hypothesis import settings

from mildnet.data import Dataset, sample_unit_ball, sample_unit_sphere
from mildnet.loss import CoeffVector
from mildnet.network import NetParams, build_mask_series

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_params(rng, m, masks):
    """Random magnitudes in [-1, 1] and unit directions on each mask support."""
    alpha = rng.uniform(-1, 1, m)
    dirs = np.zeros((m, masks.d))
    for j in range(m):
        supp = masks.support(j % masks.period)
        dirs[j, supp] = sample_unit_sphere(rng, 1, supp.size)[0]
    return NetParams(alpha, dirs)


def random_data(rng, n, d):
    X = sample_unit_ball(rng, n, d)
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return Dataset(X, y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fnn3():
    return build_mask_series(3, 3)


def dead_network(n, lam0, seed=0):
    """All neurons inactive on data clustered near e1, so G(e1) is about n/2."""
    rng = np.random.default_rng(seed)
    X = np.tile([1.0, 0.0, 0.0], (n, 1)) + 0.02 * rng.standard_normal((n, 3))
    X /= np.maximum(1.0, np.linalg.norm(X, axis=1))[:, None]
    ds = Dataset(X, np.ones(n))
    m = n + 1
    alpha = 0.02 * np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
    U = 0.2 * rng.standard_normal((m, 3))
    U[:, 0] = -1.0
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    U *= np.sign(alpha)[:, None]
    return ds, NetParams(alpha, U), CoeffVector.constant(m, lam0)


# one line per acceptance criterion, echoed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
