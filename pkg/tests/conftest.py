import numpy as np
import pytest

from noris import LossBoundCase, MatrixSimilarity, Pool, Sample

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def plain_pool(points, sigmas=None, prefix="s"):
    pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]
    if sigmas is None:
        sigmas = [0.5] * len(pts)
    return Pool([Sample(f"{prefix}{k}", float(s), tuple(p.tolist())) for k, (p, s) in enumerate(zip(pts, sigmas))])


HAND_SIGMA = [0.9, 0.8, 0.7, 0.3]


def hand_matrix():
    m = np.full((4, 4), 0.1)
    np.fill_diagonal(m, 1.0)
    m[0, 1] = m[1, 0] = 0.9
    m[2, 3] = m[3, 2] = 0.2
    return m


@pytest.fixture
def hand_pool():
    # features are irrelevant when the matrix provider is used, but must be distinct for d_max
    return plain_pool([[0.0], [1.0], [2.0], [3.0]], HAND_SIGMA)


@pytest.fixture
def hand_sim():
    return MatrixSimilarity(hand_matrix())


def random_instance(rng, n_min=4, n_max=10):
    n = int(rng.integers(n_min, n_max + 1))
    sigma = rng.random(n)
    a = rng.random((n, n))
    m = (a + a.T) / 2.0
    np.fill_diagonal(m, 1.0)
    pool = plain_pool([[float(k)] for k in range(n)], sigma)
    return pool, m


def lipschitz_cases(rng, count, dim=3, anchors=4):
    """Yield (case, loss_u_after) pairs built from kappa-Lipschitz losses.

    Before training: l(x) = min_a kappa * |x - a| + c_a. After training on v:
    l'(x) = kappa * |x - v|, so l'(v) = 0. Points are swapped so l(v) >= l(u).
    """
    for _ in range(count):
        kappa = float(rng.uniform(0.1, 5.0))
        a = rng.standard_normal((anchors, dim))
        c = rng.uniform(0.0, 2.0, anchors)
        u, v = rng.standard_normal((2, dim))

        def loss(x):
            return float(np.min(kappa * np.linalg.norm(a - x, axis=1) + c))

        if loss(v) < loss(u):
            u, v = v, u
        d = float(np.linalg.norm(u - v))
        yield LossBoundCase(loss(u), loss(v), kappa, d), kappa * d
