import numpy as np
import pytest

from shared_subspace.model import MetaDistribution, sample_ground_truth

BENCH = dict(d=10, k=6, E=999, n1=50, n2=2000, sigma=0.01, theta=6.0, l11=0.1, l22=3.0)


def bench_meta(sigma=BENCH["sigma"], l11=BENCH["l11"], l22=BENCH["l22"]):
    return MetaDistribution.isotropic(BENCH["d"], BENCH["k"], BENCH["theta"], l11, l22, sigma)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def meta():
    return bench_meta()


@pytest.fixture
def gt(meta):
    return sample_ground_truth(meta, np.random.default_rng(7))


def conjugate_gradient_minimiser(target, r1, mean, l1, l2):
    """Minimise the quadratic objective by restarted CG (no factorisation).

    Returns the iterate with the smallest true gradient norm.
    """
    X, y, n = target.X, target.y, target.n
    P = r1 @ r1.T
    d = X.shape[1]

    def hess(v):
        return X.T @ (X @ v) / n + l1 * (P @ v) + l2 * (v - P @ v)

    b = X.T @ y / n + l1 * (P @ mean)
    tol = 1e-14 * max(1.0, np.linalg.norm(b))
    x = best = np.zeros(d)
    best_res = np.linalg.norm(b)
    for _ in range(20):  # restarts from the best iterate so far
        x = best
        r = b - hess(x)
        p = r.copy()
        for _ in range(2 * d):
            hp = hess(p)
            curv = p @ hp
            if curv <= 0 or r @ r == 0:
                break
            alpha = (r @ r) / curv
            x = x + alpha * p
            r_new = r - alpha * hp
            p = r_new + (r_new @ r_new) / (r @ r) * p
            r = r_new
            # recursive residuals drift on ill-conditioned systems; rank by the true one
            res = np.linalg.norm(b - hess(x))
            if res < best_res:
                best, best_res = x, res
        if best_res <= tol:
            break
    return best
