import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_skew(rng, n, scale=1.0):
    A = rng.standard_normal((n, n)) * scale
    return (A - A.T) / 2


def haar(rng, n, size=None):
    """Independent Haar sampler (QR of a Gaussian with sign fix), used as a test oracle."""
    shape = () if size is None else (size,)
    G = rng.standard_normal(shape + (n, n))
    Q, R = np.linalg.qr(G)
    Q = Q * np.sign(np.diagonal(R, axis1=-2, axis2=-1))[..., None, :]
    flip = np.linalg.det(Q) < 0
    Q[..., :, 0] = np.where(flip[..., None], -Q[..., :, 0], Q[..., :, 0])
    return Q


def random_weighted_graph(rng, N, density=0.6, connected=True):
    """Random weighted graph on N nodes as (pairs, weights); a spanning path is added when connected."""
    W = np.triu(rng.uniform(0.2, 2.0, (N, N)) * (rng.random((N, N)) < density), 1)
    if connected:
        perm = rng.permutation(N)
        for a, b in zip(perm[:-1], perm[1:]):
            i, j = min(a, b), max(a, b)
            if W[i, j] == 0:
                W[i, j] = rng.uniform(0.2, 2.0)
    pairs = np.argwhere(W > 0)
    return pairs, W[pairs[:, 0], pairs[:, 1]]
