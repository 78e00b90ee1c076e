import numpy as np
import pytest

from infoplan.beliefs import CategoricalDist, FactoredBelief


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dist(rng, dim, min_p=0.0):
    """Random full-ish support categorical via a Dirichlet draw."""
    p = rng.dirichlet(np.ones(dim))
    if min_p > 0.0:
        p = (p + min_p) / (p + min_p).sum()
    return CategoricalDist(p)


def random_belief(rng, n_factors=3, dims=None, min_p=0.0):
    if dims is None:
        dims = [int(rng.integers(2, 6)) for _ in range(n_factors)]
    return FactoredBelief.of(
        {i: random_dist(rng, d, min_p=min_p) for i, d in enumerate(dims)}
    )


def uniform_belief(n_factors, dim):
    return FactoredBelief.of({i: CategoricalDist.uniform(dim) for i in range(n_factors)})
