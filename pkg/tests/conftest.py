import numpy as np
import pytest

from cavitymatch import RootedTree, WeightedGraph


def random_tree(rng: np.random.Generator, n: int, weight_sampler) -> WeightedGraph:
    """Uniform random recursive tree on n vertices with sampled weights."""
    ws = weight_sampler(rng, max(n - 1, 0))
    edges = [(int(rng.integers(0, v)), v, float(ws[v - 1])) for v in range(1, n)]
    return WeightedGraph(n, edges)


def random_rooted_tree(rng, n, weight_sampler) -> RootedTree:
    return RootedTree(random_tree(rng, n, weight_sampler), 0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
