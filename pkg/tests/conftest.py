import numpy as np
import pytest

from fairlift import backend
from fairlift.graph import SkeletonGraph, build_operators, default_human36m_skeleton


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # JIT-compile once up front so timed tests measure steady-state speed.
    backend.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(20240615)


@pytest.fixture(scope="session")
def h36m():
    return default_human36m_skeleton()


@pytest.fixture(scope="session")
def h36m_ops(h36m):
    return build_operators(h36m, max_hop=3)


@pytest.fixture
def two_node_ops():
    return build_operators(SkeletonGraph.from_edges(2, [(0, 1)]), max_hop=2)


def random_connected_skeleton(rng, n: int, extra_edges: int | None = None) -> SkeletonGraph:
    """Random spanning tree plus a few extra edges; always connected."""
    perm = rng.permutation(n)
    edges = set()
    for i in range(1, n):
        j = perm[rng.integers(0, i)]
        a, b = int(perm[i]), int(j)
        edges.add((min(a, b), max(a, b)))
    if extra_edges is None:
        extra_edges = int(rng.integers(0, n))
    for _ in range(extra_edges):
        a, b = rng.integers(0, n, size=2)
        if a != b:
            edges.add((min(int(a), int(b)), max(int(a), int(b))))
    return SkeletonGraph.from_edges(n, sorted(edges))
