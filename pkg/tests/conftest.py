import numpy as np
import pytest

from bicon.graph import CommModel, WeightedGraph, build_adjacency, is_connected, random_geometric_positions


def unit_graph(n, edges):
    return WeightedGraph.from_edges(n, [(i, j, 1.0) for i, j in edges])


def path_graph(n):
    return unit_graph(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n):
    return unit_graph(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n):
    return unit_graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def bowtie():
    # two triangles sharing node 2
    return unit_graph(5, [(0, 1), (0, 2), (1, 2), (2, 3), (2, 4), (3, 4)])


def star(leaves):
    return unit_graph(leaves + 1, [(0, j) for j in range(1, leaves + 1)])


def random_connected_graphs(count, seed, n_range=(4, 12), model=None):
    """Connected R-disk graphs in the unit square with positions."""
    model = model or CommModel()
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        p = rng.uniform(0.0, 1.0, size=(n, 2))
        g = build_adjacency(p, model)
        if is_connected(g):
            out.append((p, g))
    return out


@pytest.fixture
def model():
    return CommModel(0.5, 0.125)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def geometric8(model):
    rng = np.random.default_rng(7)
    p = random_geometric_positions(8, rng, model)
    return p, build_adjacency(p, model)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
