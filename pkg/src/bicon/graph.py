"""Weighted communication graphs: R-disk construction, Laplacian algebra,
perturbation/reduction operators and exact combinatorial connectivity checks.

Graphs are stored as dense symmetric weight matrices; node indices are 0-based.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateGraphError, InputError, PreconditionError

# weights below this are treated as absent by the combinatorial routines
EDGE_TOL = 1e-15
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class CommModel:
    """R-disk communication model with Gaussian link weights."""

    radius: float = 0.5
    sigma: float = 0.125

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise InputError(f"radius must be positive, got {self.radius}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise InputError(f"sigma must be positive, got {self.sigma}")

    def weight(self, dist):
        dist = np.asarray(dist, dtype=float)
        return np.where(dist <= self.radius, np.exp(-dist**2 / (2.0 * self.sigma)), 0.0)


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected weighted graph backed by a symmetric, zero-diagonal matrix."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise InputError(f"weights must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise InputError("weights must be finite")
        if np.any(w < 0):
            raise InputError("weights must be nonnegative")
        if np.any(np.diag(w) != 0):
            raise InputError("self loops are not allowed (nonzero diagonal)")
        if not np.allclose(w, w.T, rtol=0, atol=SYMMETRY_TOL):
            raise InputError("weights must be symmetric")
        w = 0.5 * (w + w.T)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def __eq__(self, other):
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        return self.weights.shape == other.weights.shape and bool(np.array_equal(self.weights, other.weights))

    def __hash__(self):
        return hash(self.weights.tobytes())

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.weights[i] > EDGE_TOL)

    def edges(self) -> list[tuple[int, int, float]]:
        iu, ju = np.nonzero(np.triu(self.weights > EDGE_TOL, k=1))
        return [(int(i), int(j), float(self.weights[i, j])) for i, j in zip(iu, ju)]

    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset((i, j) for i, j, _ in self.edges())

    def subgraph(self, nodes) -> "WeightedGraph":
        idx = np.asarray(sorted(nodes), dtype=int)
        return WeightedGraph(self.weights[np.ix_(idx, idx)])

    @classmethod
    def from_edges(cls, n: int, edges) -> "WeightedGraph":
        w = np.zeros((n, n))
        for e in edges:
            i, j = int(e[0]), int(e[1])
            a = float(e[2]) if len(e) > 2 else 1.0
            if not (0 <= i < n and 0 <= j < n):
                raise InputError(f"edge ({i}, {j}) out of range for n={n}")
            if i == j:
                raise InputError(f"self loop on node {i}")
            w[i, j] = w[j, i] = a
        return cls(w)


@dataclass(frozen=True, eq=False)
class PerturbedLaplacian:
    focal: int
    epsilon: float
    matrix: np.ndarray


def _check_positions(positions) -> np.ndarray:
    p = np.asarray(positions, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2:
        raise InputError(f"positions must have shape (n, 2), got {p.shape}")
    if not np.all(np.isfinite(p)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(p), axis=1))[0])
        raise InputError(f"position of agent {bad} is not finite")
    return p


def pairwise_distances(positions) -> np.ndarray:
    p = _check_positions(positions)
    diff = p[:, None, :] - p[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def build_adjacency(positions, model: CommModel) -> WeightedGraph:
    """a_ij = exp(-|p_i - p_j|^2 / (2 sigma)) inside the radius, 0 outside."""
    d = pairwise_distances(positions)
    w = model.weight(d)
    np.fill_diagonal(w, 0.0)
    return WeightedGraph(w)


def _check_node(g: WeightedGraph, i: int) -> int:
    if not (0 <= int(i) < g.n):
        raise InputError(f"node {i} out of range for n={g.n}")
    return int(i)


def laplacian(g: WeightedGraph) -> np.ndarray:
    w = g.weights
    return np.diag(w.sum(axis=1)) - w


def perturbed_adjacency(g: WeightedGraph, i: int, epsilon: float) -> np.ndarray:
    i = _check_node(g, i)
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise InputError(f"epsilon must be positive, got {epsilon}")
    w = np.array(g.weights)
    w[i, :] *= epsilon
    w[:, i] *= epsilon
    return w


def perturb(g: WeightedGraph, i: int, epsilon: float) -> PerturbedLaplacian:
    """Laplacian after scaling every weight incident to node ``i`` by ``epsilon``."""
    w = perturbed_adjacency(g, i, epsilon)
    return PerturbedLaplacian(focal=int(i), epsilon=float(epsilon), matrix=np.diag(w.sum(axis=1)) - w)


def reduced_graph(g: WeightedGraph, i: int) -> WeightedGraph:
    if g.n < 2:
        raise DegenerateGraphError("removing the only node leaves an empty graph")
    i = _check_node(g, i)
    keep = [k for k in range(g.n) if k != i]
    return g.subgraph(keep)


def connected_components(g: WeightedGraph) -> list[list[int]]:
    seen = np.zeros(g.n, dtype=bool)
    comps = []
    for s in range(g.n):
        if seen[s]:
            continue
        seen[s] = True
        stack, comp = [s], []
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in g.neighbors(u):
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        comps.append(sorted(comp))
    return comps


def is_connected(g: WeightedGraph) -> bool:
    if g.n == 0:
        raise InputError("empty graph")
    return len(connected_components(g)) == 1


def articulation_points(g: WeightedGraph) -> set[int]:
    """Cut vertices via iterative DFS lowpoints (Hopcroft-Tarjan)."""
    if not is_connected(g):
        raise PreconditionError("articulation points are defined for connected graphs only")
    n = g.n
    adj = [list(map(int, g.neighbors(u))) for u in range(n)]
    disc = [-1] * n
    low = [0] * n
    parent = [-1] * n
    cut = set()
    timer = 0
    root = 0
    root_children = 0
    disc[root] = low[root] = timer
    timer += 1
    stack = [(root, iter(adj[root]))]
    while stack:
        u, it = stack[-1]
        advanced = False
        for v in it:
            if disc[v] == -1:
                parent[v] = u
                disc[v] = low[v] = timer
                timer += 1
                if u == root:
                    root_children += 1
                stack.append((v, iter(adj[v])))
                advanced = True
                break
            if v != parent[u]:
                low[u] = min(low[u], disc[v])
        if advanced:
            continue
        stack.pop()
        p = parent[u]
        if p != -1:
            low[p] = min(low[p], low[u])
            if p != root and low[u] >= disc[p]:
                cut.add(p)
    if root_children > 1:
        cut.add(root)
    return cut


def is_biconnected(g: WeightedGraph) -> bool:
    if g.n < 3:
        raise DegenerateGraphError(f"biconnectivity needs at least 3 nodes, got {g.n}")
    if not is_connected(g):
        return False
    return not articulation_points(g)


def biconnectivity_status(g: WeightedGraph) -> str:
    """One of 'biconnected', 'not-biconnected', 'disconnected', 'degenerate'."""
    if g.n < 3:
        return "degenerate"
    if not is_connected(g):
        return "disconnected"
    return "biconnected" if not articulation_points(g) else "not-biconnected"


def local_subgraph(g: WeightedGraph, i: int) -> WeightedGraph:
    i = _check_node(g, i)
    return g.subgraph([i, *map(int, g.neighbors(i))])


def is_locally_biconnected(g: WeightedGraph, i: int) -> bool:
    """True iff the subgraph induced by ``i`` and its neighbors is a block.

    Local subgraphs with fewer than 3 nodes (isolated or degree-1 nodes) are
    never counted as blocks.
    """
    h = local_subgraph(g, i)
    if h.n < 3:
        return False
    return is_biconnected(h)


def write_edge_list(g: WeightedGraph, path) -> None:
    lines = [f"# nodes: {g.n}"]
    lines += [f"{i} {j} {a!r}" for i, j, a in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path) -> WeightedGraph:
    """Parse ``i j weight`` lines; an optional ``# nodes: N`` header fixes n."""
    n = None
    edges = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.lower().startswith("nodes:"):
                n = int(body.split(":", 1)[1])
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise InputError(f"{path}:{lineno}: expected 'i j [weight]', got {raw!r}")
        try:
            edges.append((int(parts[0]), int(parts[1]), float(parts[2]) if len(parts) == 3 else 1.0))
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
    if n is None:
        n = 1 + max((max(i, j) for i, j, _ in edges), default=-1)
    if n <= 0:
        raise InputError(f"{path}: no nodes")
    return WeightedGraph.from_edges(n, edges)


def write_positions(positions, path) -> None:
    p = _check_positions(positions)
    Path(path).write_text("".join(f"{float(x)!r} {float(y)!r}\n" for x, y in p))


def read_positions(path) -> np.ndarray:
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise InputError(f"{path}:{lineno}: expected 'x y', got {raw!r}")
        rows.append((float(parts[0]), float(parts[1])))
    if not rows:
        raise InputError(f"{path}: no positions")
    return _check_positions(rows)


def random_geometric_positions(n: int, rng, model: CommModel | None = None, *, size: float = 1.0,
                               connected: bool = True, max_tries: int = 10_000) -> np.ndarray:
    """Uniform positions in a ``size`` square, resampled until connected if asked."""
    model = model or CommModel()
    for _ in range(max_tries):
        p = rng.uniform(0.0, size, size=(n, 2))
        if not connected or is_connected(build_adjacency(p, model)):
            return p
    raise PreconditionError(f"no connected layout with n={n} after {max_tries} draws")
