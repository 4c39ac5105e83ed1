"""Symmetric eigendecomposition and the perturbed-Laplacian biconnectivity test."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Protocol

import numpy as np

from .errors import EstimationError, InputError, PreconditionError
from .graph import WeightedGraph, is_connected, is_locally_biconnected, laplacian, perturb

DEFAULT_EPSILON = 0.05


class EigenDecomposition(NamedTuple):
    values: np.ndarray  # ascending
    vectors: np.ndarray  # column k pairs with values[k]


def _check_symmetric(m, tol=1e-10) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError("matrix has non-finite entries")
    if not np.allclose(m, m.T, rtol=0, atol=tol):
        raise InputError("matrix is not symmetric")
    return m


def eigendecompose(m) -> EigenDecomposition:
    m = _check_symmetric(m)
    values, vectors = np.linalg.eigh(0.5 * (m + m.T))
    return EigenDecomposition(values, vectors)


def kth_eigenpair(m, k: int) -> tuple[float, np.ndarray]:
    """k-th smallest eigenvalue (1-based) and a unit eigenvector."""
    dec = eigendecompose(m)
    if not 1 <= k <= len(dec.values):
        raise InputError(f"eigen index {k} out of range 1..{len(dec.values)}")
    return float(dec.values[k - 1]), dec.vectors[:, k - 1].copy()


class EigenvalueProvider(Protocol):
    def kth_smallest(self, matrix: np.ndarray, k: int) -> float:
        ...


class ExactEigenvalueProvider:
    """Centralized dense solver standing in for a decentralized eigenvalue estimator."""

    def kth_smallest(self, matrix, k):
        return kth_eigenpair(matrix, k)[0]


@dataclass(frozen=True)
class BiconnectivityVerdict:
    focal: int
    epsilon: float
    lambda3: float
    bound: float
    passed: bool
    locally_biconnected: bool = False

    def to_dict(self):
        return asdict(self)


def biconnectivity_bound(g: WeightedGraph, i: int, epsilon: float) -> float:
    """eps * sqrt(n) * ||a_i||_2 using the unperturbed weights of node i."""
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise InputError(f"epsilon must be positive, got {epsilon}")
    row = g.weights[int(i)]
    return float(epsilon * math.sqrt(g.n) * math.sqrt(float(row @ row)))


def check_biconnectivity_condition(g: WeightedGraph, i: int, epsilon: float = DEFAULT_EPSILON,
                                   provider: EigenvalueProvider | None = None) -> BiconnectivityVerdict:
    """Compare lambda_3 of the perturbed Laplacian against the bound (strict ``>``).

    A pass certifies that removing ``i`` leaves the graph connected; a failure
    certifies nothing.
    """
    if not is_connected(g):
        raise PreconditionError("biconnectivity check needs a connected graph")
    if g.n < 3:
        raise PreconditionError(f"lambda_3 needs at least 3 nodes, got {g.n}")
    provider = provider or ExactEigenvalueProvider()
    pl = perturb(g, i, epsilon)
    try:
        lam3 = float(provider.kth_smallest(pl.matrix, 3))
    except EstimationError:
        raise
    except Exception as exc:
        raise EstimationError(f"eigenvalue provider failed for node {i}: {exc}") from exc
    bound = biconnectivity_bound(g, i, epsilon)
    return BiconnectivityVerdict(
        focal=int(i), epsilon=float(epsilon), lambda3=lam3, bound=bound,
        passed=bool(lam3 > bound), locally_biconnected=is_locally_biconnected(g, i),
    )


def check_all_nodes(g: WeightedGraph, epsilon: float = DEFAULT_EPSILON,
                    provider: EigenvalueProvider | None = None) -> list[BiconnectivityVerdict]:
    """Run the per-node procedure: locally biconnected nodes are accepted without the test."""
    out = []
    for i in range(g.n):
        if is_locally_biconnected(g, i):
            out.append(BiconnectivityVerdict(i, float(epsilon), math.nan, math.nan, True, True))
        else:
            out.append(check_biconnectivity_condition(g, i, epsilon, provider))
    return out


def epsilon_sweep(g: WeightedGraph, i: int, epsilons=(1e-1, 1e-2, 1e-3, 1e-4),
                  provider: EigenvalueProvider | None = None) -> list[BiconnectivityVerdict]:
    return [check_biconnectivity_condition(g, i, eps, provider) for eps in epsilons]


def algebraic_connectivity(g: WeightedGraph) -> float:
    if g.n < 2:
        return 0.0
    return float(eigendecompose(laplacian(g)).values[1])
