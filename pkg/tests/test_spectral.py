import math

import numpy as np
import pytest

from bicon.errors import EstimationError, InputError, PreconditionError
from bicon.graph import (WeightedGraph, is_connected, is_locally_biconnected, laplacian, perturb,
                         reduced_graph)
from bicon.spectral import (BiconnectivityVerdict, ExactEigenvalueProvider, biconnectivity_bound,
                            check_all_nodes, check_biconnectivity_condition, eigendecompose, epsilon_sweep,
                            kth_eigenpair)
from conftest import complete_graph, cycle_graph, path_graph, random_connected_graphs, unit_graph


def charpoly_eigenvalues(m):
    """Roots of det(tI - m), independent of any symmetric eigensolver."""
    roots = np.roots(np.poly(m))
    return np.sort(roots.real)


class TestEigendecompose:
    def test_k2(self):
        assert np.allclose(eigendecompose(laplacian(complete_graph(2))).values, [0, 2], atol=1e-14)

    def test_p3(self):
        # char poly of the P3 Laplacian: t (t - 1) (t - 3)
        assert np.allclose(eigendecompose(laplacian(path_graph(3))).values, [0, 1, 3], atol=1e-12)

    def test_zero_matrix(self):
        dec = eigendecompose(np.zeros((3, 3)))
        assert np.array_equal(dec.values, [0, 0, 0])
        assert np.allclose(dec.vectors.T @ dec.vectors, np.eye(3), atol=1e-12)

    def test_rejects_asymmetric(self):
        with pytest.raises(InputError):
            eigendecompose(np.array([[0, 1.0], [0, 0]]))

    def test_invariants_random(self):
        for _, g in random_connected_graphs(50, seed=21):
            L = laplacian(g)
            vals, vecs = eigendecompose(L)
            assert np.all(np.diff(vals) >= 0)
            for k in range(g.n):
                assert np.linalg.norm(L @ vecs[:, k] - vals[k] * vecs[:, k]) <= 1e-9 * max(1.0, abs(vals[k]))
            assert np.allclose(vecs.T @ vecs, np.eye(g.n), atol=1e-10)

    def test_matches_charpoly_3x3(self, model):
        rng = np.random.default_rng(8)
        mats = [laplacian(path_graph(3)), laplacian(complete_graph(3)), laplacian(unit_graph(3, [(0, 1)]))]
        for _ in range(40):
            w = np.triu(rng.uniform(0, 1, (3, 3)), 1)
            mats.append(laplacian(WeightedGraph(w + w.T)))
        for m in mats:
            assert np.allclose(eigendecompose(m).values, charpoly_eigenvalues(m), atol=1e-8)

    def test_kth_eigenpair(self):
        lam, v = kth_eigenpair(laplacian(path_graph(3)), 2)
        assert lam == pytest.approx(1.0, abs=1e-12)
        assert abs(v @ np.array([1, 0, -1]) / math.sqrt(2)) == pytest.approx(1.0, abs=1e-12)
        with pytest.raises(InputError):
            kth_eigenpair(np.eye(2), 3)


class TestBound:
    def test_isolated(self):
        assert biconnectivity_bound(unit_graph(3, [(1, 2)]), 0, 0.1) == 0.0

    def test_direct(self):
        g = unit_graph(4, [(0, 1), (1, 2), (2, 3)])
        assert biconnectivity_bound(g, 0, 0.1) == pytest.approx(0.2, abs=1e-15)

    def test_linear_in_epsilon(self, geometric8):
        _, g = geometric8
        for i in range(g.n):
            assert biconnectivity_bound(g, i, 0.03) == pytest.approx(3 * biconnectivity_bound(g, i, 0.01), rel=1e-14)

    def test_uses_unperturbed_weights(self, geometric8):
        _, g = geometric8
        a = g.weights[2]
        assert biconnectivity_bound(g, 2, 0.05) == pytest.approx(0.05 * math.sqrt(8) * np.linalg.norm(a), rel=1e-14)


class TestCheck:
    def test_c4_passes(self):
        g = cycle_graph(4)
        for i in range(4):
            v = check_biconnectivity_condition(g, i, 0.01)
            exact = np.linalg.eigvalsh(perturb(g, i, 0.01).matrix)[2]
            assert v.lambda3 == pytest.approx(exact, abs=1e-12)
            assert v.passed and v.lambda3 > v.bound

    def test_p3_middle_is_an_unsound_pass(self):
        # L^1(eps) = eps * L_P3, so lambda_3 = 3 eps while the bound is eps * sqrt(3) * sqrt(2):
        # the condition certifies a cut vertex.
        v = check_biconnectivity_condition(path_graph(3), 1, 0.01)
        assert v.lambda3 == pytest.approx(0.03, abs=1e-14)
        assert v.bound == pytest.approx(0.01 * math.sqrt(6), abs=1e-15)
        assert v.passed
        assert not is_connected(reduced_graph(path_graph(3), 1))

    def test_p3_leaf_fails(self):
        v = check_biconnectivity_condition(path_graph(3), 0, 0.01)
        exact = np.sort(charpoly_eigenvalues(perturb(path_graph(3), 0, 0.01).matrix))[2]
        assert v.lambda3 == pytest.approx(exact, abs=1e-8)
        assert v.passed == (exact > v.bound)

    def test_strict_at_equality(self):
        class Provider:
            def kth_smallest(self, matrix, k):
                return biconnectivity_bound(cycle_graph(4), 0, 0.01)

        assert not check_biconnectivity_condition(cycle_graph(4), 0, 0.01, Provider()).passed

    @pytest.mark.parametrize("g", [cycle_graph(4), cycle_graph(6), unit_graph(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)])])
    def test_halved_epsilon_stays_sound(self, g):
        for i in range(g.n):
            first = check_biconnectivity_condition(g, i, 0.01)
            assert first.passed
            halved = check_biconnectivity_condition(g, i, 0.005)
            assert halved.passed and is_connected(reduced_graph(g, i))

    def test_disconnected_rejected(self):
        with pytest.raises(PreconditionError):
            check_biconnectivity_condition(unit_graph(4, [(0, 1), (2, 3)]), 0, 0.01)

    def test_provider_failure_propagates(self):
        class Broken:
            def kth_smallest(self, matrix, k):
                raise RuntimeError("no consensus")

        with pytest.raises(EstimationError, match="no consensus"):
            check_biconnectivity_condition(cycle_graph(4), 0, 0.01, Broken())

    def test_verdict_record(self):
        v = check_biconnectivity_condition(cycle_graph(5), 0, 0.01)
        d = v.to_dict()
        assert set(d) == {"focal", "epsilon", "lambda3", "bound", "passed", "locally_biconnected"}
        assert d["passed"] == (d["lambda3"] > d["bound"])
        assert BiconnectivityVerdict(**d) == v

    def test_check_all_nodes_skips_locally_biconnected(self):
        verdicts = check_all_nodes(complete_graph(4), 0.05)
        assert all(v.passed and v.locally_biconnected and math.isnan(v.lambda3) for v in verdicts)

    def test_exact_provider(self):
        m = laplacian(path_graph(3))
        assert ExactEigenvalueProvider().kth_smallest(m, 3) == pytest.approx(3.0, abs=1e-12)


def test_lambda3_approaches_reduced_lambda2():
    """|lambda_3(L^i(eps)) - lambda_2(L^{R_i})| shrinks as eps -> 0."""
    eps = [1e-1, 1e-2, 1e-3, 1e-4]
    checked = 0
    for _, g in random_connected_graphs(40, seed=23, n_range=(4, 10)):
        for i in range(g.n):
            lam2_red = np.linalg.eigvalsh(laplacian(reduced_graph(g, i)))[1]
            gaps = [abs(np.linalg.eigvalsh(perturb(g, i, e).matrix)[2] - lam2_red) for e in eps]
            assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:])), (i, gaps)
            checked += 1
    assert checked > 100


def test_epsilon_sweep():
    out = epsilon_sweep(cycle_graph(5), 0)
    assert [v.epsilon for v in out] == [1e-1, 1e-2, 1e-3, 1e-4]
    assert all(v.passed for v in out)
