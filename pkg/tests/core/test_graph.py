"""
图构造与拉普拉斯测试
"""
import math

import numpy as np
import pytest

from src.core.graph import (
    Graph,
    LambdaMaxMode,
    graph_from_edges,
    grid_graph,
    hop_distances,
    knn_graph,
    normalized_laplacian,
    scale_laplacian,
)
from src.core.sparse_linalg import csr_from_coo, identity, spectral_radius
from src.shared.exceptions import GraphError


def path_graph(n, weight=1.0, **kwargs):
    return graph_from_edges(n, [(i, i + 1, weight) for i in range(n - 1)], **kwargs)


def random_graph(rng, n=None, metric="euclidean"):
    n = n or int(rng.integers(2, 33))
    points = rng.standard_normal((n, 3))
    k = int(rng.integers(1, n))
    return knn_graph(points, k, metric=metric)


class TestGraphValidation:

    def test_rejects_asymmetric_adjacency(self):
        with pytest.raises(GraphError):
            Graph(csr_from_coo(2, 2, [(0, 1, 1.0)]))

    def test_rejects_negative_weights(self):
        with pytest.raises(GraphError):
            Graph(csr_from_coo(2, 2, [(0, 1, -1.0), (1, 0, -1.0)]))

    def test_rejects_self_loops(self):
        with pytest.raises(GraphError):
            Graph(csr_from_coo(2, 2, [(0, 0, 1.0)]))

    def test_edges_listing(self):
        g = path_graph(3)
        assert g.edges() == [(0, 1, 1.0), (1, 2, 1.0)]
        assert g.edge_count == 2

    def test_lazy_fields_cached(self):
        g = path_graph(4)
        assert g.laplacian is g.laplacian
        assert g.scaled_laplacian is g.scaled_laplacian

    def test_bound_mode_uses_two(self):
        g = path_graph(3, lambda_max_mode=LambdaMaxMode.BOUND)
        assert g.lambda_max == 2.0


class TestKnnGraph:

    def test_coincident_points(self):
        g = knn_graph(np.zeros((2, 2)), 1)
        assert g.edges() == [(0, 1, 1.0)]

    def test_collinear_points(self):
        g = knn_graph(np.array([[0.0], [1.0], [3.0]]), 1, kernel_width=1.0)
        assert g.edges() == [(0, 1, math.exp(-1.0)), (1, 2, math.exp(-4.0))]

    def test_underflowing_weight_rejected(self):
        points = np.array([[0.0], [1.0], [40.0]])
        with pytest.raises(GraphError, match="kernel_width"):
            knn_graph(points, 1, kernel_width=1.0)

    def test_full_connectivity(self):
        rng = np.random.default_rng(2)
        points = rng.standard_normal((6, 2))
        g = knn_graph(points, 5)
        dense = g.adjacency.to_dense()
        assert np.all(np.diag(dense) == 0)
        assert np.all(dense[~np.eye(6, dtype=bool)] > 0)

    def test_auto_width_is_mean_retained_distance(self):
        points = np.array([[0.0], [1.0], [3.0]])
        g = knn_graph(points, 1)
        sigma = (1.0 + 1.0 + 2.0) / 3.0
        assert dict(((i, j), w) for i, j, w in g.edges())[(1, 2)] == pytest.approx(math.exp(-4.0 / sigma ** 2))

    def test_symmetric_exactly(self):
        rng = np.random.default_rng(4)
        for metric in ("euclidean", "cosine"):
            g = random_graph(rng, 20, metric)
            assert g.adjacency.is_symmetric(0.0)

    def test_edge_bound(self):
        rng = np.random.default_rng(5)
        points = rng.standard_normal((15, 3))
        g = knn_graph(points, 4)
        assert g.edge_count <= 15 * 4
        assert np.all(g.unweighted_degrees() >= 4)

    def test_cosine_zero_norm_point(self):
        with pytest.raises(GraphError):
            knn_graph(np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]), 1, metric="cosine")

    @pytest.mark.parametrize("k", [0, 3, 5])
    def test_k_out_of_range(self, k):
        with pytest.raises(GraphError):
            knn_graph(np.eye(3), k)

    def test_single_point_rejected(self):
        with pytest.raises(GraphError):
            knn_graph(np.zeros((1, 2)), 1)

    def test_permutation_consistency(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            n = int(rng.integers(3, 33))
            points = rng.standard_normal((n, 3))
            k = int(rng.integers(1, n))
            perm = rng.permutation(n)
            A = knn_graph(points, k).adjacency.to_dense()
            A_perm = knn_graph(points[perm], k).adjacency.to_dense()
            np.testing.assert_array_equal(A_perm, A[np.ix_(perm, perm)])


class TestGridGraph:

    def test_two_node_path(self):
        g = grid_graph(1, 2, 4)
        assert g.n == 2 and g.edge_count == 1

    @pytest.mark.parametrize("connectivity", [4, 8])
    def test_center_degree(self, connectivity):
        g = grid_graph(3, 3, connectivity)
        assert g.unweighted_degrees()[4] == connectivity

    def test_single_vertex(self):
        g = grid_graph(1, 1, 8)
        assert g.n == 1 and g.edge_count == 0
        np.testing.assert_array_equal(g.laplacian.to_dense(), [[1.0]])

    def test_interior_matches_lattice_knn(self):
        g = grid_graph(5, 5, 4, kernel_width=1.0)
        coords = np.array([(r, c) for r in range(5) for c in range(5)], dtype=float)
        knn = knn_graph(coords, 4, kernel_width=1.0)
        center = 12
        np.testing.assert_array_equal(g.adjacency.to_dense()[center], knn.adjacency.to_dense()[center])

    def test_bad_connectivity(self):
        with pytest.raises(GraphError):
            grid_graph(3, 3, 6)


class TestLaplacian:

    def test_two_node_path(self):
        np.testing.assert_array_equal(normalized_laplacian(path_graph(2)).to_dense(), [[1, -1], [-1, 1]])

    def test_isolated_vertex_gets_identity_row(self):
        g = graph_from_edges(3, [(0, 1, 2.0)])
        L = normalized_laplacian(g).to_dense()
        np.testing.assert_array_equal(L[2], [0.0, 0.0, 1.0])
        np.testing.assert_array_equal(L[:, 2], [0.0, 0.0, 1.0])

    def test_complete_graph_k3(self):
        g = graph_from_edges(3, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)])
        expected = np.array([[1, -0.5, -0.5], [-0.5, 1, -0.5], [-0.5, -0.5, 1]])
        np.testing.assert_array_equal(normalized_laplacian(g).to_dense(), expected)

    def test_matches_dense_definition(self):
        rng = np.random.default_rng(7)
        g = random_graph(rng, 12)
        A = g.adjacency.to_dense()
        d = A.sum(axis=1)
        expected = np.eye(12) - A / np.sqrt(np.outer(d, d))
        np.testing.assert_allclose(g.laplacian.to_dense(), expected, atol=1e-14)

    def test_spectral_contract_on_random_graphs(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            g = random_graph(rng)
            L = g.laplacian
            assert L.is_symmetric(0.0)
            for _ in range(3):
                x = rng.standard_normal(g.n)
                assert x @ (L.to_dense() @ x) >= -1e-12
            lmax = g.lambda_max
            assert 0.0 <= lmax <= 2.0 + 1e-6
            expected = np.linalg.eigvalsh(L.to_dense())[-1]
            assert abs(lmax - expected) <= 1e-6 * max(1.0, expected)

    def test_scaled_spectral_radius_at_most_one(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            g = random_graph(rng, int(rng.integers(2, 17)))
            scaled = g.scaled_laplacian
            assert np.max(np.abs(np.linalg.eigvalsh(scaled.to_dense()))) <= 1.0 + 1e-6
            assert spectral_radius(scaled, max_iter=200000) <= 1.0 + 1e-5


class TestScaleLaplacian:

    def test_identity_fixed_point(self):
        assert scale_laplacian(identity(3), 1.0) == identity(3)

    def test_two_node_path(self):
        L = normalized_laplacian(path_graph(2))
        np.testing.assert_array_equal(scale_laplacian(L, 2.0).to_dense(), [[0, -1], [-1, 0]])

    def test_bound_gives_l_minus_identity(self):
        rng = np.random.default_rng(10)
        L = random_graph(rng, 10).laplacian
        np.testing.assert_array_equal(scale_laplacian(L, 2.0).to_dense(), L.to_dense() - np.eye(10))

    @pytest.mark.parametrize("lmax", [0.0, -1.0, float("nan")])
    def test_non_positive_lambda(self, lmax):
        with pytest.raises(GraphError):
            scale_laplacian(identity(2), lmax)


class TestHopDistances:

    def test_isolated_source(self):
        g = graph_from_edges(3, [(1, 2, 1.0)])
        np.testing.assert_array_equal(hop_distances(g, 0), [0.0, np.inf, np.inf])

    def test_path_from_end(self):
        np.testing.assert_array_equal(hop_distances(path_graph(3), 0), [0, 1, 2])

    def test_grid_corner_to_corner(self):
        assert hop_distances(grid_graph(3, 3, 4), 0)[8] == 4

    def test_source_out_of_range(self):
        with pytest.raises(GraphError):
            hop_distances(path_graph(3), 3)
