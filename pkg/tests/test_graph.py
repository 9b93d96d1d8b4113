import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_connected_graph
from vecot.exceptions import (
    ChannelCountMismatch,
    DimensionMismatch,
    DisconnectedGraph,
    DuplicateEdge,
    EmptyShape,
    NonpositiveWeight,
    SelfLoop,
    StepTooLarge,
)
from vecot.graph import (
    Graph,
    build_graph,
    complete_graph,
    div,
    grad,
    grid_graph,
    heat_step,
    laplacian,
    layered_product,
    path_graph,
)


class TestBuildGraph:
    def test_single_edge_incidence(self, k2):
        assert (k2.n, k2.m) == (2, 1)
        np.testing.assert_array_equal(k2.D.toarray(), [[1.0], [-1.0]])

    def test_path_incidence_shape(self):
        g = build_graph([(0, 1, 1.0), (1, 2, 1.0)])
        assert g.D.shape == (3, 2)

    def test_canonical_orientation_and_order(self):
        g = build_graph([(2, 1, 1.0), (1, 0, 3.0)])
        assert g.edges == [(0, 1), (1, 2)]
        np.testing.assert_array_equal(g.weights, [3.0, 1.0])

    def test_d1_d2_split(self):
        g = build_graph([(0, 1, 1.0), (1, 2, 1.0), (0, 2, 2.0)])
        D, D1, D2 = g.D.toarray(), g.D1.toarray(), g.D2.toarray()
        np.testing.assert_array_equal(D1, np.maximum(D, 0))
        np.testing.assert_array_equal(D2, D1 - D)
        np.testing.assert_array_equal(np.ones(3) @ D, np.zeros(3))

    @pytest.mark.parametrize(
        "edges, exc",
        [
            ([(0, 1, 1.0), (2, 3, 1.0)], DisconnectedGraph),
            ([(0, 0, 1.0), (0, 1, 1.0)], SelfLoop),
            ([(0, 1, 0.0)], NonpositiveWeight),
            ([(0, 1, -1.0)], NonpositiveWeight),
            ([(0, 1, 1.0), (1, 0, 2.0)], DuplicateEdge),
        ],
    )
    def test_invalid(self, edges, exc):
        with pytest.raises(exc):
            build_graph(edges)

    def test_errors_are_value_errors(self):
        with pytest.raises(ValueError):
            build_graph([(0, 1, 1.0), (2, 3, 1.0)])


class TestOperators:
    def test_grad_examples(self):
        np.testing.assert_allclose(grad(build_graph([(0, 1, 4.0)]), [3.0, 1.0]), [4.0])
        np.testing.assert_allclose(grad(path_graph(3), [0.0, 1.0, 3.0]), [-1.0, -2.0])

    def test_grad_of_constant_vanishes(self, rng):
        g = random_connected_graph(rng, 6)
        np.testing.assert_array_equal(grad(g, np.full(6, 2.5)), np.zeros(g.m))

    def test_div_example(self, k2):
        np.testing.assert_allclose(div(k2, [1.0]), [1.0, -1.0])

    def test_dimension_checks(self, k2):
        with pytest.raises(DimensionMismatch):
            grad(k2, [1.0, 2.0, 3.0])
        with pytest.raises(DimensionMismatch):
            div(k2, [1.0, 2.0])

    @given(st.integers(2, 8), st.integers(0, 2**32 - 1))
    def test_adjoint_and_conservation(self, n, seed):
        r = np.random.default_rng(seed)
        g = random_connected_graph(r, n)
        x, y = r.normal(size=n), r.normal(size=g.m)
        assert abs(grad(g, x) @ y - x @ div(g, y)) <= 1e-12
        assert abs(div(g, y).sum()) <= 1e-12

    def test_laplacian_consistency(self, rng):
        g = random_connected_graph(rng, 7)
        x = rng.normal(size=7)
        L = (g.D @ g.W @ g.D.T).toarray()
        np.testing.assert_allclose(div(g, grad(g, x)), L @ x, atol=1e-12)
        np.testing.assert_allclose(laplacian(g).toarray(), L, atol=1e-14)

    def test_unit_slope_on_grid(self):
        h = 0.125
        g = grid_graph([9], h)
        x = np.arange(9) * h
        np.testing.assert_allclose(grad(g, x), -np.ones(8), atol=1e-12)


class TestHeat:
    def test_one_step(self, k2):
        np.testing.assert_allclose(heat_step(k2, [1.0, 0.0], 0.1), [0.9, 0.1], atol=1e-15)

    def test_uniform_is_stationary(self, rng):
        g = random_connected_graph(rng, 5)
        np.testing.assert_allclose(heat_step(g, np.full(5, 0.2), 0.01), np.full(5, 0.2), atol=1e-15)

    def test_matches_closed_form(self, k2):
        rho, h = np.array([1.0, 0.0]), 2.0**-10
        for _ in range(2**10):
            rho = heat_step(k2, rho, h)
        exact = 0.5 * np.array([1 + np.exp(-2.0), 1 - np.exp(-2.0)])
        np.testing.assert_allclose(rho, exact, atol=1e-3)

    def test_mass_and_positivity(self, rng):
        g = random_connected_graph(rng, 6)
        h = 0.5 / np.max(np.abs(g.D.toarray()) @ g.weights)
        rho = heat_step(g, rng.dirichlet(np.ones(6)), h)
        assert abs(rho.sum() - 1) < 1e-14 and rho.min() >= 0

    def test_step_too_large(self, k2):
        with pytest.raises(StepTooLarge):
            heat_step(k2, [1.0, 0.0], 0.6)


class TestGrid:
    def test_counts(self):
        g = grid_graph([3], 0.5)
        assert (g.n, g.m) == (3, 2)
        np.testing.assert_allclose(g.weights, 4.0)
        assert (grid_graph([2, 2], 1.0).n, grid_graph([2, 2], 1.0).m) == (4, 4)
        g = grid_graph([4, 3], 1.0)
        assert (g.n, g.m) == (12, 17)

    @pytest.mark.parametrize("shape", [[], [0], [3, 0]])
    def test_empty(self, shape):
        with pytest.raises(EmptyShape):
            grid_graph(shape, 1.0)


class TestLayered:
    def test_k2_by_k2(self, k2):
        L = layered_product(k2, k2, 2)
        assert (L.n, L.m_spatial, L.m_mutation) == (4, 2, 2)

    def test_single_layer(self):
        L = layered_product(path_graph(3), complete_graph(1), 1)
        assert L.m_mutation == 0 and L.m_spatial == 2

    def test_path3_k3(self):
        L = layered_product(path_graph(3), complete_graph(3), 3)
        assert (L.n, L.m_spatial, L.m_mutation) == (9, 6, 9)

    def test_default_mutation_is_complete(self):
        L = layered_product(path_graph(2), M=3)
        assert L.mutation.m == 3

    def test_index_layout(self):
        L = layered_product(path_graph(4), M=2)
        assert L.index(1, 2) == 6

    def test_channel_mismatch(self, k2):
        with pytest.raises(ChannelCountMismatch):
            layered_product(k2, complete_graph(3), 2)

    def test_block_adjoints(self, rng):
        L = layered_product(random_connected_graph(rng, 4), complete_graph(3), 3)
        x = rng.normal(size=L.n)
        for G in (L.spatial_grad_matrix, L.mutation_grad_matrix):
            y = rng.normal(size=G.shape[0])
            assert abs((G @ x) @ y - x @ (G.T @ y)) < 1e-12

    def test_composite_graph_matches_blocks(self, rng):
        L = layered_product(path_graph(3), complete_graph(2), 2)
        g = L.as_graph()
        assert isinstance(g, Graph) and g.n == 6 and g.m == 4 + 3


def test_flipped_orientation_same_laplacian(rng):
    g = random_connected_graph(rng, 5)
    f = g.flipped([0, 2])
    np.testing.assert_allclose(laplacian(f).toarray(), laplacian(g).toarray())
