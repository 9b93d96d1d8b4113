import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_connected_graph
from vecot.entropy import entropy, flow_rhs, integrate
from vecot.exceptions import NonpositiveEntry, StepUnderflow
from vecot.graph import build_graph, heat_step, path_graph


class TestEntropy:
    def test_uniform(self):
        assert entropy(np.full(4, 0.25)) == pytest.approx(np.log(4), abs=1e-12)

    def test_near_degenerate(self):
        assert abs(entropy([1 - 1e-12, 1e-12])) <= 1e-10

    def test_two_point(self):
        assert entropy([0.9, 0.1]) == pytest.approx(0.325083, abs=1e-6)

    @pytest.mark.parametrize("rho", [[1.0, 0.0], [1.2, -0.2]])
    def test_nonpositive(self, rho):
        with pytest.raises(NonpositiveEntry):
            entropy(rho)

    @given(st.integers(2, 8), st.integers(0, 2**32 - 1))
    def test_bounds(self, n, seed):
        rho = np.random.default_rng(seed).dirichlet(np.ones(n)) + 1e-12
        rho /= rho.sum()
        assert -1e-12 <= entropy(rho) <= np.log(n) + 1e-12


class TestRhs:
    def test_hand_value(self, k2):
        np.testing.assert_allclose(flow_rhs(k2, [0.9, 0.1]), [-0.19775, 0.19775], atol=1e-5)

    def test_uniform_is_stationary(self, rng):
        g = random_connected_graph(rng, 6)
        assert np.abs(flow_rhs(g, np.full(6, 1 / 6))).max() <= 1e-12

    def test_sum_zero_and_nonzero_off_uniform(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 8))
            g = random_connected_graph(rng, n)
            rho = rng.dirichlet(np.ones(n))
            rate = flow_rhs(g, rho)
            assert abs(rate.sum()) <= 1e-12
            assert np.linalg.norm(rate) > 0

    def test_rejects_zero(self, k2):
        with pytest.raises(NonpositiveEntry):
            flow_rhs(k2, [1.0, 0.0])


class TestIntegrate:
    def test_k2_converges(self, k2):
        states = integrate(k2, [0.9, 0.1], 1e-3, 10_000)
        assert len(states) == 10_001
        np.testing.assert_allclose(states[-1].rho, [0.5, 0.5], atol=1e-3)

    def test_path4_converges(self):
        states = integrate(path_graph(4), [0.7, 0.1, 0.1, 0.1], 1e-2, 5000)
        np.testing.assert_allclose(states[-1].rho, 0.25, atol=1e-3)

    def test_uniform_start_constant(self, rng):
        g = random_connected_graph(rng, 5)
        states = integrate(g, np.full(5, 0.2), 0.1, 20)
        for s in states:
            np.testing.assert_allclose(s.rho, 0.2, atol=1e-15)

    def test_monotone_mass_positive(self, rng):
        g = random_connected_graph(rng, 6)
        states = integrate(g, rng.dirichlet(np.ones(6)), 0.05, 400)
        S = np.array([s.entropy for s in states])
        assert np.diff(S).min() >= -1e-12
        for s in states:
            assert s.rho.min() > 0 and abs(s.rho.sum() - 1) <= 1e-12

    def test_large_step_is_halved(self):
        g = build_graph([(0, 1, 50.0)])
        states = integrate(g, [0.99, 0.01], 1.0, 5)
        steps = np.diff([s.t for s in states])
        assert np.all(steps < 1.0)
        assert np.diff([s.entropy for s in states]).min() >= -1e-12

    def test_underflow(self):
        g = build_graph([(0, 1, 1e15)])
        with pytest.raises(StepUnderflow):
            integrate(g, [0.999, 0.001], 1.0, 1)

    def test_differs_from_heat(self, k2):
        h, steps = 1e-3, 500
        states = integrate(k2, [0.9, 0.1], h, steps)
        rho = np.array([0.9, 0.1])
        diff = 0.0
        for s in states[1:]:
            rho = heat_step(k2, rho, h)
            diff = max(diff, np.abs(s.rho - rho).max())
        assert diff > 1e-3
