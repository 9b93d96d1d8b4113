import numpy as np
import pytest

from conftest import interior_mass, random_connected_graph
from vecot.exceptions import BadGamma, BadTimeGrid, DimensionMismatch, InfeasibleBoundary, MarginalMismatch
from vecot.fixtures import GAMMA_SWEEP, two_channel_bumps
from vecot.graph import build_graph, complete_graph, layered_product, path_graph
from vecot.solver import SolverConfig
from vecot.transport import (
    MassDistribution,
    Trajectory,
    VectorMass,
    assemble,
    continuity_residual,
    distance,
    geodesic_deviation,
    mass_drift,
    mix_uniform,
    mutation_energy,
    mutation_flux_mass,
    solve,
    w2a_max_symmetrized,
)

W_HAT_K2 = 2 * np.arcsin(0.8)
W2A_FWD = 2 * (np.sqrt(0.9) - np.sqrt(0.5))
W2A_REV = 2 * (np.sqrt(0.5) - np.sqrt(0.1))


class TestAssemble:
    def test_symmetric_counts(self, k2):
        p = assemble("symmetric-graph", k2, [0.9, 0.1], [0.1, 0.9], n_t=4)
        traj = p.unpack(p.initial_point())
        assert traj.densities.shape == (5, 2)
        assert traj.fluxes["u"].shape == (4, 1) and set(traj.fluxes) == {"u"}

    def test_asymmetric_doubles_flux(self, k2):
        p = assemble("asymmetric-graph", k2, [0.9, 0.1], [0.1, 0.9], n_t=4)
        sym = assemble("symmetric-graph", k2, [0.9, 0.1], [0.1, 0.9], n_t=4)
        assert p.n_unknowns - p.n_rho == 2 * (sym.n_unknowns - sym.n_rho)
        assert set(p.unpack(p.initial_point()).fluxes) == {"u", "ubar"}

    def test_layered_counts(self, rng):
        L = layered_product(path_graph(3), complete_graph(2), 2)
        mu, nu = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6))
        p = assemble("symmetric-layered", L, mu, nu, gamma=2.0, n_t=8)
        traj = p.unpack(p.initial_point())
        assert traj.densities.shape == (9, 6)
        assert np.sum(p.block == 0) == 4 and np.sum(p.block == 1) == 3

    def test_boundary_rows(self, k2):
        p = assemble("symmetric", k2, [0.9, 0.1], [0.1, 0.9], n_t=4)
        traj = p.unpack(p.initial_point())
        np.testing.assert_allclose(traj.densities[0], [0.9, 0.1])
        np.testing.assert_allclose(traj.densities[-1], [0.1, 0.9])

    def test_accepts_vector_arrays(self):
        L = layered_product(path_graph(2), M=2)
        p = assemble("symmetric", L, [[0.5, 0.0], [0.0, 0.5]], [[0.0, 0.5], [0.5, 0.0]], 1.0, 4)
        assert p.variant == "symmetric-layered" and p.n_nodes == 4

    @pytest.mark.parametrize("gamma", [0.0, -1.0, np.inf, np.nan])
    def test_bad_gamma(self, gamma):
        L = layered_product(path_graph(2), M=2)
        mu = np.full(4, 0.25)
        with pytest.raises(BadGamma):
            assemble("symmetric-layered", L, mu, mu, gamma, 4)

    @pytest.mark.parametrize("n_t", [0, 1, 2.5])
    def test_bad_time_grid(self, k2, n_t):
        with pytest.raises(BadTimeGrid):
            assemble("symmetric", k2, [0.5, 0.5], [0.5, 0.5], n_t=n_t)

    def test_mass_mismatch(self, k2):
        with pytest.raises(InfeasibleBoundary):
            assemble("symmetric", k2, [0.5, 0.5], [0.5, 0.6], n_t=4)

    def test_marginal_validation(self, k2):
        with pytest.raises(MarginalMismatch):
            assemble("symmetric", k2, [1.2, -0.2], [0.5, 0.5], n_t=4)
        with pytest.raises(MarginalMismatch):
            assemble("symmetric", k2, [0.5, 0.5, 0.0], [0.5, 0.5], n_t=4)

    def test_mass_types(self):
        assert MassDistribution([0.25, 0.75]).n == 2
        v = VectorMass([[0.25, 0.25], [0.5, 0.0]])
        assert (v.M, v.n) == (2, 2)
        np.testing.assert_allclose(v.channel_mass(), [0.5, 0.5])
        with pytest.raises(MarginalMismatch):
            MassDistribution([0.5, 0.4])


class TestClosedForms:
    def test_symmetric_two_node(self, k2):
        value = distance("symmetric", k2, [0.9, 0.1], [0.1, 0.9], n_t=64)
        assert abs(value - W_HAT_K2) / W_HAT_K2 <= 0.02

    def test_asymmetric_two_node_both_directions(self, k2):
        fwd = distance("asymmetric", k2, [0.9, 0.1], [0.5, 0.5], n_t=64)
        rev = distance("asymmetric", k2, [0.5, 0.5], [0.9, 0.1], n_t=64)
        assert abs(fwd - W2A_FWD) / W2A_FWD <= 0.02
        assert abs(rev - W2A_REV) / W2A_REV <= 0.02
        assert rev > fwd * 1.5

    def test_weight_scaling(self):
        g = build_graph([(0, 1, 4.0)])
        value = distance("symmetric", g, [0.9, 0.1], [0.1, 0.9], n_t=64)
        assert abs(value - W_HAT_K2 / 2) / (W_HAT_K2 / 2) <= 0.02

    def test_max_symmetrized(self, k2):
        a = w2a_max_symmetrized(k2, [0.9, 0.1], [0.5, 0.5], n_t=64)
        b = w2a_max_symmetrized(k2, [0.5, 0.5], [0.9, 0.1], n_t=64)
        assert a == b
        assert abs(a - W2A_REV) / W2A_REV <= 0.02
        assert w2a_max_symmetrized(k2, [0.3, 0.7], [0.3, 0.7]) == 0.0

    @pytest.mark.parametrize("variant", ["symmetric", "asymmetric"])
    def test_identical_marginals(self, k2, variant):
        report, traj = solve(assemble(variant, k2, [0.3, 0.7], [0.3, 0.7], n_t=8))
        assert report.value == 0.0
        np.testing.assert_allclose(traj.densities, np.tile([0.3, 0.7], (9, 1)))

    def test_geodesic_two_node(self, k2):
        p = assemble("symmetric", k2, [0.9, 0.1], [0.1, 0.9], n_t=64)
        report, traj = solve(p)
        assert geodesic_deviation(traj, p, value=report.value) <= 0.03

    def test_geodesic_identical_is_zero(self, k2):
        p = assemble("symmetric", k2, [0.4, 0.6], [0.4, 0.6], n_t=8)
        report, traj = solve(p)
        assert geodesic_deviation(traj, p, value=report.value) == 0.0


class TestContinuityResidual:
    def test_converged_solve(self, k2):
        cfg = SolverConfig()
        report, traj = solve(assemble("symmetric", k2, [0.8, 0.2], [0.3, 0.7], n_t=16), cfg)
        assert report.converged and report.continuity_residual <= cfg.feasibility_tol

    def test_constant_trajectory(self, k2):
        p = assemble("symmetric", k2, [0.5, 0.5], [0.5, 0.5], n_t=4)
        traj = Trajectory(np.full((5, 2), 0.5), {"u": np.zeros((4, 1))}, np.zeros(1, int))
        assert continuity_residual(traj, p) == 0.0

    def test_corrupted_slice(self, k2):
        p = assemble("symmetric", k2, [0.8, 0.2], [0.3, 0.7], n_t=8)
        _, traj = solve(p)
        bad = Trajectory(traj.densities.copy(), {k: v.copy() for k, v in traj.fluxes.items()},
                         traj.edge_block)
        bad.densities[3, 0] += 0.01
        assert continuity_residual(bad, p) >= 0.005
        _, drift = continuity_residual(bad, p, per_slice=True)
        assert np.argmax(drift) == 3 and drift[3] == pytest.approx(0.01)

    def test_shape_mismatch(self, k2):
        p = assemble("symmetric", k2, [0.8, 0.2], [0.3, 0.7], n_t=8)
        traj = Trajectory(np.full((5, 2), 0.5), {"u": np.zeros((4, 1))}, np.zeros(1, int))
        with pytest.raises(DimensionMismatch):
            continuity_residual(traj, p)


def test_positivity_and_conservation(rng):
    for _ in range(4):
        n = int(rng.integers(3, 7))
        g = random_connected_graph(rng, n)
        mu, nu = interior_mass(rng, n), interior_mass(rng, n)
        for variant in ("symmetric", "asymmetric"):
            report, traj = solve(assemble(variant, g, mu, nu, n_t=16))
            assert report.value > 1e-6
            assert mass_drift(traj) <= 1e-8
            assert traj.densities.min() >= -1e-6


def test_symmetric_variant_is_symmetric(rng):
    g = random_connected_graph(rng, 5)
    mu, nu = interior_mass(rng, 5), interior_mass(rng, 5)
    a = distance("symmetric", g, mu, nu, n_t=32)
    b = distance("symmetric", g, nu, mu, n_t=32)
    assert abs(a - b) <= 0.02 * a


def test_orientation_invariance(rng):
    g = random_connected_graph(rng, 5, extra=2)
    flipped = g.flipped(range(0, g.m, 2))
    mu, nu = interior_mass(rng, 5), interior_mass(rng, 5)
    for variant in ("symmetric", "asymmetric"):
        a = distance(variant, g, mu, nu, n_t=32)
        b = distance(variant, flipped, mu, nu, n_t=32)
        assert abs(a - b) <= 1e-6 * a


def test_at_most_one_direction(rng):
    g = random_connected_graph(rng, 5)
    mu, nu = interior_mass(rng, 5), interior_mass(rng, 5)
    report, traj = solve(assemble("asymmetric", g, mu, nu, n_t=32))
    assert report.converged
    assert np.minimum(traj.fluxes["u"], traj.fluxes["ubar"]).max() <= 1e-6


def test_boundary_zeros_are_accepted(k2):
    report, traj = solve(assemble("symmetric", k2, [1.0, 0.0], [0.0, 1.0], n_t=32))
    assert report.converged
    # arcsin closed form at the simplex corners: pi
    assert abs(report.value - np.pi) / np.pi <= 0.05
    assert traj.densities.min() >= -1e-6


def test_mix_uniform():
    rho = mix_uniform(np.array([1.0, 0.0]), 1e-3)
    np.testing.assert_allclose(rho, [1 - 5e-4, 5e-4])
    assert rho.sum() == pytest.approx(1.0)


def test_report_serialisation(k2):
    report, _ = solve(assemble("symmetric", k2, [0.8, 0.2], [0.3, 0.7], n_t=8))
    d = report.to_dict(with_stats=True)
    assert set(d["residuals"]) == {"continuity", "nonnegativity", "relative_objective_change", "mass_drift"}
    assert d["value"] == pytest.approx(np.sqrt(d["objective"]))
    assert "energy_trace" in d["solver"]


@pytest.fixture(scope="module")
def sweep():
    geo, mu, nu = two_channel_bumps(32)
    out = {}
    for gamma in GAMMA_SWEEP:
        p = assemble("symmetric-layered", geo, mu, nu, gamma, n_t=32)
        report, traj = solve(p)
        out[gamma] = (p, report, traj)
    return out


class TestLayered:
    def test_all_converged(self, sweep):
        assert all(r.converged for _, r, _ in sweep.values())

    def test_mutation_energy_non_increasing(self, sweep):
        energy = [mutation_energy(t, p) for p, _, t in sweep.values()]
        assert all(b <= a * (1 + 1e-6) + 1e-12 for a, b in zip(energy, energy[1:]))

    def test_mutation_flux_decreasing(self, sweep):
        flux = [mutation_flux_mass(t, p) for p, _, t in sweep.values()]
        assert all(b < a for a, b in zip(flux, flux[1:]))

    def test_value_increasing_in_gamma(self, sweep):
        values = [r.value for _, r, _ in sweep.values()]
        assert all(b >= a - 1e-6 for a, b in zip(values, values[1:]))

    def test_channel_mass_stays_in_unit_interval(self, sweep):
        for p, _, traj in sweep.values():
            cm = traj.channel_masses(2)
            assert cm.min() >= -1e-8 and cm.max() <= 1 + 1e-8
            np.testing.assert_allclose(cm.sum(axis=1), 1.0, atol=1e-8)

    def test_plain_graph_has_no_mutation(self, k2):
        p = assemble("symmetric", k2, [0.8, 0.2], [0.3, 0.7], n_t=8)
        _, traj = solve(p)
        assert mutation_flux_mass(traj, p) == 0.0 and mutation_energy(traj, p) == 0.0

    def test_large_gamma_decouples_channels(self):
        # channel masses equal at both ends: with expensive mutation each
        # channel is transported on its own
        geo = layered_product(path_graph(4), M=2)
        mu = np.array([[0.3, 0.1, 0.05, 0.05], [0.05, 0.05, 0.1, 0.3]])
        nu = mu[:, ::-1].copy()
        big = distance("symmetric-layered", geo, mu, nu, gamma=1e4, n_t=16)
        sep = np.sqrt(sum(distance("symmetric", path_graph(4), 2 * mu[c], 2 * nu[c], n_t=16) ** 2 / 2
                          for c in range(2)))
        assert abs(big - sep) / sep <= 2e-3
