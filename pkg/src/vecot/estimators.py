"""scikit-learn style wrappers.

Transport is a two-sample problem, so ``fit`` takes the pair of marginals
instead of ``(X, y)``; ``transform`` maps times in [0, 1] to densities along
the fitted geodesic.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .graph import Graph, LayeredGraph
from .solver import SolverConfig
from .transport import assemble, solve
from .validation import check_gamma, check_mass, check_n_t, check_times
from .w1 import w1_graph, w1_vector

__all__ = ["TransportInterpolator", "W1Distance"]


def _config(tol, max_iters, seed):
    return SolverConfig(feasibility_tol=tol, max_iters=max_iters, seed=seed)


class TransportInterpolator(BaseEstimator):
    """Dynamic transport between two (vector) densities on a graph.

    Parameters
    ----------
    geometry : Graph or LayeredGraph
    variant : {"symmetric", "asymmetric"}
        The graph or layered program is chosen from ``geometry``.
    gamma : float
        Mutation cost weight, used by layered geometries only.
    n_t : int
        Number of time steps.
    tol, max_iters, seed
        Solver settings.

    Attributes
    ----------
    distance_ : float
    report_ : DistanceReport
    trajectory_ : Trajectory
    problem_ : TransportProblem
    """

    def __init__(self, geometry=None, variant="symmetric", gamma=1.0, n_t=32, tol=1e-6,
                 max_iters=100_000, seed=0):
        self.geometry = geometry
        self.variant = variant
        self.gamma = gamma
        self.n_t = n_t
        self.tol = tol
        self.max_iters = max_iters
        self.seed = seed

    def _shape(self):
        g = self.geometry
        if isinstance(g, LayeredGraph):
            return g.spatial.n, g.M
        if isinstance(g, Graph):
            return g.n, None
        raise TypeError("geometry must be a Graph or LayeredGraph")

    def fit(self, mu, nu):
        n, channels = self._shape()
        mu = check_mass(mu, n, channels, name="mu")
        nu = check_mass(nu, n, channels, name="nu")
        gamma = check_gamma(self.gamma)
        problem = assemble(self.variant, self.geometry, mu, nu, gamma, check_n_t(self.n_t))
        self.report_, self.trajectory_ = solve(problem, _config(self.tol, self.max_iters, self.seed))
        self.problem_ = problem
        self.distance_ = self.report_.value
        return self

    def transform(self, times):
        """Densities at ``times``, shape ``(len(times), n)`` or ``(len(times), M, n)``."""
        check_is_fitted(self, "trajectory_")
        times = check_times(times)
        out = np.stack([self.trajectory_.at(t) for t in times])
        _, channels = self._shape()
        return out.reshape(len(times), channels, -1) if channels else out

    def fit_transform(self, mu, nu, times):
        return self.fit(mu, nu).transform(times)


class W1Distance(BaseEstimator):
    """Min-cost-flow W1 on a graph, or on a layered graph when ``mutation`` is set."""

    def __init__(self, graph=None, costs=None, mutation=None, gamma=1.0, seed=0):
        self.graph = graph
        self.costs = costs
        self.mutation = mutation
        self.gamma = gamma
        self.seed = seed

    def fit(self, mu, nu):
        cfg = SolverConfig(seed=self.seed)
        mu, nu = np.asarray(mu, dtype=np.float64), np.asarray(nu, dtype=np.float64)
        if mu.ndim == 2 or self.mutation is not None:
            res = w1_vector(self.graph, self.mutation, check_gamma(self.gamma), mu, nu, cfg)
        else:
            res = w1_graph(self.graph, self.costs, mu, nu, cfg)
        self.result_ = res
        self.distance_ = res.value
        self.flow_ = res.flow
        self.potentials_ = res.potentials
        return self

    def transform(self, X):
        """Pair each row of ``X`` with the fitted potentials: ``X @ f``."""
        check_is_fitted(self, "potentials_")
        return np.asarray(X, dtype=np.float64) @ self.potentials_
