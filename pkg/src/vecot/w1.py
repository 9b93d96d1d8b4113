"""Wasserstein-1 distances on graphs and layered graphs.

The static problem is the min-cost flow ``min c^T |u|  s.t.  D u = nu - mu``
with dual ``max f^T (nu - mu)  s.t.  |f[src] - f[dst]| <= c``.  Both are run
through the same primal-dual loop as the quadratic programs; after each check
the flow is projected onto the constraint exactly and the dual iterate is
scaled into feasibility, which gives a certified duality gap.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import InputError, MassMismatch, MaxIterationsExceeded
from .graph import Graph, LayeredGraph
from .solver import AffineProjector, SolverConfig, StaggeredProjector, estimate_norm, pdhg

__all__ = ["W1Result", "w1_graph", "w1_action", "w1_vector", "default_costs"]


@dataclass
class W1Result:
    value: float
    flow: np.ndarray
    potentials: np.ndarray
    gap: float
    dual_value: float
    iterations: int = 0
    converged: bool = True
    wall_time: float = 0.0
    costs: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "dual_value": self.dual_value,
            "gap": self.gap,
            "iterations": self.iterations,
            "converged": self.converged,
            "wall_time": self.wall_time,
        }


def default_costs(g: Graph) -> np.ndarray:
    """Edge costs ``1/sqrt(w)``, which make the dual constraint ``|grad f| <= 1``."""
    return 1.0 / np.sqrt(g.weights)


def _balanced(mu, nu, n):
    mu = np.asarray(mu, dtype=np.float64).ravel()
    nu = np.asarray(nu, dtype=np.float64).ravel()
    if mu.size != n or nu.size != n:
        raise InputError(f"marginals must have {n} entries")
    if np.any(mu < 0) or np.any(nu < 0) or not (np.all(np.isfinite(mu)) and np.all(np.isfinite(nu))):
        raise InputError("marginals must be finite and nonnegative")
    if abs(mu.sum() - nu.sum()) > 1e-10 * max(1.0, mu.sum()):
        raise MassMismatch(f"marginal masses differ: {mu.sum():.15g} vs {nu.sum():.15g}")
    return mu, nu


def w1_graph(g: Graph, c=None, mu=None, nu=None, cfg: SolverConfig | None = None,
             gap_tol=1e-9) -> W1Result:
    """Min-cost-flow W1 between ``mu`` and ``nu`` with edge costs ``c``.

    ``c`` defaults to ``1/sqrt(w)``.  The flow satisfies ``D u = nu - mu`` to
    rounding; potentials are pinned to ``f[0] = 0``.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    c = default_costs(g) if c is None else np.asarray(c, dtype=np.float64).ravel()
    if c.size != g.m or np.any(~(c > 0)):
        raise InputError("edge costs must be positive, one per edge")
    mu, nu = _balanced(mu, nu, g.n)
    b = nu - mu
    if g.m == 0 or not np.any(b):
        return W1Result(0.0, np.zeros(g.m), np.zeros(g.n), 0.0, 0.0, 0, True,
                        time.perf_counter() - t0, c)

    D = g.D
    proj = AffineProjector(D[:-1], b[:-1])
    DT = sp.csr_matrix(D.T)
    norm = estimate_norm(D, cfg.seed)
    tau = sigma = 1.0 / norm
    scale_b = max(1e-300, float(np.abs(b).max()))

    best = {"gap": np.inf}

    def certificate(u, y):
        u = proj.project(u)
        primal = float(c @ np.abs(u))
        f = -y - (-y[0])
        slack = np.abs(DT @ f) / c
        f = f / max(1.0, float(slack.max()))
        dual = float(f @ b)
        return primal - dual, primal, dual, u, f

    def check(it, x, y, p_res, d_res):
        gap, primal, dual, u, f = certificate(x, y)
        if gap < best["gap"]:
            best.update(gap=gap, primal=primal, dual=dual, u=u, f=f, it=it)
        return gap <= gap_tol * max(1.0, primal, scale_b)

    def prox_g(v, t):
        return np.sign(v) * np.maximum(np.abs(v) - t * c, 0.0)

    def prox_fstar(v, s):
        return v - s * b

    x0 = proj.project(np.zeros(g.m))
    _, _, iters, done, _ = pdhg(
        x0, np.zeros(g.n), D, prox_g, prox_fstar, tau, sigma, cfg.max_iters, check,
        cfg.check_every, cfg.step_rule, cfg.step_period,
    )
    if not done:
        warnings.warn(f"W1 solve stopped at max_iters={cfg.max_iters}", MaxIterationsExceeded,
                      stacklevel=2)
    return W1Result(
        value=best["primal"],
        flow=best["u"],
        potentials=best["f"],
        gap=max(0.0, best["gap"]),
        dual_value=best["dual"],
        iterations=iters,
        converged=bool(done),
        wall_time=time.perf_counter() - t0,
        costs=c,
    )


def w1_vector(spatial: Graph, mutation: Graph | None, gamma: float, mu, nu,
              cfg: SolverConfig | None = None, gap_tol=1e-9) -> W1Result:
    """Vector-valued W1: min-cost flow on the layered product graph.

    Spatial edges cost ``1/sqrt(w)``, mutation edges ``gamma/sqrt(w_F)``.
    ``mu``/``nu`` are ``(M, n)`` arrays (or flat over composite nodes).
    """
    if not (np.isfinite(gamma) and gamma > 0):
        raise InputError("gamma must be positive")
    mu = np.asarray(mu, dtype=np.float64)
    M = mu.shape[0] if mu.ndim == 2 else (mutation.n if mutation is not None else 1)
    if mutation is None:
        from .graph import complete_graph

        mutation = complete_graph(M)
    layered = LayeredGraph(spatial, mutation, M)
    n, src, dst, w, block = layered.composite()
    flat = Graph(n, src, dst, w)
    c = np.where(block == 1, gamma, 1.0) / np.sqrt(w)
    return w1_graph(flat, c, mu.ravel(), np.asarray(nu, dtype=np.float64).ravel(), cfg, gap_tol)


def w1_action(g: Graph, c=None, mu=None, nu=None, n_t=16, cfg: SolverConfig | None = None):
    """W1 through its time-dependent recast on the staggered grid.

    Minimises ``dt * sum_t c^T (u_t + ubar_t)`` subject to
    ``rho[t+1] - rho[t] = dt * D (u_t - ubar_t)``, ``u, ubar, rho >= 0`` and the
    boundary marginals.  Returns ``(value, stats_dict)``.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    c = default_costs(g) if c is None else np.asarray(c, dtype=np.float64).ravel()
    if c.size != g.m or np.any(~(c > 0)):
        raise InputError("edge costs must be positive, one per edge")
    mu, nu = _balanced(mu, nu, g.n)
    if not np.any(nu - mu):
        return 0.0, {"iterations": 0, "converged": True}
    N, E, dt = g.n, g.m, 1.0 / n_t
    T = sp.diags([-np.ones(n_t), np.ones(n_t)], [0, 1], shape=(n_t, n_t + 1), format="csr")
    A_rho = sp.kron(T[:, 1:n_t], sp.identity(N), format="csr")
    A_u = -dt * sp.kron(sp.identity(n_t), g.D, format="csr")
    A = sp.hstack([A_rho, A_u, -A_u], format="csr")
    b = np.zeros(n_t * N)
    b[:N] += mu
    b[(n_t - 1) * N:] -= nu
    lap = sp.csr_matrix(g.D @ g.D.T)
    proj = StaggeredProjector(A, b, n_t, lap, 2 * dt**2)
    n_x = A.shape[1]
    K = sp.identity(n_x, format="csr")
    n_rho = (n_t - 1) * N
    lin = np.concatenate([np.zeros(n_rho), np.tile(c, 2 * n_t) * dt])

    def prox_fstar(v, s):
        return v - s * np.maximum(v / s - lin / s, 0.0)

    def prox_g(v, _t):
        return proj.project(v)

    history = []

    def check(it, x, y, p_res, d_res):
        val = float(lin @ np.maximum(x, 0.0))
        viol = float(max(0.0, -x.min()))
        history.append(val)
        if len(history) < 6:
            return False
        ref = history[-6]
        return viol <= cfg.feasibility_tol and abs(val - ref) <= cfg.objective_tol * max(val, 1e-12)

    s = np.arange(1, n_t)[:, None] / n_t
    x0 = np.concatenate([((1 - s) * mu + s * nu).ravel(), np.zeros(2 * n_t * E)])
    x, y, iters, done, _ = pdhg(
        proj.project(x0), np.zeros(n_x), K, prox_g, prox_fstar, 1.0, 1.0, cfg.max_iters,
        check, cfg.check_every, cfg.step_rule, cfg.step_period,
    )
    if not done:
        warnings.warn(f"W1 action solve stopped at max_iters={cfg.max_iters}",
                      MaxIterationsExceeded, stacklevel=2)
    value = float(lin @ x)
    return value, {
        "iterations": iters,
        "converged": bool(done),
        "nonnegativity_violation": float(max(0.0, -x.min())),
        "continuity_residual": float(np.abs(proj.residual(x)).max()),
        "wall_time": time.perf_counter() - t0,
    }
