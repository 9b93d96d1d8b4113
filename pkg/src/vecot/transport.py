"""Dynamic transport distances on graphs and layered graphs.

Four programs are supported, all sharing one staggered discretisation:
densities live at times ``0, 1/n_t, ..., 1`` and fluxes at the midpoints.
With ``dt = 1/n_t``

    rho[t+1] - rho[t] = dt * div(flux[t])

and the action is ``dt * sum_t sum_k flux**2 / rho_mid`` where ``rho_mid`` is
the average of the two adjacent density slices taken at the relevant edge
endpoint.

``asymmetric``  two nonnegative flux blocks per edge: ``u`` (divided by the
                sink mass) and ``ubar`` (divided by the source mass).
``symmetric``   one signed flux divided by both endpoint masses.

On a :class:`~vecot.graph.LayeredGraph` the mutation edges carry an extra
factor ``gamma`` in the action.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import (
    BadGamma,
    BadTimeGrid,
    DimensionMismatch,
    InfeasibleBoundary,
    InputError,
    MarginalMismatch,
)
from .graph import Graph, LayeredGraph
from .solver import (
    AffineProjector,
    StaggeredProjector,
    EnergyTerm,
    SolverConfig,
    SolveStats,
    pdhg_solve,
    perspective_value,
)

__all__ = [
    "VARIANTS",
    "MassDistribution",
    "VectorMass",
    "TransportProblem",
    "Trajectory",
    "DistanceReport",
    "assemble",
    "solve",
    "distance",
    "w2a_max_symmetrized",
    "geodesic_deviation",
    "continuity_residual",
    "mass_drift",
    "mix_uniform",
    "mutation_flux_mass",
    "mutation_energy",
]

VARIANTS = ("asymmetric-graph", "symmetric-graph", "asymmetric-layered", "symmetric-layered")
MASS_TOL = 1e-12


def _as_mass(values, n, what="marginal"):
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size != n:
        raise MarginalMismatch(f"{what} must have {n} entries, got shape {v.shape}")
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise MarginalMismatch(f"{what} must be finite and nonnegative")
    return v


@dataclass(frozen=True, eq=False)
class MassDistribution:
    """Nonnegative node masses summing to one."""

    values: np.ndarray

    def __post_init__(self):
        v = _as_mass(self.values, np.size(self.values))
        if abs(v.sum() - 1.0) > MASS_TOL * max(1, v.size):
            raise MarginalMismatch(f"masses sum to {v.sum():.15g}, expected 1")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class VectorMass:
    """Channel-by-node masses ``values[channel, node]`` with joint sum one."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise MarginalMismatch("vector mass must be a 2-D (channel, node) array")
        _as_mass(v.ravel(), v.size)
        if abs(v.sum() - 1.0) > MASS_TOL * max(1, v.size):
            raise MarginalMismatch(f"joint mass is {v.sum():.15g}, expected 1")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def M(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.values.shape[1]

    def flat(self):
        return self.values.ravel()

    def channel_mass(self):
        return self.values.sum(axis=1)


def mix_uniform(rho, eps=1e-9):
    """``(1 - eps) * rho + eps * uniform``: optional conditioning for boundary zeros."""
    rho = np.asarray(rho, dtype=np.float64)
    return (1.0 - eps) * rho + eps * rho.sum() / rho.size


def _marginal_array(x, n):
    if isinstance(x, (MassDistribution, VectorMass)):
        x = x.values
    x = np.asarray(x, dtype=np.float64)
    return _as_mass(x.ravel(), n)


@dataclass(frozen=True, eq=False)
class TransportProblem:
    """A fully assembled discrete transport program.

    Unknowns ``x`` stack the interior density slices ``rho[1..n_t-1]`` followed
    by the flux blocks (``u`` then, for asymmetric variants, ``ubar``), each of
    shape ``(n_t, n_edges)``.  The boundary slices are fixed to ``mu`` and
    ``nu`` and enter the constraint right-hand side.
    """

    variant: str
    geometry: object
    mu: np.ndarray
    nu: np.ndarray
    gamma: float
    n_t: int
    src: np.ndarray = field(repr=False)
    dst: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    block: np.ndarray = field(repr=False)
    A: sp.csr_matrix = field(repr=False)
    b: np.ndarray = field(repr=False)
    K: sp.csr_matrix = field(repr=False)
    k0: np.ndarray = field(repr=False)
    groups: np.ndarray = field(repr=False)
    group_scale: np.ndarray = field(repr=False)
    energy_terms: tuple = ()

    @property
    def n_nodes(self) -> int:
        return self.mu.size

    @property
    def n_edges(self) -> int:
        return self.src.size

    @property
    def symmetric(self) -> bool:
        return self.variant.startswith("symmetric")

    @property
    def layered(self) -> bool:
        return self.variant.endswith("layered")

    @property
    def n_flux_blocks(self) -> int:
        return 1 if self.symmetric else 2

    @property
    def nonneg_q(self) -> bool:
        return not self.symmetric

    @property
    def n_groups(self) -> int:
        return self.group_scale.size

    @property
    def dt(self) -> float:
        return 1.0 / self.n_t

    @property
    def n_rho(self) -> int:
        return (self.n_t - 1) * self.n_nodes

    @property
    def n_unknowns(self) -> int:
        return self.n_rho + self.n_flux_blocks * self.n_t * self.n_edges

    @cached_property
    def div_matrix(self) -> sp.csr_matrix:
        """``D W^{1/2}`` of the flat (composite) graph."""
        E = self.n_edges
        sw = np.sqrt(self.weights)
        cols = np.arange(E)
        return sp.csr_matrix(
            (np.concatenate([sw, -sw]), (np.concatenate([self.src, self.dst]), np.concatenate([cols, cols]))),
            shape=(self.n_nodes, E),
        )

    def projector(self, method="direct", cg_tol=1e-12, cg_max_iters=5000):
        """Cached projector onto ``{x : A x = b}``.

        ``direct`` uses the time-DCT factorisation, ``cg`` conjugate gradients.
        """
        cache = self.__dict__.setdefault("_projectors", {})
        key = (method, cg_tol, cg_max_iters) if method == "cg" else (method,)
        if key not in cache:
            if method == "direct":
                lap = self.div_matrix @ self.div_matrix.T
                c = self.n_flux_blocks * self.dt**2
                cache[key] = StaggeredProjector(self.A, self.b, self.n_t, lap, c)
            else:
                cache[key] = AffineProjector(self.A, self.b, method, cg_tol, cg_max_iters)
        return cache[key]

    def initial_point(self) -> np.ndarray:
        """Linear density interpolation between the marginals, zero flux."""
        s = np.arange(1, self.n_t)[:, None] / self.n_t
        rho = (1 - s) * self.mu[None, :] + s * self.nu[None, :]
        return np.concatenate([rho.ravel(), np.zeros(self.n_unknowns - self.n_rho)])

    def evaluate_copies(self, z):
        """Action and nonnegativity violation at copy vector ``z = K x + k0``."""
        G = self.n_groups
        r, q = z[:G], z[G:]
        Q = np.bincount(self.groups, q * q, G)
        pos = r > 0
        obj = float(np.sum(self.group_scale[pos] * Q[pos] / r[pos]))
        viol = max(0.0, float(-r.min(initial=0.0)))
        if np.any(~pos):
            viol = max(viol, float(np.sqrt(Q[~pos].max())))
        if self.nonneg_q and q.size:
            viol = max(viol, float(-q.min()))
        return obj, viol

    def objective(self, x) -> float:
        """Discrete action of a stacked unknown vector (``inf`` outside the domain)."""
        z = self.K @ x + self.k0
        G = self.n_groups
        q = z[G:]
        if self.nonneg_q and np.any(q < 0):
            return float("inf")
        return perspective_value(z[:G], q, self.groups, self.group_scale)

    def unpack(self, x) -> "Trajectory":
        N, E, nt = self.n_nodes, self.n_edges, self.n_t
        rho = np.empty((nt + 1, N))
        rho[0], rho[nt] = self.mu, self.nu
        rho[1:nt] = x[: self.n_rho].reshape(nt - 1, N)
        flux = x[self.n_rho:].reshape(self.n_flux_blocks, nt, E)
        names = ("u",) if self.symmetric else ("u", "ubar")
        return Trajectory(rho, {k: flux[i].copy() for i, k in enumerate(names)}, self.block.copy())

    def pack(self, traj: "Trajectory") -> np.ndarray:
        names = ("u",) if self.symmetric else ("u", "ubar")
        parts = [traj.densities[1:-1].ravel()] + [traj.fluxes[k].ravel() for k in names]
        return np.concatenate(parts)

    def net_flux(self, traj: "Trajectory") -> np.ndarray:
        f = traj.fluxes["u"]
        return f - traj.fluxes["ubar"] if "ubar" in traj.fluxes else f

    def with_marginals(self, mu, nu) -> "TransportProblem":
        return assemble(self.variant, self.geometry, mu, nu, self.gamma, self.n_t)


@dataclass
class Trajectory:
    """Time-indexed densities and midpoint fluxes.

    ``densities`` has shape ``(n_t + 1, n_nodes)`` over composite nodes;
    ``fluxes`` maps block name to ``(n_t, n_edges)`` arrays over composite
    edges, ``edge_block`` tags each edge spatial (0) or mutation (1).
    """

    densities: np.ndarray
    fluxes: dict
    edge_block: np.ndarray

    @property
    def n_t(self):
        return self.densities.shape[0] - 1

    @property
    def times(self):
        return np.linspace(0.0, 1.0, self.n_t + 1)

    def at(self, t: float) -> np.ndarray:
        """Density at time ``t`` by linear interpolation between slices."""
        if not 0.0 <= t <= 1.0:
            raise InputError(f"time {t} outside [0, 1]")
        s = t * self.n_t
        i = min(int(np.floor(s)), self.n_t - 1)
        frac = s - i
        return (1 - frac) * self.densities[i] + frac * self.densities[i + 1]

    def channel_masses(self, M: int) -> np.ndarray:
        """Per-slice mass of each channel, shape ``(n_t + 1, M)``."""
        return self.densities.reshape(self.n_t + 1, M, -1).sum(axis=2)

    def block_flux(self, block: int) -> dict:
        sel = self.edge_block == block
        return {k: v[:, sel] for k, v in self.fluxes.items()}


@dataclass
class DistanceReport:
    value: float
    objective: float
    continuity_residual: float
    nonnegativity_violation: float
    relative_objective_change: float
    mass_drift: float
    iterations: int
    wall_time: float
    converged: bool
    variant: str = ""
    gamma: Optional[float] = None
    n_t: int = 0
    stats: Optional[SolveStats] = field(default=None, repr=False)

    def to_dict(self, with_stats=False) -> dict:
        d = {
            "variant": self.variant,
            "gamma": self.gamma,
            "n_t": self.n_t,
            "value": self.value,
            "objective": self.objective,
            "converged": self.converged,
            "iterations": self.iterations,
            "wall_time": self.wall_time,
            "residuals": {
                "continuity": self.continuity_residual,
                "nonnegativity": self.nonnegativity_violation,
                "relative_objective_change": self.relative_objective_change,
                "mass_drift": self.mass_drift,
            },
        }
        if with_stats and self.stats is not None:
            s = self.stats
            d["solver"] = {
                "primal_residual": s.primal_residual,
                "dual_residual": s.dual_residual,
                "cg_iterations": s.cg_iterations,
                "operator_norm": s.operator_norm,
                "tau": s.tau,
                "sigma": s.sigma,
                "energy_trace": [[int(i), float(v)] for i, v in s.energy_trace],
            }
        return d


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------
def _energy_terms(symmetric, layered, gamma):
    if symmetric:
        terms = [EnergyTerm("u", "both", 1.0)]
        if layered:
            terms.append(EnergyTerm("p", "both", gamma))
    else:
        terms = [EnergyTerm("u", "sink", 1.0), EnergyTerm("ubar", "source", 1.0)]
        if layered:
            terms += [EnergyTerm("p", "sink", gamma), EnergyTerm("pbar", "source", gamma)]
    return tuple(terms)


def assemble(variant, geometry, mu, nu, gamma=1.0, n_t=32) -> TransportProblem:
    """Build the discrete program for ``variant`` on ``geometry``.

    ``variant`` is one of :data:`VARIANTS`; the short forms ``asymmetric`` and
    ``symmetric`` pick the graph or layered flavour from ``geometry``.
    ``mu``/``nu`` may be 1-D over composite nodes or ``(M, n)`` arrays.

    Raises
    ------
    MarginalMismatch, BadGamma, BadTimeGrid, InfeasibleBoundary
    """
    if variant in ("asymmetric", "symmetric"):
        variant = variant + ("-layered" if isinstance(geometry, LayeredGraph) else "-graph")
    if variant not in VARIANTS:
        raise InputError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    layered = variant.endswith("layered")
    if layered and not isinstance(geometry, LayeredGraph):
        raise InputError(f"{variant} needs a LayeredGraph")
    if not layered and not isinstance(geometry, Graph):
        raise InputError(f"{variant} needs a Graph")
    if isinstance(n_t, bool) or int(n_t) != n_t or n_t < 2:
        raise BadTimeGrid(f"n_t must be an integer >= 2, got {n_t!r}")
    n_t = int(n_t)
    if layered:
        if not (np.isfinite(gamma) and gamma > 0):
            raise BadGamma(f"gamma must be positive, got {gamma!r}")
        gamma = float(gamma)
    else:
        gamma = 1.0

    N, src, dst, w, block = geometry.composite()
    mu = _marginal_array(mu, N)
    nu = _marginal_array(nu, N)
    if abs(mu.sum() - nu.sum()) > 1e-10 * max(1.0, mu.sum()):
        raise InfeasibleBoundary(f"marginal masses differ: {mu.sum():.15g} vs {nu.sum():.15g}")
    symmetric = variant.startswith("symmetric")
    E = src.size
    nb = 1 if symmetric else 2
    dt = 1.0 / n_t
    scale = np.where(block == 1, gamma, 1.0)

    # continuity: rho[t+1] - rho[t] - dt * Dw (u - ubar)[t] = 0,  t = 0..n_t-1
    sw = np.sqrt(w)
    cols = np.arange(E)
    Dw = sp.csr_matrix(
        (np.concatenate([sw, -sw]), (np.concatenate([src, dst]), np.concatenate([cols, cols]))),
        shape=(N, E),
    )
    T = sp.diags([-np.ones(n_t), np.ones(n_t)], [0, 1], shape=(n_t, n_t + 1), format="csr")
    A_rho = sp.kron(T[:, 1:n_t], sp.identity(N), format="csr")
    A_u = -dt * sp.kron(sp.identity(n_t), Dw, format="csr")
    blocks = [A_rho, A_u] if symmetric else [A_rho, A_u, -A_u]
    A = sp.hstack(blocks, format="csr")
    b = np.zeros(n_t * N)
    b[:N] += mu
    b[(n_t - 1) * N:] -= nu
    # rows are dependent through total mass (ones lie in the left kernel);
    # consistent because mu and nu carry equal mass

    # energy groups: one per (midpoint, node, block) with at least one flux entry
    node_block = np.stack([np.concatenate([dst, src]), np.concatenate([block, block])])
    keys, inv = np.unique(node_block[0] * 2 + node_block[1], return_inverse=True)
    n_grp = keys.size
    grp_node = keys // 2
    grp_scale = np.where(keys % 2 == 1, gamma, 1.0) * dt
    sink_grp, src_grp = inv[:E], inv[E:]
    if symmetric:
        q_flux = np.concatenate([cols, cols])  # u at sink and at source
        q_grp = np.concatenate([sink_grp, src_grp])
    else:
        q_flux = np.concatenate([cols, E + cols])  # u at sink, ubar at source
        q_grp = np.concatenate([sink_grp, src_grp])
    n_q = q_flux.size

    n_rho = (n_t - 1) * N
    n_x = n_rho + nb * n_t * E
    rows, cols_k, vals = [], [], []
    k0 = np.zeros(n_t * (n_grp + n_q))
    r_off = 0
    q_off = n_t * n_grp
    for t in range(n_t):
        r_rows = r_off + t * n_grp + np.arange(n_grp)
        for slice_t in (t, t + 1):
            if slice_t == 0:
                k0[r_rows] += 0.5 * mu[grp_node]
            elif slice_t == n_t:
                k0[r_rows] += 0.5 * nu[grp_node]
            else:
                rows.append(r_rows)
                cols_k.append(n_rho * 0 + (slice_t - 1) * N + grp_node)
                vals.append(np.full(n_grp, 0.5))
        q_rows = q_off + t * n_q + np.arange(n_q)
        blk = q_flux // E
        edge = q_flux % E
        rows.append(q_rows)
        cols_k.append(n_rho + blk * n_t * E + t * E + edge)
        vals.append(np.ones(n_q))
    K = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols_k))),
        shape=(n_t * (n_grp + n_q), n_x),
    )
    groups = np.concatenate([t * n_grp + q_grp for t in range(n_t)])
    group_scale = np.tile(grp_scale, n_t)

    return TransportProblem(
        variant=variant,
        geometry=geometry,
        mu=mu,
        nu=nu,
        gamma=gamma,
        n_t=n_t,
        src=np.asarray(src),
        dst=np.asarray(dst),
        weights=np.asarray(w, dtype=np.float64),
        block=np.asarray(block),
        A=A,
        b=b,
        K=K,
        k0=k0,
        groups=groups,
        group_scale=group_scale,
        energy_terms=_energy_terms(symmetric, layered, gamma),
    )


# --------------------------------------------------------------------------
# solve and derived quantities
# --------------------------------------------------------------------------
def continuity_residual(traj: Trajectory, problem: TransportProblem, per_slice=False):
    """Max-norm residual of the discrete continuity equation.

    With ``per_slice=True`` also returns the absolute total-mass drift of each
    density slice relative to ``mu``.
    """
    rho = np.asarray(traj.densities)
    nt, N = problem.n_t, problem.n_nodes
    if rho.shape != (nt + 1, N):
        raise DimensionMismatch(f"densities have shape {rho.shape}, expected {(nt + 1, N)}")
    for k, f in traj.fluxes.items():
        if np.shape(f) != (nt, problem.n_edges):
            raise DimensionMismatch(f"flux {k} has shape {np.shape(f)}")
    net = problem.net_flux(traj)
    lhs = np.diff(rho, axis=0) - problem.dt * (problem.div_matrix @ net.T).T
    res = float(np.max(np.abs(lhs), initial=0.0))
    if per_slice:
        return res, np.abs(rho.sum(axis=1) - problem.mu.sum())
    return res


def mass_drift(traj: Trajectory, total=1.0) -> float:
    return float(np.max(np.abs(np.asarray(traj.densities).sum(axis=1) - total)))


def solve(problem: TransportProblem, cfg: SolverConfig | None = None):
    """Solve ``problem``; returns ``(DistanceReport, Trajectory)``.

    The reported ``value`` is the square root of the optimal discrete action.
    Non-convergence is flagged in the report (and warned), not raised.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    if np.array_equal(problem.mu, problem.nu):
        x = problem.initial_point()
        stats = SolveStats(iterations=0, converged=True, objective=0.0, wall_time=0.0)
        traj = problem.unpack(x)
        obj = 0.0
    else:
        x, _, stats = pdhg_solve(problem, cfg)
        traj = problem.unpack(x)
        obj = stats.objective
    res = continuity_residual(traj, problem)
    _, viol = problem.evaluate_copies(problem.K @ x + problem.k0)
    report = DistanceReport(
        value=float(np.sqrt(max(obj, 0.0))),
        objective=float(obj),
        continuity_residual=res,
        nonnegativity_violation=float(viol),
        relative_objective_change=float(stats.relative_objective_change)
        if stats.iterations
        else 0.0,
        mass_drift=mass_drift(traj, problem.mu.sum()),
        iterations=int(stats.iterations),
        wall_time=time.perf_counter() - t0,
        converged=bool(stats.converged),
        variant=problem.variant,
        gamma=problem.gamma if problem.layered else None,
        n_t=problem.n_t,
        stats=stats,
    )
    return report, traj


def distance(variant, geometry, mu, nu, gamma=1.0, n_t=32, cfg=None) -> float:
    """Convenience wrapper returning only the distance value."""
    report, _ = solve(assemble(variant, geometry, mu, nu, gamma, n_t), cfg)
    return report.value


def w2a_max_symmetrized(geometry, mu, nu, n_t=32, cfg=None, gamma=1.0) -> float:
    """``max(W(mu, nu), W(nu, mu))`` for the asymmetric program."""
    fwd = distance("asymmetric", geometry, mu, nu, gamma, n_t, cfg)
    bwd = distance("asymmetric", geometry, nu, mu, gamma, n_t, cfg)
    return max(fwd, bwd)


GEODESIC_PAIRS = ((0.0, 0.5), (0.5, 1.0), (0.25, 0.75))


def geodesic_deviation(traj: Trajectory, problem: TransportProblem, cfg=None, value=None,
                       pairs=GEODESIC_PAIRS) -> float:
    """Max relative deviation of ``W(rho(s), rho(t))`` from ``(t - s) W(mu, nu)``.

    Intermediate slices are re-solved with the same variant, gamma and time
    grid.  ``value`` defaults to a fresh solve between the endpoints.
    """
    if value is None:
        value, _ = solve(problem, cfg)
        value = value.value
    if value == 0.0 or np.array_equal(problem.mu, problem.nu):
        return 0.0
    worst = 0.0
    for s, t in pairs:
        a = np.clip(traj.at(s), 0.0, None)
        b = np.clip(traj.at(t), 0.0, None)
        a, b = a / a.sum(), b / b.sum()
        sub, _ = solve(problem.with_marginals(a, b), cfg)
        worst = max(worst, abs(sub.value - (t - s) * value) / value)
    return worst


def mutation_flux_mass(traj: Trajectory, problem: TransportProblem) -> float:
    """Total mass moved across mutation edges: ``dt * sum |sqrt(w) * flux|``.

    For asymmetric variants both rate blocks count.  Zero on plain graphs.
    """
    sel = problem.block == 1
    if not np.any(sel):
        return 0.0
    sw = np.sqrt(problem.weights[sel])
    total = sum(float(np.abs(f[:, sel] * sw).sum()) for f in traj.fluxes.values())
    return problem.dt * total


def mutation_energy(traj: Trajectory, problem: TransportProblem) -> float:
    """Share of the action spent on mutation edges, without the ``gamma`` factor."""
    sel = problem.block == 1
    if not np.any(sel):
        return 0.0
    mids = 0.5 * (traj.densities[:-1] + traj.densities[1:])
    src, dst = problem.src[sel], problem.dst[sel]
    flux = traj.fluxes

    def term(q, den):
        q = q[:, sel]
        out = np.zeros_like(q)
        pos = den > 0
        out[pos] = q[pos] ** 2 / den[pos]
        out[~pos & (q != 0)] = np.inf
        return out.sum()

    if problem.symmetric:
        e = term(flux["u"], mids[:, dst]) + term(flux["u"], mids[:, src])
    else:
        e = term(flux["u"], mids[:, dst]) + term(flux["ubar"], mids[:, src])
    return problem.dt * float(e)
