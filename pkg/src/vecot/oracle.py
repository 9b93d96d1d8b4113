"""Slow, dense reference solvers used to cross-check the main code paths.

Nothing here shares numerical kernels with :mod:`vecot.solver`: constraints
are rebuilt from the geometry with dense numpy, the dynamic program goes to an
interior-point conic solver and the static transport problem to an LP solver.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, MassMismatch, ScaleExceeded

__all__ = [
    "static_kantorovich",
    "kantorovich_vertex_enumeration",
    "smoothed_dynamic_solve",
    "SmoothedResult",
    "dense_projection",
    "shortest_path_costs",
]

MAX_SUPPORT = 64
MAX_UNKNOWNS = 5000
MAX_ROWS = 2000


def _check_marginals(mu, nu):
    mu = np.asarray(mu, dtype=np.float64).ravel()
    nu = np.asarray(nu, dtype=np.float64).ravel()
    if np.any(mu < 0) or np.any(nu < 0):
        raise InputError("marginals must be nonnegative")
    if abs(mu.sum() - nu.sum()) > 1e-10:
        raise MassMismatch(f"marginal masses differ: {mu.sum()} vs {nu.sum()}")
    return mu, nu


def static_kantorovich(C, mu, nu):
    """Exact optimal coupling for cost matrix ``C`` via an LP.

    Returns ``(value, coupling)``.
    """
    from scipy.optimize import linprog

    C = np.asarray(C, dtype=np.float64)
    mu, nu = _check_marginals(mu, nu)
    if C.shape != (mu.size, nu.size):
        raise InputError(f"cost matrix shape {C.shape} does not match marginals")
    if max(C.shape) > MAX_SUPPORT:
        raise ScaleExceeded(f"oracle limited to {MAX_SUPPORT}x{MAX_SUPPORT}")
    if np.any(C < 0):
        raise InputError("costs must be nonnegative")
    n, m = C.shape
    rows = np.zeros((n + m, n * m))
    for i in range(n):
        rows[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        rows[n + j, j::m] = 1.0
    res = linprog(
        C.ravel(), A_eq=rows, b_eq=np.concatenate([mu, nu]), bounds=(0, None), method="highs"
    )
    if res.status != 0:
        raise InputError(f"LP failed: {res.message}")
    plan = res.x.reshape(n, m)
    return float(C.ravel() @ res.x), plan


def kantorovich_vertex_enumeration(C, mu, nu):
    """Brute-force the transport LP by visiting every basic solution.

    Only for tiny supports (``n * m <= 12``): every subset of ``n + m - 1``
    variables is tried as a basis.
    """
    C = np.asarray(C, dtype=np.float64)
    mu, nu = _check_marginals(mu, nu)
    n, m = C.shape
    if n * m > 12:
        raise ScaleExceeded("vertex enumeration limited to 12 variables")
    rows = np.zeros((n + m, n * m))
    for i in range(n):
        rows[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        rows[n + j, j::m] = 1.0
    rhs = np.concatenate([mu, nu])
    best, best_plan = np.inf, None
    for basis in itertools.combinations(range(n * m), n + m - 1):
        sub = rows[:, basis]
        sol, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
        if np.linalg.norm(sub @ sol - rhs) > 1e-10 or np.any(sol < -1e-12):
            continue
        x = np.zeros(n * m)
        x[list(basis)] = sol
        val = float(C.ravel() @ x)
        if val < best:
            best, best_plan = val, x.reshape(n, m)
    return best, best_plan


def shortest_path_costs(graph, edge_costs=None):
    """All-pairs shortest path lengths with per-edge costs (default ``1/sqrt(w)``)."""
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import shortest_path

    c = 1.0 / np.sqrt(graph.weights) if edge_costs is None else np.asarray(edge_costs, float)
    adj = csr_matrix((c, (graph.src, graph.dst)), shape=(graph.n, graph.n))
    return shortest_path(adj, directed=False)


@dataclass
class SmoothedResult:
    objective: float
    value: float
    eps: float
    eps_bias: float
    densities: np.ndarray
    status: str


def smoothed_dynamic_solve(problem, eps=1e-8, solver="CLARABEL"):
    """Reference optimum of a transport program with denominators ``rho + eps``.

    Rebuilds the staggered program from ``problem.geometry``, marginals,
    variant, gamma and ``n_t`` using dense matrices and hands it to a conic
    solver.  ``eps_bias`` estimates how far the smoothing moves the optimum.
    """
    import cvxpy as cp

    if not 1e-9 <= eps <= 1e-5:
        raise InputError("eps must lie in [1e-9, 1e-5]")
    N, src, dst, w, block = problem.geometry.composite()
    src, dst = np.asarray(src), np.asarray(dst)
    E = src.size
    n_t = problem.n_t
    symmetric = problem.variant.startswith("symmetric")
    nb = 1 if symmetric else 2
    if (n_t - 1) * N + nb * n_t * E > MAX_UNKNOWNS:
        raise ScaleExceeded(f"oracle limited to {MAX_UNKNOWNS} unknowns")
    gamma = problem.gamma if problem.variant.endswith("layered") else 1.0
    scale = np.where(np.asarray(block) == 1, gamma, 1.0)
    dt = 1.0 / n_t
    mu, nu = np.asarray(problem.mu, float), np.asarray(problem.nu, float)

    div = np.zeros((N, E))
    div[src, np.arange(E)] = np.sqrt(w)
    div[dst, np.arange(E)] = -np.sqrt(w)

    rho_int = cp.Variable((n_t - 1, N)) if n_t > 1 else None
    u = cp.Variable((n_t, E))
    ubar = None if symmetric else cp.Variable((n_t, E))

    def slice_(t):
        if t == 0:
            return mu
        if t == n_t:
            return nu
        return rho_int[t - 1]

    cons = []
    sink_terms, src_terms = [], []
    for t in range(n_t):
        net = u[t] if symmetric else u[t] - ubar[t]
        cons.append(slice_(t + 1) - slice_(t) == dt * (div @ net))
        mid = 0.5 * (slice_(t) + slice_(t + 1))
        sink_terms.append(mid[dst])
        src_terms.append(mid[src])
    if not symmetric:
        cons += [u >= 0, ubar >= 0]

    a = np.sqrt(dt * scale)

    def epigraph(q_rows, den_rows):
        # s >= a^2 q^2 / (den + eps) as rotated cones: |(2 a q, s - den')| <= s + den'
        s = cp.Variable((n_t, E))
        for t in range(n_t):
            den = den_rows[t] + eps
            cons.append(
                cp.SOC(s[t] + den, cp.vstack([2 * cp.multiply(a, q_rows[t]), s[t] - den]), axis=0)
            )
        return s

    if symmetric:
        s1 = epigraph([u[t] for t in range(n_t)], sink_terms)
        s2 = epigraph([u[t] for t in range(n_t)], src_terms)
    else:
        s1 = epigraph([u[t] for t in range(n_t)], sink_terms)
        s2 = epigraph([ubar[t] for t in range(n_t)], src_terms)
    prob = cp.Problem(cp.Minimize(cp.sum(s1) + cp.sum(s2)), cons)
    prob.solve(solver=solver)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise InputError(f"oracle solve failed: {prob.status}")

    rho = np.vstack([mu] + ([rho_int.value] if n_t > 1 else []) + [nu])
    mids = 0.5 * (rho[:-1] + rho[1:])
    uu = u.value
    bias = float(eps * np.sum(dt * scale * uu**2 / (mids[:, dst] + eps) ** 2))
    if symmetric:
        bias += float(eps * np.sum(dt * scale * uu**2 / (mids[:, src] + eps) ** 2))
    else:
        bias += float(eps * np.sum(dt * scale * ubar.value**2 / (mids[:, src] + eps) ** 2))
    obj = float(prob.value)
    return SmoothedResult(obj, float(np.sqrt(max(obj, 0.0))), eps, bias, rho, prob.status)


def dense_projection(x, A, b):
    """Least-squares projection of ``x`` onto ``{A x = b}`` by full factorisation.

    Uses the minimum-norm correction, so rank-deficient ``A`` with consistent
    ``b`` is fine.
    """
    A = np.asarray(A.todense() if hasattr(A, "todense") else A, dtype=np.float64)
    if A.shape[0] > MAX_ROWS:
        raise ScaleExceeded(f"dense projection limited to {MAX_ROWS} rows")
    x = np.asarray(x, dtype=np.float64)
    corr, *_ = np.linalg.lstsq(A, A @ x - np.asarray(b, dtype=np.float64), rcond=None)
    return x - corr
