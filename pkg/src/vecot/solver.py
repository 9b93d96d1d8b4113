"""First-order primal-dual machinery for the dynamic transport programs.

Problems are handled in the form ``min_x G(x) + F(K x + k0)`` where ``G`` is
the indicator of an affine set (continuity equation plus boundary values) and
``F`` is a separable sum of perspective terms ``a * sum(q**2) / r``.  The
primal step is an exact Euclidean projection, the dual step uses the closed
form prox of the perspective through Moreau's identity.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import CGStall, InputError, MaxIterationsExceeded, NonconvergentRootFind

__all__ = [
    "SolverConfig",
    "SolveStats",
    "EnergyTerm",
    "prox_perspective",
    "prox_perspective_grouped",
    "AffineProjector",
    "StaggeredProjector",
    "project_continuity",
    "estimate_norm",
    "pdhg",
    "pdhg_solve",
]

_NEWTON_MAX = 200


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``tau``/``sigma`` left as ``None`` are derived from a power-iteration
    estimate of ``||K||`` so that ``tau * sigma * ||K||**2 <= 1``; ``step_ratio``
    sets ``tau / sigma`` in that case.
    """

    max_iters: int = 100_000
    tau: Optional[float] = None
    sigma: Optional[float] = None
    step_ratio: float = 1.0
    feasibility_tol: float = 1e-6
    objective_tol: float = 1e-7
    objective_window: int = 50
    residual_tol: float = 1e-6
    projection: str = "direct"
    cg_tol: float = 1e-12
    cg_max_iters: int = 5000
    seed: int = 0
    check_every: int = 10
    step_rule: str = "primal-weight"
    step_period: int = 100
    threads: Optional[int] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise InputError("max_iters must be >= 1")
        for name in ("feasibility_tol", "objective_tol", "residual_tol", "cg_tol", "step_ratio"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        if (self.tau is None) != (self.sigma is None):
            raise InputError("give both tau and sigma or neither")
        if self.tau is not None and not (self.tau > 0 and self.sigma > 0):
            raise InputError("step sizes must be positive")
        if self.projection not in ("direct", "cg"):
            raise InputError(f"unknown projection method {self.projection!r}")
        if self.step_rule not in ("fixed", "primal-weight", "balance"):
            raise InputError(f"unknown step rule {self.step_rule!r}")
        if self.objective_window < 1 or self.check_every < 1:
            raise InputError("objective_window and check_every must be >= 1")

    def replace(self, **changes) -> "SolverConfig":
        return SolverConfig(**{**asdict(self), **changes})


@dataclass
class SolveStats:
    iterations: int = 0
    converged: bool = False
    objective: float = float("nan")
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    continuity_residual: float = float("nan")
    nonnegativity_violation: float = float("nan")
    relative_objective_change: float = float("nan")
    energy_trace: list = field(default_factory=list)
    cg_iterations: int = 0
    wall_time: float = 0.0
    operator_norm: float = float("nan")
    tau: float = float("nan")
    sigma: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EnergyTerm:
    """Descriptor of one family of kinetic-energy terms.

    ``flux`` names the flux block (``u``, ``ubar``, ``p``, ``pbar``), ``stencil``
    which endpoint mass divides it (``sink``, ``source`` or ``both``) and
    ``scale`` the multiplier (1 for spatial transport, gamma for mutation).
    """

    flux: str
    stencil: str
    scale: float = 1.0

    def __post_init__(self):
        if self.stencil not in ("sink", "source", "both"):
            raise InputError(f"unknown stencil {self.stencil!r}")
        if not self.scale > 0:
            raise InputError("energy scale must be positive")


# --------------------------------------------------------------------------
# perspective prox
# --------------------------------------------------------------------------
def prox_perspective_grouped(r_bar, q_bar, group, tau, a, nonneg=False, r0=None):
    """Vectorised prox of ``sum_g a_g * sum_{i in g} q_i**2 / r_g``.

    Parameters
    ----------
    r_bar : ndarray, shape (G,)
    q_bar : ndarray, shape (Q,)
    group : ndarray of int, shape (Q,)
        Group index of each ``q`` entry.
    tau : float
        Prox step.
    a : float or ndarray, shape (G,)
        Positive scales.
    nonneg : bool
        Also constrain ``q >= 0``.
    r0 : ndarray, shape (G,), optional
        Starting guess for the Newton iteration (e.g. the previous root).

    Returns
    -------
    r, q : ndarray
        Minimiser of ``F + (|r - r_bar|^2 + |q - q_bar|^2) / (2 tau)`` with the
        perspective convention ``0/0 = 0`` and ``q != 0, r = 0 -> +inf``.
    """
    r_bar = np.asarray(r_bar, dtype=np.float64)
    q_bar = np.asarray(q_bar, dtype=np.float64)
    if nonneg:
        q_bar = np.maximum(q_bar, 0.0)
    G = r_bar.size
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), (G,))
    beta = 2.0 * a * tau
    c = a * tau * np.bincount(group, q_bar * q_bar, G)

    # optimality: (r - r_bar) (r + beta)^2 = c on r >= max(r_bar, 0).
    # g is increasing and convex there, so Newton from any point of the
    # bracket lands above the root after one step and then decreases
    # monotonically.  r = 0 when g(0) >= c.
    r = np.maximum(r_bar, 0.0)
    active = (c > 0) & (-r_bar * beta * beta < c)
    n_active = np.count_nonzero(active)
    if n_active:
        every = n_active == G
        rb = r_bar if every else r_bar[active]
        be = beta if every else beta[active]
        cc = c if every else c[active]
        lo = np.maximum(rb, 0.0)
        hi = lo + np.minimum(np.cbrt(cc), cc / (be * be))
        if r0 is None:
            x = hi
        else:
            x = np.clip(r0 if every else r0[active], lo, hi)
        for _ in range(_NEWTON_MAX):
            s = x + be
            d = x - rb
            step = (d * s * s - cc) / (s * (s + 2.0 * d))
            x = x - step
            if np.max(np.abs(step) / np.maximum(1.0, x)) <= 1e-13:
                break
        else:
            raise NonconvergentRootFind("Newton iteration for perspective prox did not converge")
        np.maximum(x, 0.0, out=x)
        if every:
            r = x
        else:
            r[active] = x
    r[(c > 0) & ~active] = 0.0
    rg = r[group]
    q = rg * q_bar / (rg + beta[group])
    return r, q


def prox_perspective(rho_bar, q_bar, tau, a=1.0, nonneg=False):
    """Prox of ``(rho, q) -> a * sum(q**2) / rho`` at a single point.

    Returns ``(rho, q)`` with ``rho`` a float and ``q`` an array like ``q_bar``.
    """
    if not tau > 0 or not a > 0:
        raise InputError("tau and a must be positive")
    q_bar = np.atleast_1d(np.asarray(q_bar, dtype=np.float64))
    r, q = prox_perspective_grouped(
        np.array([rho_bar], dtype=np.float64), q_bar, np.zeros(q_bar.size, np.int64), tau, a, nonneg
    )
    return float(r[0]), q


def perspective_value(r, q, group, a):
    """``sum_g a_g * sum q**2 / r_g``; infinite outside the domain."""
    Q = np.bincount(group, q * q, r.size)
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), r.shape)
    if np.any(r < 0) or np.any((r == 0) & (Q > 0)):
        return float("inf")
    pos = r > 0
    return float(np.sum(a[pos] * Q[pos] / r[pos]))


# --------------------------------------------------------------------------
# affine projection
# --------------------------------------------------------------------------
class AffineProjector:
    """Euclidean projection onto ``{x : A x = b}``, ``A`` of full row rank.

    ``method='direct'`` factorises ``A A^T`` once; ``method='cg'`` runs
    conjugate gradients on the normal equations, warm-started from the last
    multiplier.
    """

    def __init__(self, A, b, method="direct", cg_tol=1e-12, cg_max_iters=5000):
        self.A = sp.csr_matrix(A)
        self.AT = sp.csr_matrix(self.A.T)
        self.b = np.asarray(b, dtype=np.float64)
        self.method = method
        self.cg_tol = cg_tol
        self.cg_max_iters = cg_max_iters
        self.cg_iterations = 0
        self._normal = sp.csc_matrix(self.A @ self.AT)
        self._lam = np.zeros(self.A.shape[0])
        self._lu = None
        if method == "direct":
            self._lu = spla.splu(self._normal, permc_spec="MMD_AT_PLUS_A")
        elif method != "cg":
            raise InputError(f"unknown projection method {method!r}")
        self._bnorm = float(np.linalg.norm(self.b))

    def residual(self, x):
        return self.A @ x - self.b

    def project(self, x):
        r = self.residual(x)
        if self._lu is not None:
            lam = self._lu.solve(r)
        else:
            lam = self._cg(r)
        return x - self.AT @ lam

    def _cg(self, r):
        atol = self.cg_tol * (1.0 + self._bnorm)
        lam = self._lam
        res = r - self._normal @ lam
        p = res.copy()
        rr = res @ res
        it = 0
        best = np.sqrt(rr)
        stall = 0
        while np.sqrt(rr) > atol:
            if it >= self.cg_max_iters:
                raise CGStall(
                    f"CG did not reach {atol:.2e} in {it} iterations", it, float(np.sqrt(rr))
                )
            Ap = self._normal @ p
            alpha = rr / (p @ Ap)
            lam = lam + alpha * p
            res = res - alpha * Ap
            rr_new = res @ res
            p = res + (rr_new / rr) * p
            rr = rr_new
            it += 1
            cur = np.sqrt(rr)
            if cur < 0.999 * best:
                best, stall = cur, 0
            else:
                stall += 1
                if stall > 200:
                    raise CGStall(f"CG residual plateau at {cur:.2e}", it, float(cur))
        self.cg_iterations += it
        self._lam = lam
        return lam


class StaggeredProjector:
    """Projection onto the staggered continuity set using its Kronecker structure.

    For constraints ``(T kron I) rho - dt (I kron Dw) flux = b`` the normal
    matrix is ``P kron I + c (I kron L)`` with ``P`` the path Laplacian in time
    and ``L = Dw Dw^T``.  An orthonormal type-II DCT along time diagonalises
    ``P``; each frequency then needs one solve with ``lam_k I + c L``, all
    factorised once.  The zero frequency is singular (total mass) and is
    grounded at node 0.  Small graphs use a dense eigendecomposition of
    ``L`` instead of per-frequency factorisations.
    """

    DENSE_MAX = 256

    def __init__(self, A, b, n_t, laplacian, c):
        from scipy.fft import dct, idct

        self._dct, self._idct = dct, idct
        self.A = sp.csr_matrix(A)
        self.AT = sp.csr_matrix(self.A.T)
        self.b = np.asarray(b, dtype=np.float64)
        self.n_t = n_t
        self.N = laplacian.shape[0]
        self.cg_iterations = 0
        lam = 4.0 * np.sin(np.pi * np.arange(n_t) / (2.0 * n_t)) ** 2
        self._solvers = []
        self._eig = None
        if self.N <= self.DENSE_MAX:
            ell, U = np.linalg.eigh(np.asarray(laplacian.todense()) * c)
            denom = lam[:, None] + ell[None, :]
            # the single zero mode (constant in time and space) is the mass constraint
            inv = np.zeros_like(denom)
            nz = denom > 1e-12 * max(1.0, denom.max())
            inv[nz] = 1.0 / denom[nz]
            self._eig = (U, inv)
            return
        L = sp.csc_matrix(laplacian) * c
        eye = sp.identity(self.N, format="csc")
        for k in range(n_t):
            if k == 0:
                self._solvers.append(spla.splu(sp.csc_matrix(L[1:, 1:])))
            else:
                self._solvers.append(spla.splu(sp.csc_matrix(lam[k] * eye + L)))

    def residual(self, x):
        return self.A @ x - self.b

    def solve_normal(self, r):
        r = r.reshape(self.n_t, self.N)
        rh = self._dct(r, type=2, axis=0, norm="ortho")
        if self._eig is not None:
            U, inv = self._eig
            out = ((rh @ U) * inv) @ U.T
            return self._idct(out, type=2, axis=0, norm="ortho").ravel()
        out = np.empty_like(rh)
        out[0, 0] = 0.0
        if self.N > 1:
            out[0, 1:] = self._solvers[0].solve(rh[0, 1:])
        for k in range(1, self.n_t):
            out[k] = self._solvers[k].solve(rh[k])
        return self._idct(out, type=2, axis=0, norm="ortho").ravel()

    def project(self, x):
        return x - self.AT @ self.solve_normal(self.residual(x))


def project_continuity(x, problem, cfg: SolverConfig | None = None):
    """Project stacked transport variables onto the continuity/boundary set."""
    cfg = cfg or SolverConfig()
    proj = problem.projector(cfg.projection, cfg.cg_tol, cfg.cg_max_iters)
    return proj.project(np.asarray(x, dtype=np.float64))


def estimate_norm(K, seed=0, iters=100, tol=1e-10):
    """Power-iteration estimate of the spectral norm of a (sparse) matrix."""
    K = sp.csr_matrix(K)
    if K.shape[0] == 0 or K.shape[1] == 0 or K.nnz == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(K.shape[1])
    v /= np.linalg.norm(v)
    KT = K.T.tocsr()
    est = 0.0
    for _ in range(iters):
        w = KT @ (K @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        new = np.sqrt(nw)
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    # power iteration approaches from below
    return est * (1 + 1e-6)


# --------------------------------------------------------------------------
# generic PDHG loop
# --------------------------------------------------------------------------
def pdhg(x0, y0, K, prox_g, prox_fstar, tau, sigma, max_iters, check, check_every=10,
         rule="primal-weight", period=100, smoothing=0.5, freeze_after=None,
         balance=1.5, alpha=0.5, eta=0.95):
    """Chambolle-Pock iteration for ``min_x G(x) + F(K x)``.

    ``prox_g(v, tau)`` and ``prox_fstar(v, sigma)`` are the proximal maps.
    ``tau * sigma`` stays fixed; the ratio is tuned by ``rule``:

    ``"fixed"``          never changed.
    ``"primal-weight"``  every ``period`` iterations the weight
                         ``omega = sqrt(sigma / tau)`` moves (log-smoothed)
                         towards ``|y_k - y_{k-period}| / |x_k - x_{k-period}|``.
    ``"balance"``        residual balancing with geometrically decaying
                         adjustments.

    Tuning stops after ``freeze_after`` iterations.
    ``check(it, x, y, p_res, d_res)`` is called every ``check_every``
    iterations (and at the last one) and returns ``True`` to stop.
    Returns ``(x, y, iterations, stopped, (tau, sigma))``.
    """
    KT = K.T.tocsr()
    x, y = x0.copy(), y0.copy()
    KTy = KT @ y
    prod = tau * sigma
    x_ref, y_ref = x.copy(), y.copy()
    freeze_after = max_iters if freeze_after is None else freeze_after
    it = 0
    while it < max_iters:
        it += 1
        x_new = prox_g(x - tau * KTy, tau)
        dx = x - x_new
        Kdx = K @ dx
        y_new = prox_fstar(y + sigma * (K @ x_new - Kdx), sigma)
        dy = y - y_new
        KTy_new = KT @ y_new
        x, y = x_new, y_new
        do_check = it % check_every == 0 or it == max_iters
        tuning = it <= freeze_after
        if do_check or (rule == "balance" and tuning):
            p_res = np.linalg.norm(dx / tau - (KTy - KTy_new))
            d_res = np.linalg.norm(dy / sigma - Kdx)
        KTy = KTy_new
        if do_check and check(it, x, y, p_res, d_res):
            return x, y, it, True, (tau, sigma)
        if not tuning:
            continue
        if rule == "primal-weight" and it % period == 0:
            mx = np.linalg.norm(x - x_ref)
            my = np.linalg.norm(y - y_ref)
            if mx > 1e-14 and my > 1e-14:
                omega = np.sqrt(sigma / tau)
                omega = np.exp(smoothing * np.log(my / mx) + (1 - smoothing) * np.log(omega))
                tau, sigma = np.sqrt(prod) / omega, np.sqrt(prod) * omega
            x_ref, y_ref = x.copy(), y.copy()
        elif rule == "balance" and alpha > 1e-8:
            if p_res > balance * d_res:
                tau, sigma = tau / (1 - alpha), sigma * (1 - alpha)
                alpha *= eta
            elif d_res > balance * p_res:
                tau, sigma = tau * (1 - alpha), sigma / (1 - alpha)
                alpha *= eta
    return x, y, it, False, (tau, sigma)


def pdhg_solve(problem, cfg: SolverConfig | None = None, x0=None, y0=None):
    """Solve an assembled transport program.

    Returns ``(x, stats)`` where ``x`` is the stacked variable vector (interior
    densities followed by flux blocks) and ``stats`` a :class:`SolveStats`.
    ``stats.converged`` is ``False`` (with a :class:`MaxIterationsExceeded`
    warning) when ``max_iters`` was hit first.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    K, k0 = problem.K, problem.k0
    proj = problem.projector(cfg.projection, cfg.cg_tol, cfg.cg_max_iters)
    norm = estimate_norm(K, cfg.seed)
    if cfg.tau is not None:
        tau, sigma = cfg.tau, cfg.sigma
        if norm > 0 and tau * sigma * norm**2 > 1 + 1e-9:
            raise InputError(f"tau*sigma*||K||^2 = {tau * sigma * norm**2:.3g} > 1")
    else:
        tau = cfg.step_ratio / max(norm, 1e-300)
        sigma = 1.0 / (cfg.step_ratio * max(norm, 1e-300))

    groups, a, nonneg_r = problem.groups, problem.group_scale, problem.nonneg_q
    n_r = problem.n_groups

    last_root = [None]

    def prox_fstar(v, s):
        # Moreau: prox_{sF*}(v) = v - s prox_{F/s}(v/s)
        w = v / s
        r, q = prox_perspective_grouped(
            w[:n_r], w[n_r:], groups, 1.0 / s, a, nonneg_r, last_root[0]
        )
        last_root[0] = r
        return v - s * np.concatenate([r, q])

    def prox_fstar_affine(v, s):
        return prox_fstar(v + s * k0, s)

    def prox_g(v, _t):
        return proj.project(v)

    x = problem.initial_point() if x0 is None else np.array(x0, dtype=np.float64)
    x = proj.project(x)
    y = np.zeros(K.shape[0]) if y0 is None else np.array(y0, dtype=np.float64)

    stats = SolveStats(operator_norm=norm, tau=tau, sigma=sigma)
    history: list[tuple[int, float]] = []

    def check(it, x, y, p_res, d_res):
        z = K @ x + k0
        obj, viol = problem.evaluate_copies(z)
        p_res = p_res / max(1.0, np.linalg.norm(x))
        d_res = d_res / max(1.0, np.linalg.norm(y))
        history.append((it, obj))
        stats.energy_trace.append((it, obj))
        rel = float("inf")
        while len(history) > 1 and history[1][0] <= it - cfg.objective_window:
            history.pop(0)
        if history[0][0] <= it - cfg.objective_window:
            rel = abs(obj - history[0][1]) / max(abs(obj), 1e-12)
        stats.iterations = it
        stats.objective = obj
        stats.primal_residual = float(p_res)
        stats.dual_residual = float(d_res)
        stats.nonnegativity_violation = viol
        stats.relative_objective_change = rel
        return (
            viol <= cfg.feasibility_tol
            and rel <= cfg.objective_tol
            and p_res <= cfg.residual_tol
            and d_res <= cfg.residual_tol
        )

    x, y, iters, done, (tau_end, sigma_end) = pdhg(
        x, y, K, prox_g, prox_fstar_affine, tau, sigma, cfg.max_iters, check,
        cfg.check_every, cfg.step_rule, cfg.step_period,
    )
    stats.tau, stats.sigma = tau_end, sigma_end
    stats.converged = bool(done)
    stats.continuity_residual = float(np.max(np.abs(proj.residual(x)), initial=0.0))
    stats.cg_iterations = proj.cg_iterations
    stats.wall_time = time.perf_counter() - t0
    if len(stats.energy_trace) > 200:
        step = int(np.ceil(len(stats.energy_trace) / 200))
        stats.energy_trace = stats.energy_trace[::step] + [stats.energy_trace[-1]]
    if not done:
        warnings.warn(
            f"stopped at max_iters={cfg.max_iters} before meeting tolerances",
            MaxIterationsExceeded,
            stacklevel=2,
        )
    return x, y, stats
