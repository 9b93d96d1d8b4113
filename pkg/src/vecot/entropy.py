"""Entropy gradient flow in the symmetric graph transport geometry.

The flow is ``rho' = -div(A(rho)^{-1} grad log rho)`` with the per-edge
mobility ``A_k = 1/rho[dst_k] + 1/rho[src_k]``.  It is a nonlinear cousin of
the heat equation: mass still diffuses toward uniform, but with a
density-dependent rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, InputError, NonpositiveEntry, StepUnderflow
from .graph import Graph, div, grad

__all__ = ["FlowState", "entropy", "flow_rhs", "integrate", "MIN_STEP"]

MIN_STEP = 1e-12
# Entropy may dip by rounding noise near equilibrium; anything larger is rejected.
_ENTROPY_SLACK = 1e-14


@dataclass(frozen=True)
class FlowState:
    rho: np.ndarray
    t: float
    entropy: float


def _positive(rho, n=None) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.float64).ravel()
    if n is not None and rho.size != n:
        raise DimensionMismatch(f"density has {rho.size} entries, graph has {n} nodes")
    if not np.all(np.isfinite(rho)):
        raise InputError("density must be finite")
    if np.any(rho <= 0):
        raise NonpositiveEntry("density must be strictly positive")
    return rho


def entropy(rho) -> float:
    """``S(rho) = -sum rho log rho`` for a strictly positive density."""
    rho = _positive(rho)
    return float(-np.sum(rho * np.log(rho)))


def flow_rhs(g: Graph, rho) -> np.ndarray:
    """Right-hand side of the entropy gradient flow at ``rho``.

    Examples
    --------
    >>> from vecot.graph import build_graph
    >>> flow_rhs(build_graph([(0, 1, 1.0)]), [0.9, 0.1]).round(5)
    array([-0.19775,  0.19775])
    """
    rho = _positive(rho, g.n)
    mobility = 1.0 / (1.0 / rho[g.dst] + 1.0 / rho[g.src])
    return -div(g, mobility * grad(g, np.log(rho)))


def integrate(g: Graph, rho0, h: float, steps: int) -> list[FlowState]:
    """Explicit Euler with step halving.

    A step is retried at half the size whenever it would produce a
    nonpositive entry or lower the entropy.  Each accepted step starts again
    from ``h``.  Returns ``steps + 1`` states including the initial one.

    Raises
    ------
    StepUnderflow
        If a step has to shrink below ``1e-12``.
    """
    if not (np.isfinite(h) and h > 0):
        raise InputError("step h must be positive")
    if steps < 0:
        raise InputError("steps must be nonnegative")
    rho = _positive(rho0, g.n)
    if abs(rho.sum() - 1.0) > 1e-10:
        raise InputError("initial density must sum to 1")
    t, S = 0.0, entropy(rho)
    states = [FlowState(rho.copy(), t, S)]
    for _ in range(steps):
        rate = flow_rhs(g, rho)
        step = h
        while True:
            trial = rho + step * rate
            if np.all(trial > 0):
                S_trial = float(-np.sum(trial * np.log(trial)))
                if S_trial >= S - _ENTROPY_SLACK:
                    break
            step *= 0.5
            if step < MIN_STEP:
                raise StepUnderflow(f"step fell below {MIN_STEP:g} at t={t:.6g}")
        rho, S, t = trial, S_trial, t + step
        states.append(FlowState(rho.copy(), t, S))
    return states
