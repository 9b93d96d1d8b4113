"""Reproducible example data for tests, benchmarks and the CLI."""

from __future__ import annotations

import numpy as np

from .graph import grid_graph, layered_product

__all__ = ["two_channel_bumps", "GAMMA_SWEEP"]

GAMMA_SWEEP = (1e-4, 1e-2, 1.0, 1e2)


def two_channel_bumps(n=32, width=0.08, floor=1e-3, centers=(0.25, 0.75)):
    """Two-channel densities on ``[0, 1]`` whose bumps swap channels.

    Channel 0 carries a bump at ``centers[0]`` under ``mu`` and at
    ``centers[1]`` under ``nu``; channel 1 the reverse.  Each channel holds
    mass 1/2 at both ends, so the endpoints can be joined either by moving
    mass in space or by trading it between channels.

    Returns
    -------
    (geometry, mu, nu)
        A ``LayeredGraph`` on the ``n``-cell grid (spacing ``1/n``) and two
        ``(2, n)`` arrays.
    """
    x = (np.arange(n) + 0.5) / n

    def bump(c):
        return np.exp(-((x - c) ** 2) / (2 * width**2)) + floor

    a, b = centers
    mu = np.stack([bump(a), bump(b)])
    nu = np.stack([bump(b), bump(a)])
    mu /= 2 * mu.sum(axis=1, keepdims=True)
    nu /= 2 * nu.sum(axis=1, keepdims=True)
    return layered_product(grid_graph([n], 1.0 / n), M=2), mu, nu
