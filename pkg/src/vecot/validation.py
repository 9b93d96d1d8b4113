"""Input checks shared by the estimator facade and the CLI."""

from __future__ import annotations

import numpy as np

from .exceptions import BadGamma, BadTimeGrid, DimensionMismatch, InputError, MarginalMismatch

__all__ = ["check_mass", "check_gamma", "check_n_t", "check_times", "frame_times"]


def check_mass(x, n: int, channels: int | None = None, tol: float = 1e-10, name="mass") -> np.ndarray:
    """Validate a (vector) mass distribution and return it as a float array.

    The result has shape ``(n,)``, or ``(channels, n)`` when ``channels`` is
    given.  Entries must be finite and nonnegative with total mass 1.
    """
    arr = np.asarray(x, dtype=np.float64)
    expected = (n,) if channels is None else (channels, n)
    if arr.size != int(np.prod(expected)):
        raise DimensionMismatch(f"{name} has {arr.size} entries, expected shape {expected}")
    arr = arr.reshape(expected)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    if np.any(arr < 0):
        raise MarginalMismatch(f"{name} has negative entries")
    if abs(arr.sum() - 1.0) > tol:
        raise MarginalMismatch(f"{name} sums to {arr.sum():.15g}, not 1")
    return arr


def check_gamma(gamma) -> float:
    try:
        gamma = float(gamma)
    except (TypeError, ValueError) as exc:
        raise BadGamma(f"gamma must be a number, got {gamma!r}") from exc
    if not (np.isfinite(gamma) and gamma > 0):
        raise BadGamma(f"gamma must be positive, got {gamma!r}")
    return gamma


def check_n_t(n_t) -> int:
    if isinstance(n_t, bool) or not float(n_t).is_integer() or n_t < 2:
        raise BadTimeGrid(f"n_t must be an integer >= 2, got {n_t!r}")
    return int(n_t)


def check_times(times) -> np.ndarray:
    t = np.atleast_1d(np.asarray(times, dtype=np.float64))
    if t.ndim != 1 or np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > 1):
        raise InputError("times must be a 1-D array with entries in [0, 1]")
    return t


def frame_times(count: int) -> np.ndarray:
    """``count`` equispaced interior times; 9 frames give 0.1, ..., 0.9."""
    if count < 1:
        raise InputError("frame count must be positive")
    return np.arange(1, count + 1) / (count + 1)
