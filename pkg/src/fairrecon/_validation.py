"""Input checking shared by the estimators and the functional API."""

import numbers

import numpy as np
from sklearn.utils import check_array, check_random_state

from .exceptions import DimensionError

PROB_TOL = 1e-12


def check_probability_vector(p, name="p", tol=PROB_TOL):
    p = check_array(np.asarray(p, dtype=float), ensure_2d=False, ensure_min_samples=1)
    if p.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {p.shape}")
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError(f"{name} sums to {p.sum():.15g}, not 1")
    return p


def check_stochastic_matrix(m, name="matrix", tol=PROB_TOL):
    m = check_array(np.asarray(m, dtype=float))
    if np.any(m < 0):
        raise ValueError(f"{name} has negative entries")
    bad = np.flatnonzero(np.abs(m.sum(axis=1) - 1.0) > tol)
    if bad.size:
        raise ValueError(f"{name} rows {bad.tolist()} do not sum to 1")
    return m


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def chain_rng(seed, index):
    """Generator for one independent substream, keyed by (seed, index)."""
    if seed is None:
        return np.random.default_rng()
    return np.random.default_rng([int(seed), int(index)])


__all__ = [
    "PROB_TOL",
    "chain_rng",
    "check_positive",
    "check_probability_vector",
    "check_random_state",
    "check_stochastic_matrix",
]
