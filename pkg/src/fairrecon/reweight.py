"""Group reweighting that makes posterior sampling satisfy RDP on a partition.

The solver raises the weight of every group whose self-reconstruction rate is
within a factor sqrt(r) of the worst one by r**(1/4), where r is the current
max/min ratio of the rates, and renormalizes. Each such step can only lower the
largest rate and raise the smallest, so the ratio is non-increasing.
"""

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import PROB_TOL
from .exceptions import DimensionError
from .metrics import joint_group_matrix
from .model import DiscreteModel
from .posterior import ExactPosterior

logger = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-12


def _partition_matrix(partition, n):
    if not partition.is_partition:
        raise ValueError("reweighting needs a partition")
    G = partition.membership(n)
    if not np.all(G.sum(axis=1) == 1):
        raise ValueError("groups do not partition the states")
    return G


def _check_weights(lam, k):
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (k,):
        raise DimensionError(f"need {k} weights, got shape {lam.shape}")
    if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise ValueError("weights must be positive and finite")
    return lam / lam.sum()


def reweighted_model(model, partition, lam):
    """Prior ``sum_i lam_i p(x | x in c_i)``: group masses become ``lam``."""
    G = _partition_matrix(partition, model.n_states)
    masses = model.prior @ G
    if np.any(masses <= 0):
        raise ValueError(f"group {partition.names[int(np.argmin(masses))]!r} has zero mass")
    lam = _check_weights(lam, partition.k)
    scale = G @ (lam / masses)
    return DiscreteModel(model.prior * scale, model.states)


@dataclass
class AlphaVector:
    alpha: np.ndarray
    ratio: float


def alpha_under_weights(model, channel, partition, lam, truth="reweighted"):
    """Self-reconstruction rates of posterior sampling under the reweighted prior.

    ``truth`` picks where x* comes from: ``"reweighted"`` (the reweighted prior)
    or ``"original"``. The rates condition on x*'s group, and reweighting keeps
    every within-group conditional, so both choices give the same rates.
    """
    if truth not in ("reweighted", "original"):
        raise ValueError(f"unknown truth mode {truth!r}")
    world = reweighted_model(model, partition, lam)
    kernel = ExactPosterior(world).fit(channel)
    truth_prior = world if truth == "reweighted" else model
    J = joint_group_matrix(truth_prior, channel, kernel, partition)
    alpha = np.diag(J.entries) / J.truth_masses
    return AlphaVector(alpha, float(alpha.max() / alpha.min()))


@dataclass
class SolverResult:
    weights: np.ndarray
    alpha: np.ndarray
    ratio: float
    converged: bool
    n_iter: int
    trace: list = field(default_factory=list)
    monotonicity_violations: list = field(default_factory=list)

    def trace_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        k = len(self.weights)
        w.writerow(["iteration", *(f"lambda_{i}" for i in range(k)), *(f"alpha_{i}" for i in range(k)), "ratio"])
        for row in self.trace:
            w.writerow([row["iteration"], *map(repr, row["lambda"]), *map(repr, row["alpha"]), repr(row["ratio"])])
        return buf.getvalue()


def solve_rdp_weights(model, channel, partition, tol=1e-6, max_iter=10_000, damping=1.0, init=None, truth="reweighted"):
    """Iterate the group-boosting update until max/min alpha <= 1 + tol.

    ``damping`` in (0, 1] scales the exponent of the boost factor. Running out
    of iterations is not an error: the best iterate is returned with
    ``converged=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    k = partition.k
    lam = np.full(k, 1.0 / k) if init is None else _check_weights(init, k)
    trace, violations = [], []
    best = None
    prev = None
    for it in range(max_iter + 1):
        av = alpha_under_weights(model, channel, partition, lam, truth)
        trace.append({"iteration": it, "lambda": lam.tolist(), "alpha": av.alpha.tolist(), "ratio": av.ratio})
        if best is None or av.ratio < best[2]:
            best = (lam.copy(), av.alpha, av.ratio, it)
        if prev is not None:
            hi_up = av.alpha.max() - prev.max()
            lo_down = prev.min() - av.alpha.min()
            if hi_up > MONOTONE_SLACK or lo_down > MONOTONE_SLACK:
                violations.append(it)
                logger.warning("iteration %d: max alpha rose by %.3g or min alpha fell by %.3g", it, hi_up, lo_down)
        if av.ratio <= 1 + tol:
            return SolverResult(lam, av.alpha, av.ratio, True, it, trace, violations)
        if it == max_iter:
            break
        r = av.ratio
        boost = av.alpha <= np.sqrt(r) * av.alpha.min()
        lam = np.where(boost, lam * r ** (damping / 4), lam)
        lam /= lam.sum()
        if np.any(lam <= 0) or abs(lam.sum() - 1) > PROB_TOL:
            raise FloatingPointError("weights left the open simplex")
        prev = av.alpha
    lam, alpha, ratio, _ = best
    return SolverResult(lam, alpha, ratio, False, max_iter, trace, violations)


class RDPReweighter(TransformerMixin, BaseEstimator):
    """Fit group weights for posterior sampling to satisfy RDP on a partition.

    ``fit(model, channel, partition)`` sets ``weights_``, ``alpha_``,
    ``ratio_``, ``converged_``, ``n_iter_`` and ``trace_``;
    ``transform(model)`` returns the reweighted prior.
    """

    def __init__(self, tol=1e-6, max_iter=10_000, damping=1.0, truth="reweighted"):
        self.tol = tol
        self.max_iter = max_iter
        self.damping = damping
        self.truth = truth

    def fit(self, model, channel, partition):
        res = solve_rdp_weights(
            model, channel, partition, tol=self.tol, max_iter=self.max_iter, damping=self.damping, truth=self.truth
        )
        self.partition_ = partition
        self.weights_ = res.weights
        self.alpha_ = res.alpha
        self.ratio_ = res.ratio
        self.converged_ = res.converged
        self.n_iter_ = res.n_iter
        self.trace_ = res.trace
        self.result_ = res
        return self

    def transform(self, model):
        check_is_fitted(self, "weights_")
        return reweighted_model(model, self.partition_, self.weights_)

    def fit_transform(self, model, channel, partition):
        return self.fit(model, channel, partition).transform(model)
