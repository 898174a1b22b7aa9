"""Posterior computation, reconstruction kernels and annealed Langevin sampling.

Discrete reconstruction kernels follow the scikit-learn estimator protocol:
hyperparameters go to ``__init__``, ``fit(channel)`` tabulates the conditional
law of the reconstruction given each measurement symbol into
``conditional_`` (shape ``(n_symbols, n_states)``), and ``predict_proba`` /
``sample`` read from it.  Rows for measurements the kernel cannot condition on
are NaN and ``reachable_`` is False there.
"""

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import chain_rng, check_positive, check_stochastic_matrix
from .exceptions import DimensionError, DivergenceError, UnreachableMeasurementError
from .model import DiscreteChannel, DiscreteModel, GaussianLinearChannel, induced_measurement_distribution

TIE_TOL = 1e-12


def posterior_matrix(prior, channel):
    """Posterior p(x|y) for every symbol, shape (n_symbols, n_states).

    Returns ``(post, psi)``; rows with ``psi == 0`` are NaN.
    """
    p = prior.prior if isinstance(prior, DiscreteModel) else np.asarray(prior, dtype=float)
    psi = induced_measurement_distribution(p, channel)
    joint = (p[:, None] * channel.kernel).T
    with np.errstate(invalid="ignore", divide="ignore"):
        post = joint / psi[:, None]
    post[psi <= 0] = np.nan
    return post, psi


def exact_posterior(prior, channel, y):
    """p(x | y) = p(x) pi(y|x) / psi(y) for one measurement symbol."""
    j = channel.symbol_index(y)
    p = prior.prior if isinstance(prior, DiscreteModel) else np.asarray(prior, dtype=float)
    if p.size != channel.n_inputs:
        raise DimensionError(f"prior has {p.size} states, channel expects {channel.n_inputs}")
    joint = p * channel.kernel[:, j]
    psi = joint.sum()
    if psi <= 0:
        raise UnreachableMeasurementError(y)
    return joint / psi


def _argmax_lowest(row):
    best = np.max(row)
    return int(np.flatnonzero(row >= best - TIE_TOL)[0])


def map_reconstruct(prior, channel, y):
    """Most probable state given ``y``; near-ties go to the lowest index."""
    return _argmax_lowest(exact_posterior(prior, channel, y))


class ReconstructionKernel(BaseEstimator):
    """Common surface of the discrete reconstruction kernels."""

    def _tabulate(self, channel):
        raise NotImplementedError

    def fit(self, channel, y=None):
        if not isinstance(channel, DiscreteChannel):
            raise TypeError("discrete reconstruction kernels need a DiscreteChannel")
        cond = self._tabulate(channel)
        self.conditional_ = cond
        self.reachable_ = ~np.isnan(cond).any(axis=1)
        self.n_symbols_, self.n_states_ = cond.shape
        self.channel_ = channel
        return self

    def _rows(self, Y):
        check_is_fitted(self, "conditional_")
        scalar = np.ndim(Y) == 0 and not isinstance(Y, (list, tuple))
        symbols = [Y] if scalar else list(Y)
        idx = np.array([self.channel_.symbol_index(s) for s in symbols], dtype=int)
        for s, j in zip(symbols, idx):
            if not self.reachable_[j]:
                raise UnreachableMeasurementError(s)
        return idx, scalar

    def predict_proba(self, Y):
        idx, scalar = self._rows(Y)
        out = self.conditional_[idx]
        return out[0] if scalar else out

    def sample(self, Y, random_state=None):
        """Draw one reconstruction per measurement symbol."""
        idx, scalar = self._rows(Y)
        rng = np.random.default_rng(random_state)
        cdf = np.cumsum(self.conditional_[idx], axis=1)
        u = rng.random(idx.size)
        draws = np.minimum((cdf < u[:, None]).sum(axis=1), self.n_states_ - 1)
        return int(draws[0]) if scalar else draws


class ExactPosterior(ReconstructionKernel):
    """Posterior sampling under an assumed discrete prior."""

    def __init__(self, prior=None):
        self.prior = prior

    def _tabulate(self, channel):
        if self.prior is None:
            raise ValueError("ExactPosterior needs an assumed prior")
        return posterior_matrix(self.prior, channel)[0]


class MapBaseline(ReconstructionKernel):
    """Deterministic argmax-posterior reconstruction."""

    def __init__(self, prior=None):
        self.prior = prior

    def _tabulate(self, channel):
        if self.prior is None:
            raise ValueError("MapBaseline needs an assumed prior")
        post, _ = posterior_matrix(self.prior, channel)
        out = np.full_like(post, np.nan)
        for j, row in enumerate(post):
            if not np.isnan(row).any():
                out[j] = 0.0
                out[j, _argmax_lowest(row)] = 1.0
        return out

    def predict(self, Y):
        idx, scalar = self._rows(Y)
        out = self.conditional_[idx].argmax(axis=1)
        return int(out[0]) if scalar else out


class FixedStochastic(ReconstructionKernel):
    """A user-supplied kernel ``matrix[y, x_hat]`` that ignores any prior."""

    def __init__(self, matrix=None):
        self.matrix = matrix

    def _tabulate(self, channel):
        m = check_stochastic_matrix(self.matrix, "kernel matrix")
        if m.shape[0] != channel.n_symbols:
            raise DimensionError(f"kernel has {m.shape[0]} rows, channel emits {channel.n_symbols} symbols")
        return m.copy()

    @classmethod
    def uniform(cls, n_symbols, n_states):
        return cls(np.full((n_symbols, n_states), 1.0 / n_states))

    @classmethod
    def random(cls, n_symbols, n_states, random_state=None, concentration=1.0):
        rng = np.random.default_rng(random_state)
        return cls(rng.dirichlet(np.full(n_states, concentration), size=n_symbols))


def as_fitted_kernel(kernel, channel):
    """Accept a fitted kernel, an unfitted one, or a raw matrix."""
    if isinstance(kernel, ReconstructionKernel):
        if getattr(kernel, "channel_", None) is channel:
            return kernel
        return kernel.fit(channel)
    return FixedStochastic(kernel).fit(channel)


def sample(kernel, channel, y, rng_seed=None, groups=None):
    """One reconstruction for measurement ``y``; with ``groups``, also its group names."""
    k = as_fitted_kernel(kernel, channel)
    x_hat = k.sample(y, random_state=rng_seed)
    if groups is None:
        return x_hat
    names = [n for n, m in zip(groups.names, groups.members) if x_hat in m]
    return x_hat, names


# --------------------------------------------------------------------------
# Continuous priors


def smoothed_score(mixture, sigma, x):
    """Gradient of log (mixture * N(0, sigma^2 I)) at ``x``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or mixture.dim == 1:
        xx = x.reshape(-1, 1)
    elif x.shape[-1] == mixture.dim:
        xx = x.reshape(-1, mixture.dim)
    else:
        raise DimensionError(f"points of dimension {x.shape[-1]} for a {mixture.dim}-D mixture")
    logc, var = mixture._component_logpdf(xx, sigma)
    resp = np.exp(logc - logc.max(axis=1, keepdims=True))
    resp /= resp.sum(axis=1, keepdims=True)
    diff = (mixture.means[None] - xx[:, None, :]) / var[None, :, None]
    return np.einsum("bk,bkd->bd", resp, diff).reshape(x.shape)


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric noise levels held for ``steps_per_level`` steps each.

    The step size at noise level sigma is ``gamma_end * (sigma / sigma_end)**2``.
    """

    sigma_start: float
    sigma_end: float
    total_steps: int
    gamma_end: float
    steps_per_level: int = 3

    def __post_init__(self):
        check_positive(self.sigma_start, "sigma_start")
        check_positive(self.sigma_end, "sigma_end")
        check_positive(self.gamma_end, "gamma_end")
        if self.sigma_start < self.sigma_end:
            raise ValueError("sigma_start must be >= sigma_end")
        if int(self.total_steps) != self.total_steps or self.total_steps < 0:
            raise ValueError("total_steps must be a non-negative integer")
        if int(self.steps_per_level) != self.steps_per_level or self.steps_per_level < 1:
            raise ValueError("steps_per_level must be a positive integer")

    @property
    def n_levels(self):
        return max(1, math.ceil(self.total_steps / self.steps_per_level))

    def level_sigmas(self):
        return np.geomspace(self.sigma_start, self.sigma_end, self.n_levels)

    def step_values(self):
        """Per-step ``(sigma_t, gamma_t)`` arrays of length ``total_steps``."""
        levels = np.arange(self.total_steps) // self.steps_per_level
        sig = self.level_sigmas()[levels]
        return sig, self.gamma_end * (sig / self.sigma_end) ** 2

    def to_dict(self):
        return {
            "sigma_start": self.sigma_start,
            "sigma_end": self.sigma_end,
            "total_steps": self.total_steps,
            "gamma_end": self.gamma_end,
            "steps_per_level": self.steps_per_level,
        }


def _langevin_batch(mixture, A, y, noise_var, schedule, seed, chains, likelihood_variance):
    dim = mixture.dim
    sig, gam = schedule.step_values()
    T = schedule.total_steps
    x = np.empty((len(chains), dim))
    xi = np.empty((len(chains), T, dim))
    for b, c in enumerate(chains):
        rng = chain_rng(seed, c)
        x[b] = schedule.sigma_start * rng.standard_normal(dim)
        xi[b] = rng.standard_normal((T, dim))
    for t in range(T):
        s, g = sig[t], gam[t]
        lik_var = noise_var + s**2 if likelihood_variance == "annealed" else s**2
        # overflow shows up as non-finite iterates and is raised below
        with np.errstate(over="ignore", invalid="ignore"):
            resid = np.einsum("ij,bj->bi", A, x) - y
            drift = smoothed_score(mixture, s, x) - np.einsum("ij,bi->bj", A, resid) / lik_var
            x = x + g * drift + math.sqrt(2 * g) * xi[:, t]
        if not np.all(np.isfinite(x)):
            bad = int(np.flatnonzero(~np.isfinite(x).all(axis=1))[0])
            raise DivergenceError(t, chains[bad])
    return x


def langevin_posterior_sample(
    mixture,
    channel,
    y,
    schedule,
    rng_seed=None,
    n_chains=None,
    batch_size=4096,
    likelihood_variance="annealed",
):
    """Annealed Langevin draws from the posterior of ``mixture`` given ``y``.

    Each step is ``x += gamma_t * (score(x; sigma_t) - A^T (A x - y) / v_t)
    + sqrt(2 gamma_t) * xi``. With ``likelihood_variance="annealed"`` (default)
    ``v_t = tau^2 + sigma_t^2`` where ``tau^2`` is the channel noise variance, so
    the chain targets the exact posterior as sigma_t shrinks; ``"schedule"``
    uses ``v_t = sigma_t^2``, appropriate for (nearly) noiseless channels.

    Chain ``i`` draws all its randomness from the substream ``(rng_seed, i)``,
    so results do not depend on ``batch_size``. Returns one point of shape
    ``(dim,)`` when ``n_chains`` is None, else ``(n_chains, dim)``.
    """
    if not isinstance(channel, GaussianLinearChannel):
        raise TypeError("Langevin posterior sampling needs a GaussianLinearChannel")
    if channel.n != mixture.dim:
        raise DimensionError(f"channel acts on dimension {channel.n}, prior has {mixture.dim}")
    if likelihood_variance not in ("annealed", "schedule"):
        raise ValueError(f"unknown likelihood_variance {likelihood_variance!r}")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (channel.m,):
        raise DimensionError(f"measurement has shape {y.shape}, channel emits ({channel.m},)")
    if rng_seed is None:
        rng_seed = int(np.random.SeedSequence().entropy % (2**63))
    n = 1 if n_chains is None else int(n_chains)
    out = np.empty((n, mixture.dim))
    for start in range(0, n, batch_size):
        chains = list(range(start, min(n, start + batch_size)))
        out[start : start + len(chains)] = _langevin_batch(
            mixture, channel.A, y, channel.noise_variance, schedule, rng_seed, chains, likelihood_variance
        )
    return out[0] if n_chains is None else out


class LangevinPosteriorSampler(BaseEstimator):
    """Estimator wrapper around :func:`langevin_posterior_sample`."""

    def __init__(self, mixture=None, schedule=None, random_state=0, likelihood_variance="annealed", batch_size=4096):
        self.mixture = mixture
        self.schedule = schedule
        self.random_state = random_state
        self.likelihood_variance = likelihood_variance
        self.batch_size = batch_size

    def fit(self, channel, y=None):
        if not isinstance(channel, GaussianLinearChannel):
            raise TypeError("Langevin posterior sampling needs a GaussianLinearChannel")
        self.channel_ = channel
        return self

    def sample(self, y, n_chains=None):
        check_is_fitted(self, "channel_")
        return langevin_posterior_sample(
            self.mixture,
            self.channel_,
            y,
            self.schedule,
            rng_seed=self.random_state,
            n_chains=n_chains,
            batch_size=self.batch_size,
            likelihood_variance=self.likelihood_variance,
        )


def noiseless_channel(A, schedule, noise_variance_rule="sigma2"):
    """Gaussian channel standing in for ``y = A x``: noise scale ``sigma_end``."""
    return GaussianLinearChannel(A, schedule.sigma_end, noise_variance_rule)
