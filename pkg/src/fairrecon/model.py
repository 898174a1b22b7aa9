"""Priors, group collections and measurement channels.

Everything here is immutable after construction. A :class:`DiscreteModel` is a
finite signal space with a prior; a :class:`GroupCollection` names subsets of
its states; a channel maps a signal to a distribution over measurements.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, logsumexp, ndtr

from ._validation import PROB_TOL, check_positive, check_stochastic_matrix
from .exceptions import DimensionError


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    """Finite signal space with a prior.

    The constructor only coerces shapes; call :func:`validate` (or
    :meth:`check`) to test normalization, so that malformed inputs can still be
    represented and diagnosed.
    """

    prior: np.ndarray
    states: tuple = None

    def __post_init__(self):
        prior = np.asarray(self.prior, dtype=float)
        if prior.ndim != 1 or prior.size == 0:
            raise DimensionError(f"prior must be a non-empty vector, got shape {prior.shape}")
        prior.setflags(write=False)
        object.__setattr__(self, "prior", prior)
        states = tuple(range(prior.size)) if self.states is None else tuple(self.states)
        if len(states) != prior.size:
            raise DimensionError(f"{len(states)} state names for {prior.size} prior entries")
        object.__setattr__(self, "states", states)

    @property
    def n_states(self):
        return self.prior.size

    def check(self, groups=None):
        problems = validate(self, groups)
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def group_masses(self, groups):
        return self.prior @ groups.membership(self.n_states)


@dataclass(frozen=True, eq=False)
class GroupCollection:
    """Named subsets of state indices, possibly overlapping."""

    names: tuple
    members: tuple
    is_partition: bool = True

    def __post_init__(self):
        names = tuple(self.names)
        members = tuple(frozenset(int(i) for i in m) for m in self.members)
        if len(names) != len(members):
            raise DimensionError(f"{len(names)} group names for {len(members)} groups")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "members", members)

    @classmethod
    def from_dict(cls, groups, is_partition=True):
        return cls(tuple(groups), tuple(groups.values()), is_partition)

    @classmethod
    def from_labels(cls, labels, names=None):
        """Partition from one label per state."""
        labels = list(labels)
        if names is None:
            names = list(dict.fromkeys(labels))
        members = [[i for i, lab in enumerate(labels) if lab == name] for name in names]
        return cls(tuple(names), tuple(members), True)

    @property
    def k(self):
        return len(self.names)

    def membership(self, n_states):
        """0/1 matrix of shape (n_states, k)."""
        out = np.zeros((n_states, self.k))
        for j, m in enumerate(self.members):
            idx = np.fromiter(m, dtype=int, count=len(m))
            if idx.size and (idx.min() < 0 or idx.max() >= n_states):
                raise DimensionError(f"group {self.names[j]!r} references a state outside 0..{n_states - 1}")
            out[idx, j] = 1.0
        return out

    def labels(self, n_states):
        """Group index of each state; only defined for partitions."""
        if not self.is_partition:
            raise ValueError("state labels are only defined for a partition")
        member = self.membership(n_states)
        return member.argmax(axis=1)


def validate(model, groups=None):
    """List every invariant violation of ``model`` (and ``groups``)."""
    problems = []
    prior = model.prior
    if not np.all(np.isfinite(prior)):
        problems.append("prior has non-finite entries")
    if np.any(prior < 0):
        problems.append("prior has negative entries")
    total = prior.sum()
    if abs(total - 1.0) > PROB_TOL:
        problems.append(f"prior sums to {total:.12g}")
    if groups is None:
        return problems

    n = model.n_states
    for name, m in zip(groups.names, groups.members):
        if not m:
            problems.append(f"group {name!r} is empty")
        elif min(m) < 0 or max(m) >= n:
            problems.append(f"group {name!r} references states outside the model")
    covered = set().union(*groups.members) if groups.members else set()
    unlabeled = sorted(set(range(n)) - covered)
    if unlabeled:
        problems.append(f"states {unlabeled} belong to no group")
    if groups.is_partition:
        seen = set()
        for m in groups.members:
            if seen & m:
                problems.append("groups not disjoint")
                break
            seen |= m
    return problems


@dataclass(frozen=True, eq=False)
class DiscreteChannel:
    """Row-stochastic kernel ``kernel[x, y] = pi(y | x)``."""

    kernel: np.ndarray
    symbols: tuple = None

    def __post_init__(self):
        kernel = check_stochastic_matrix(self.kernel, "channel kernel")
        kernel.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)
        symbols = tuple(range(kernel.shape[1])) if self.symbols is None else tuple(self.symbols)
        if len(symbols) != kernel.shape[1]:
            raise DimensionError(f"{len(symbols)} symbols for {kernel.shape[1]} kernel columns")
        object.__setattr__(self, "symbols", symbols)

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))

    @property
    def n_inputs(self):
        return self.kernel.shape[0]

    @property
    def n_symbols(self):
        return self.kernel.shape[1]

    def symbol_index(self, y):
        """Column of ``y``; integers not among the symbols are read as positions."""
        if y in self.symbols:
            return self.symbols.index(y)
        if isinstance(y, (int, np.integer)) and 0 <= y < self.n_symbols:
            return int(y)
        raise KeyError(f"unknown measurement symbol {y!r}")

    def row_tv(self, a, b):
        return tv_distance(self.kernel[a], self.kernel[b])


@dataclass(frozen=True, eq=False)
class GaussianLinearChannel:
    """``y = A x + noise`` with isotropic Gaussian noise.

    ``noise_variance_rule`` selects the per-coordinate noise variance: ``"sigma2"``
    gives ``sigma**2``, ``"sigma2_over_m"`` gives ``sigma**2 / m``.
    """

    A: np.ndarray
    sigma: float
    noise_variance_rule: str = "sigma2"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.ndim != 2 or not np.all(np.isfinite(A)):
            raise ValueError("A must be a finite 2-D matrix")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "sigma", check_positive(self.sigma, "sigma"))
        if self.noise_variance_rule not in ("sigma2", "sigma2_over_m"):
            raise ValueError(f"unknown noise_variance_rule {self.noise_variance_rule!r}")

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def noise_variance(self):
        if self.noise_variance_rule == "sigma2_over_m":
            return self.sigma**2 / self.m
        return self.sigma**2

    def simulate(self, x, random_state=None):
        rng = np.random.default_rng(random_state)
        x = np.asarray(x, dtype=float)
        mean = x @ self.A.T
        return mean + np.sqrt(self.noise_variance) * rng.standard_normal(mean.shape)

    def log_likelihood(self, y, x):
        r = np.asarray(y, dtype=float) - np.asarray(x, dtype=float) @ self.A.T
        v = self.noise_variance
        return -0.5 * np.sum(r**2, axis=-1) / v - 0.5 * self.m * np.log(2 * np.pi * v)

    def tv_between(self, x, x2):
        """Exact TV between the measurement laws of two signals."""
        d = np.linalg.norm(self.A @ (np.asarray(x, float) - np.asarray(x2, float)))
        return gaussian_tv_distance(0.0, d, np.sqrt(self.noise_variance))


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Isotropic Gaussian mixture ``sum_k w_k N(mu_k, v_k I)``."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        v = np.broadcast_to(np.asarray(self.variances, dtype=float), w.shape).copy()
        if mu.shape[0] != w.size:
            raise DimensionError(f"{mu.shape[0]} means for {w.size} weights")
        if np.any(w < 0) or abs(w.sum() - 1.0) > PROB_TOL:
            raise ValueError("mixture weights must be a probability vector")
        if np.any(v <= 0):
            raise ValueError("mixture variances must be strictly positive")
        for arr in (w, mu, v):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", v)

    @property
    def dim(self):
        return self.means.shape[1]

    def _component_logpdf(self, x, sigma):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        var = self.variances + sigma**2
        sq = ((x[:, None, :] - self.means[None]) ** 2).sum(axis=-1)
        return np.log(self.weights) - 0.5 * sq / var - 0.5 * self.dim * np.log(2 * np.pi * var), var

    def log_density(self, x, sigma=0.0):
        """log of the mixture convolved with N(0, sigma^2 I); one value per row."""
        logc, _ = self._component_logpdf(x, sigma)
        return logsumexp(logc, axis=1)

    def sample(self, n, random_state=None):
        rng = np.random.default_rng(random_state)
        k = rng.choice(self.weights.size, size=n, p=self.weights)
        noise = rng.standard_normal((n, self.dim))
        return self.means[k] + np.sqrt(self.variances[k])[:, None] * noise


@dataclass(frozen=True, eq=False)
class MixturePosterior:
    """Gaussian mixture with full covariances: the posterior of a
    :class:`GaussianMixture` prior after a linear Gaussian measurement."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    @property
    def mean(self):
        return self.weights @ self.means

    def interval_probability(self, lower=None, upper=None, coordinate=0):
        """Pr(lower < x[coordinate] <= upper); None means unbounded."""
        mu = self.means[:, coordinate]
        sd = np.sqrt(self.covariances[:, coordinate, coordinate])
        hi = 1.0 if upper is None else ndtr((upper - mu) / sd)
        lo = 0.0 if lower is None else ndtr((lower - mu) / sd)
        return float(self.weights @ (hi - lo))


def mixture_posterior(mixture, channel, y):
    """Closed-form p(x | y) for ``y = A x + N(0, tau^2 I)`` and a mixture prior.

    Component k keeps the conjugate update
    ``Sigma_k = (I / v_k + A^T A / tau^2)^-1``,
    ``m_k = Sigma_k (mu_k / v_k + A^T y / tau^2)`` and is reweighted by its
    evidence ``N(y; A mu_k, v_k A A^T + tau^2 I)``.
    """
    A, tau2 = channel.A, channel.noise_variance
    if A.shape[1] != mixture.dim:
        raise DimensionError(f"channel acts on dimension {A.shape[1]}, prior has {mixture.dim}")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    d, m = mixture.dim, A.shape[0]
    log_w, means, covs = [], [], []
    for w, mu, v in zip(mixture.weights, mixture.means, mixture.variances):
        cov = np.linalg.inv(np.eye(d) / v + A.T @ A / tau2)
        means.append(cov @ (mu / v + A.T @ y / tau2))
        covs.append(cov)
        S = v * A @ A.T + tau2 * np.eye(m)
        r = y - A @ mu
        _, logdet = np.linalg.slogdet(S)
        log_w.append(np.log(w) - 0.5 * (r @ np.linalg.solve(S, r) + logdet + m * np.log(2 * np.pi)))
    log_w = np.array(log_w)
    return MixturePosterior(np.exp(log_w - logsumexp(log_w)), np.array(means), np.array(covs))


def block_average_operator(n, m):
    """m x n matrix averaging consecutive blocks of ``n // m`` coordinates."""
    if m <= 0 or n <= 0 or n % m:
        raise DimensionError(f"block averaging needs m to divide n (n={n}, m={m})")
    b = n // m
    return np.kron(np.eye(m), np.full((1, b), 1.0 / b))


def induced_measurement_distribution(prior, channel):
    """psi(y) = sum_x p(x) pi(y|x)."""
    p = prior.prior if isinstance(prior, DiscreteModel) else np.asarray(prior, dtype=float)
    if p.size != channel.n_inputs:
        raise DimensionError(f"prior has {p.size} states, channel expects {channel.n_inputs}")
    return p @ channel.kernel


def tv_distance(a, b):
    """Total variation distance between two distributions on a common finite support."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"supports differ: {a.shape} vs {b.shape}")
    return 0.5 * float(np.abs(a - b).sum())


def gaussian_tv_distance(mean_a, mean_b, scale, other_scale=None):
    """TV between N(mean_a, scale^2 I) and N(mean_b, scale^2 I): 2 Phi(d / 2 scale) - 1."""
    if other_scale is not None and not np.isclose(other_scale, scale, rtol=0, atol=0):
        raise ValueError("closed-form Gaussian TV needs equal variances")
    scale = check_positive(float(scale), "scale")
    d = float(np.linalg.norm(np.atleast_1d(np.asarray(mean_a, float) - np.asarray(mean_b, float))))
    return float(erf(d / (2 * scale) / np.sqrt(2)))


@dataclass(frozen=True, eq=False)
class BinnedGaussianChannel(DiscreteChannel):
    """Scalar Gaussian channel with its output quantized onto fixed bins.

    ``locations[x]`` is the noiseless measurement of state ``x``. The two outer
    bins absorb the tails, so every row sums to one.
    """

    locations: np.ndarray = field(default=None)
    scale: float = field(default=None)


def binned_gaussian_channel(locations, scale, n_bins=400, span=8.0):
    locations = np.asarray(locations, dtype=float)
    scale = check_positive(float(scale), "scale")
    lo = locations.min() - span * scale
    hi = locations.max() + span * scale
    edges = np.linspace(lo, hi, n_bins + 1)
    z = (edges[None, :] - locations[:, None]) / scale
    z[:, 0], z[:, -1] = -np.inf, np.inf
    cdf, sf = ndtr(z), ndtr(-z)
    # upper-tail bins from the survival function so they do not round to zero
    kernel = np.where(z[:, :-1] >= 0, sf[:, :-1] - sf[:, 1:], cdf[:, 1:] - cdf[:, :-1])
    kernel /= kernel.sum(axis=1, keepdims=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return BinnedGaussianChannel(kernel, tuple(centers), locations=locations, scale=scale)


def block_average_gaussian_channel(grid, n, m, sigma, n_bins=400):
    """Discretized channel for a 1-D family of images seen through block averaging.

    State ``g`` is the n-pixel image ``(g / sqrt(n)) * ones(n)``, so signal-space
    distance between states equals grid distance. The measurement is
    ``A x + N(0, sigma^2 I_m)`` with ``A = block_average_operator(n, m)``; its
    sufficient statistic is the coordinate mean, distributed as
    ``N(g / sqrt(n), sigma^2 / m)``, which is what gets binned.
    """
    A = block_average_operator(n, m)
    grid = np.asarray(grid, dtype=float)
    images = np.outer(grid / np.sqrt(n), np.ones(n))
    locations = (images @ A.T).mean(axis=1)
    return binned_gaussian_channel(locations, sigma / np.sqrt(m), n_bins=n_bins)
