"""Exact binomial tests of symmetric pairwise error and seeded audits."""

import csv
import io
import itertools
import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import binomtest

from ._validation import chain_rng
from .metrics import empirical_joint
from .model import DiscreteModel
from .posterior import as_fitted_kernel

AUDIT_CHUNK = 1 << 16
SEQUENTIAL_WARN_AT = 5


@dataclass
class BinomialTestResult:
    """Exact two-sided test of p = 0.5 with a Clopper-Pearson interval.

    ``successes`` counts errors on the first group out of ``trials`` errors in
    total. With zero trials the result is ``indeterminate`` and the estimate,
    interval and p-value are None.
    """

    successes: int
    trials: int
    level: float
    point_estimate: float = None
    ci_low: float = None
    ci_high: float = None
    p_value: float = None
    reject: bool = False
    indeterminate: bool = False

    def to_dict(self):
        return asdict(self)


def spe_binomial_test(errors_on_a, errors_on_b, level=0.95):
    """Is the share of errors falling on group a compatible with one half?"""
    a, b = int(errors_on_a), int(errors_on_b)
    if a < 0 or b < 0:
        raise ValueError("error counts must be non-negative")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    n = a + b
    if n == 0:
        return BinomialTestResult(0, 0, level, indeterminate=True)
    res = binomtest(a, n, 0.5, alternative="two-sided")
    ci = res.proportion_ci(confidence_level=level, method="exact")
    p = float(res.pvalue)
    return BinomialTestResult(a, n, level, a / n, float(ci.low), float(ci.high), p, p < 1 - level)


@dataclass
class AuditResult:
    counts: np.ndarray  # rows: truth group, columns: reconstructed group
    names: tuple
    tests: dict = field(default_factory=dict)
    n_samples: int = 0
    seed: int = None

    @property
    def joint(self):
        return empirical_joint(self.counts, self.names)

    def error_share_series(self):
        """Per pair: fraction of all cross-group errors that fall on the first group."""
        return [
            {
                "pair": key,
                "share": t.point_estimate,
                "ci_low": t.ci_low,
                "ci_high": t.ci_high,
                "errors_first": t.successes,
                "errors_total": t.trials,
            }
            for key, t in self.tests.items()
        ]

    def counts_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["truth\\reconstruction", *self.names])
        for name, row in zip(self.names, self.counts):
            w.writerow([name, *map(int, row)])
        return buf.getvalue()

    def errors_csv(self):
        """One row per group pair: errors on each side and the test outcome."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group_a", "group_b", "errors_a", "errors_b", "share_a", "ci_low", "ci_high", "p_value", "reject"])
        for (ga, gb), t in ((tuple(k.split("|")), v) for k, v in self.tests.items()):
            w.writerow([ga, gb, t.successes, t.trials - t.successes, t.point_estimate, t.ci_low, t.ci_high, t.p_value, t.reject])
        return buf.getvalue()

    def to_dict(self):
        return {
            "names": list(self.names),
            "counts": self.counts.tolist(),
            "n_samples": self.n_samples,
            "seed": self.seed,
            "tests": {k: v.to_dict() for k, v in self.tests.items()},
            "error_share": self.error_share_series(),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def pairwise_tests(counts, names, level=0.95):
    """SPE test for every unordered pair of groups in a confusion table."""
    counts = np.asarray(counts)
    tests = {}
    for i, j in itertools.combinations(range(len(names)), 2):
        tests[f"{names[i]}|{names[j]}"] = spe_binomial_test(counts[i, j], counts[j, i], level)
    if len(tests) > SEQUENTIAL_WARN_AT:
        warnings.warn(
            f"{len(tests)} SPE tests in one audit; no multiplicity correction applied, "
            "so a few rejections are expected by chance",
            stacklevel=2,
        )
    return tests


def _draw_chunk(rng, r, channel_kernel, cond, labels, n):
    x_star = rng.choice(r.size, size=n, p=r)
    u = rng.random((2, n))
    y = (np.cumsum(channel_kernel, axis=1)[x_star] < u[0][:, None]).sum(axis=1)
    y = np.minimum(y, channel_kernel.shape[1] - 1)
    x_hat = (np.cumsum(cond, axis=1)[y] < u[1][:, None]).sum(axis=1)
    x_hat = np.minimum(x_hat, cond.shape[1] - 1)
    return labels[x_star], y, labels[x_hat]


def simulate_samples(truth_prior, channel, kernel, groups, n_samples, rng_seed=0):
    """Sampled (truth group, measurement, reconstructed group) index arrays.

    Draws come in fixed-size chunks, chunk ``c`` using the substream
    ``(rng_seed, c)``; the output depends only on the seed and ``n_samples``.
    """
    r = truth_prior.prior if isinstance(truth_prior, DiscreteModel) else np.asarray(truth_prior, dtype=float)
    k = as_fitted_kernel(kernel, channel)
    cond = np.where(np.isnan(k.conditional_), 0.0, k.conditional_)
    labels = groups.labels(r.size)
    parts = []
    for c, start in enumerate(range(0, n_samples, AUDIT_CHUNK)):
        rng = chain_rng(rng_seed, c)
        parts.append(_draw_chunk(rng, r, channel.kernel, cond, labels, min(AUDIT_CHUNK, n_samples - start)))
    if not parts:
        return tuple(np.empty(0, dtype=int) for _ in range(3))
    return tuple(np.concatenate(p) for p in zip(*parts))


def simulate_audit(truth_prior, channel, kernel, groups, n_samples, rng_seed=0, level=0.95):
    """Sample the pipeline, tabulate group confusions, test SPE per pair."""
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    truth, _y, recon = simulate_samples(truth_prior, channel, kernel, groups, n_samples, rng_seed)
    k = groups.k
    counts = np.bincount(truth * k + recon, minlength=k * k).reshape(k, k)
    return AuditResult(counts, groups.names, pairwise_tests(counts, groups.names, level), n_samples, rng_seed)


def audit_from_counts(counts, names, level=0.95):
    """Audit built from an existing confusion table (rows truth, columns reconstruction)."""
    counts = np.asarray(counts, dtype=np.int64)
    return AuditResult(counts, tuple(names), pairwise_tests(counts, names, level), int(counts.sum()))
