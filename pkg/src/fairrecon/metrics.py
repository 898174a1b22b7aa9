"""Exact and empirical fairness metrics for reconstruction kernels.

Exact metrics enumerate every (truth, measurement) pair of a discrete model.
The joint group matrix is indexed ``J[i, j] = Pr(x_hat in c_i, x* in c_j)``;
its CSV export is transposed into the confusion-matrix layout (rows are the
truth group, columns the reconstructed group).
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import DimensionError, UnreachableMeasurementError
from .model import DiscreteModel
from .posterior import as_fitted_kernel, posterior_matrix


@dataclass(frozen=True, eq=False)
class JointGroupMatrix:
    """``entries[i, j] = Pr(x_hat in c_i, x* in c_j)`` plus both group marginals.

    For overlapping collections the entries need not sum to one, so the
    marginals ``truth_masses`` and ``output_masses`` are carried separately
    rather than recovered from row and column sums.
    """

    entries: np.ndarray
    names: tuple
    truth_masses: np.ndarray
    output_masses: np.ndarray
    n_samples: int = None

    def to_csv(self, counts=False):
        """Confusion-matrix layout: rows = truth group, columns = reconstructed."""
        table = self.entries.T
        if counts:
            if self.n_samples is None:
                raise ValueError("count export needs an empirical matrix")
            table = np.rint(table * self.n_samples).astype(int)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["truth\\reconstruction", *self.names])
        for name, row in zip(self.names, table):
            w.writerow([name, *(repr(float(v)) if not counts else int(v) for v in row)])
        return buf.getvalue()

    def to_dict(self):
        return {
            "names": list(self.names),
            "entries": self.entries.tolist(),
            "truth_masses": self.truth_masses.tolist(),
            "output_masses": self.output_masses.tolist(),
            "n_samples": self.n_samples,
        }


@dataclass
class MetricsReport:
    rdp_alpha: list
    rdp_gap: float
    pr_gaps: list
    pr_gap: float
    spe_gap: float
    cpr_gap: float = None
    cpr_per_measurement: dict = None
    cpr_unreachable: list = field(default_factory=list)
    rce: float = None
    joint: JointGroupMatrix = None

    def to_dict(self):
        out = asdict(self)
        out["joint"] = self.joint.to_dict() if self.joint is not None else None
        # groups never seen in an empirical table have no alpha
        out["rdp_alpha"] = [None if math.isnan(a) else a for a in out["rdp_alpha"]]
        if out["rce"] is not None and math.isinf(out["rce"]):
            out["rce"] = "inf"
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _prior(model):
    return model.prior if isinstance(model, DiscreteModel) else np.asarray(model, dtype=float)


def _kernel_rows(truth, channel, kernel):
    """Conditional matrix of the kernel, checked on every truth-reachable symbol."""
    k = as_fitted_kernel(kernel, channel)
    cond = k.conditional_
    psi = truth @ channel.kernel
    bad = np.flatnonzero((psi > 0) & ~k.reachable_)
    if bad.size:
        raise UnreachableMeasurementError(
            channel.symbols[bad[0]], "kernel cannot condition on a measurement the truth prior produces"
        )
    return np.where(np.isnan(cond), 0.0, cond), psi


def joint_group_matrix(truth_prior, channel, kernel, groups):
    """Enumerate J[i, j] = sum_y Pr(x_hat in c_i | y) Pr(x* in c_j, y)."""
    r = _prior(truth_prior)
    if r.size != channel.n_inputs:
        raise DimensionError(f"truth prior has {r.size} states, channel expects {channel.n_inputs}")
    cond, psi = _kernel_rows(r, channel, kernel)
    if cond.shape[1] != r.size:
        raise DimensionError("kernel outputs a different state space than the truth prior")
    G = groups.membership(r.size)
    truth_joint = channel.kernel.T @ (r[:, None] * G)  # (n_y, k): Pr(x* in c_j, y)
    out_given_y = cond @ G  # (n_y, k): Pr(x_hat in c_i | y)
    J = out_given_y.T @ truth_joint
    return JointGroupMatrix(J, groups.names, r @ G, psi @ out_given_y)


def rdp_vector(J, truth_masses=None):
    """Per-group self-reconstruction rates alpha_i and their spread."""
    masses = J.truth_masses if truth_masses is None else np.asarray(truth_masses, dtype=float)
    if np.any(masses <= 0):
        raise ValueError(f"group {J.names[int(np.argmin(masses))]!r} has zero truth mass")
    alpha = np.diag(J.entries) / masses
    return alpha, float(alpha.max() - alpha.min())


def pr_gap(J, truth_masses=None):
    """Per-group |Pr(x_hat in c_i) - Pr(x* in c_i)| and the largest of them."""
    masses = J.truth_masses if truth_masses is None else np.asarray(truth_masses, dtype=float)
    gaps = np.abs(J.output_masses - masses)
    return gaps, float(gaps.max())


def spe_gap(J):
    """max |J[i, j] - J[j, i]|."""
    E = J.entries if isinstance(J, JointGroupMatrix) else np.asarray(J, dtype=float)
    return float(np.abs(E - E.T).max())


@dataclass
class CprResult:
    per_measurement: dict
    gap: float
    unreachable: list


def cpr_gap(truth_prior, channel, kernel, groups):
    """Worst case over measurements of max_i |Pr(x_hat in c_i|y) - Pr(x* in c_i|y)|.

    Measurements the truth prior never produces are skipped and listed.
    """
    r = _prior(truth_prior)
    cond, psi = _kernel_rows(r, channel, kernel)
    post, _ = posterior_matrix(r, channel)
    G = groups.membership(r.size)
    per, skipped = {}, []
    for j, sym in enumerate(channel.symbols):
        if psi[j] <= 0:
            skipped.append(sym)
            continue
        per[sym] = float(np.abs(cond[j] @ G - post[j] @ G).max())
    return CprResult(per, max(per.values(), default=0.0), skipped)


def _partition_labels(groups, n):
    if not groups.is_partition:
        raise ValueError("representation cross-entropy needs a partition")
    G = groups.membership(n)
    if not np.all(G.sum(axis=1) == 1):
        raise ValueError("groups do not partition the states")
    return G


def rce(truth_prior, channel, kernel, partition):
    """-E log Pr(x_hat in U(x*) | y); +inf if a reachable pair gets probability 0."""
    r = _prior(truth_prior)
    G = _partition_labels(partition, r.size)
    cond, _ = _kernel_rows(r, channel, kernel)
    Q = cond @ G  # (n_y, k)
    # weight[y, i] = Pr(x* in c_i, y)
    weight = channel.kernel.T @ (r[:, None] * G)
    mask = weight > 0
    if np.any(Q[mask] <= 0):
        return math.inf
    return float(-(weight[mask] * np.log(Q[mask])).sum())


@dataclass
class RceDecomposition:
    conditional_entropy: float
    expected_kl: float

    @property
    def total(self):
        return self.conditional_entropy + self.expected_kl


def rce_decomposition(truth_prior, channel, kernel, partition):
    """Split RCE into H(U | y) and E_y KL(P(U|y) || Q(U|y))."""
    r = _prior(truth_prior)
    G = _partition_labels(partition, r.size)
    cond, psi = _kernel_rows(r, channel, kernel)
    post, _ = posterior_matrix(r, channel)
    reach = psi > 0
    P = post[reach] @ G
    Q = cond[reach] @ G
    w = psi[reach][:, None]
    pos = P > 0
    H = float(-(w * np.where(pos, P * np.log(np.where(pos, P, 1.0)), 0.0)).sum())
    if np.any(Q[pos] <= 0):
        return RceDecomposition(H, math.inf)
    kl = np.where(pos, P * (np.log(np.where(pos, P, 1.0)) - np.log(np.where(pos, Q, 1.0))), 0.0)
    return RceDecomposition(H, float((w * kl).sum()))


def evaluate(truth_prior, channel, kernel, groups):
    """All metrics for one (truth prior, channel, kernel) triple."""
    J = joint_group_matrix(truth_prior, channel, kernel, groups)
    alpha, gap = rdp_vector(J)
    pr, prmax = pr_gap(J)
    cpr = cpr_gap(truth_prior, channel, kernel, groups)
    value = rce(truth_prior, channel, kernel, groups) if groups.is_partition else None
    return MetricsReport(
        rdp_alpha=alpha.tolist(),
        rdp_gap=gap,
        pr_gaps=pr.tolist(),
        pr_gap=prmax,
        spe_gap=spe_gap(J),
        cpr_gap=cpr.gap,
        cpr_per_measurement={str(k): v for k, v in cpr.per_measurement.items()},
        cpr_unreachable=[str(s) for s in cpr.unreachable],
        rce=value,
        joint=J,
    )


def counts_from_samples(samples, names):
    """Confusion counts (rows truth group, columns reconstructed group) from
    ``(truth_group, measurement, reconstructed_group)`` triples."""
    index = {n: i for i, n in enumerate(names)}
    counts = np.zeros((len(names), len(names)), dtype=np.int64)
    for truth, _y, recon in samples:
        counts[index.get(truth, truth), index.get(recon, recon)] += 1
    return counts


def empirical_joint(counts, names):
    counts = np.asarray(counts)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or counts.shape[0] != len(names):
        raise DimensionError(f"need a square count table for {len(names)} groups")
    n = int(counts.sum())
    if n == 0:
        raise ValueError("no samples")
    freq = counts / n
    return JointGroupMatrix(freq.T, tuple(names), freq.sum(axis=1), freq.sum(axis=0), n_samples=n)


def empirical_metrics(samples, groups):
    """Plug-in RDP/PR/SPE from sampled triples or a confusion table.

    ``samples`` is either a sequence of ``(truth_group, y, reconstructed_group)``
    or a square count array laid out like a confusion matrix. CPR needs the
    posterior and is left empty.
    """
    names = groups.names if hasattr(groups, "names") else tuple(groups)
    if isinstance(samples, np.ndarray) and samples.ndim == 2 and samples.shape[0] == samples.shape[1] == len(names):
        counts = samples
    else:
        samples = list(samples)
        if not samples:
            raise ValueError("empirical metrics need at least one sample")
        counts = counts_from_samples(samples, names)
    J = empirical_joint(counts, names)
    masses = J.truth_masses
    with np.errstate(invalid="ignore", divide="ignore"):
        alpha = np.where(masses > 0, np.diag(J.entries) / masses, np.nan)
    seen = alpha[~np.isnan(alpha)]
    pr, prmax = pr_gap(J)
    return MetricsReport(
        rdp_alpha=alpha.tolist(),
        rdp_gap=float(seen.max() - seen.min()) if seen.size else 0.0,
        pr_gaps=pr.tolist(),
        pr_gap=prmax,
        spe_gap=spe_gap(J),
        joint=J,
    )
