"""Numerical checks of the symmetry, perturbation and impossibility results.

Everything is enumerated exactly on small discrete instances:

* matched priors give a symmetric pairwise-error joint;
* a truth prior within total variation delta of the assumed prior keeps the
  asymmetry within 2 delta;
* on a 1-D grid, a W-infinity coupling plus a TV-bounded channel and thin set
  boundaries keep it within 4 delta;
* RDP over a coarse and a refined partition at once, and RDP together with PR,
  are infeasible once the channel confuses the relevant groups.
"""

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linprog

from ._validation import PROB_TOL, chain_rng
from .exceptions import DimensionError, PreconditionError
from .model import DiscreteChannel, DiscreteModel, tv_distance
from .posterior import posterior_matrix


GRID_LADDER = (0.01, 0.02, 0.025, 0.05, 0.1, 0.125, 0.2, 0.25, 0.5)
MAX_GRID_KERNELS = 5e7


def _prior(p):
    return p.prior if isinstance(p, DiscreteModel) else np.asarray(p, dtype=float)


def _indicator(members, n):
    v = np.zeros(n)
    v[list(members)] = 1.0
    return v


def mismatched_joint(truth_prior, assumed_prior, channel, U, V):
    """(Pr[x* in U, x_hat in V], Pr[x* in V, x_hat in U]) with x* ~ truth and
    x_hat drawn from the assumed prior's posterior."""
    r, p = _prior(truth_prior), _prior(assumed_prior)
    if r.size != p.size or r.size != channel.n_inputs:
        raise DimensionError("truth prior, assumed prior and channel must share one state space")
    post, psi_p = posterior_matrix(p, channel)
    psi_r = r @ channel.kernel
    if np.any((psi_r > 0) & (psi_p <= 0)):
        raise PreconditionError("the truth prior reaches measurements the assumed prior cannot explain")
    post = np.nan_to_num(post)
    u, v = _indicator(U, r.size), _indicator(V, r.size)
    # Pr[x* in A, x_hat in B] = sum_y Pr(x* in A, y) Pr(x_hat in B | y)
    to_y = channel.kernel.T @ (r[:, None] * np.column_stack([u, v]))
    q_uv = float(to_y[:, 0] @ (post @ v))
    q_vu = float(to_y[:, 1] @ (post @ u))
    return q_uv, q_vu


def random_subset(rng, n):
    while True:
        s = np.flatnonzero(rng.random(n) < 0.5)
        if s.size:
            return frozenset(s.tolist())


def random_instance(rng, n_states, n_symbols, concentration=1.0):
    """Random prior and channel; channel rows are Dirichlet draws."""
    prior = rng.dirichlet(np.full(n_states, concentration))
    kernel = rng.dirichlet(np.full(n_symbols, concentration), size=n_states)
    return DiscreteModel(prior), DiscreteChannel(kernel)


@dataclass
class BoundCheck:
    """Outcome of a randomized bound check; ``trials`` keeps every record."""

    passed: bool
    worst_ratio: float
    worst_asymmetry: float
    tv: float
    trials: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def check_tv_spe_bound(truth_prior, assumed_prior, channel, trials=1000, rng_seed=0, include_adversarial=True):
    """Worst |q_UV - q_VU| / (2 TV(R, P)) over random set pairs.

    With ``R == P`` the ratio is undefined; ``worst_ratio`` is then 0 and the
    check passes iff every asymmetry is below 1e-12.
    """
    r, p = _prior(truth_prior), _prior(assumed_prior)
    tv = tv_distance(r, p)
    rng = np.random.default_rng(rng_seed)
    n = r.size
    pairs = [(random_subset(rng, n), random_subset(rng, n)) for _ in range(trials)]
    if include_adversarial and tv > 0:
        U = frozenset(np.flatnonzero(r > p).tolist())
        V = frozenset(range(n)) - U
        if U and V:
            pairs.append((U, V))
    records = []
    for U, V in pairs:
        q_uv, q_vu = mismatched_joint(r, p, channel, U, V)
        diff = abs(q_uv - q_vu)
        records.append(
            {
                "U": sorted(U),
                "V": sorted(V),
                "q_uv": q_uv,
                "q_vu": q_vu,
                "asymmetry": diff,
                "ratio": diff / (2 * tv) if tv > 0 else None,
            }
        )
    worst = max(rec["asymmetry"] for rec in records)
    if tv > 0:
        ratio = max(rec["ratio"] for rec in records)
        passed = ratio <= 1.0 + 1e-12
    else:
        ratio = 0.0
        passed = worst < 1e-12
    return BoundCheck(passed, ratio, worst, tv, records)


# --------------------------------------------------------------------------
# W-infinity perturbations on a 1-D grid


@dataclass(frozen=True, eq=False)
class Coupling:
    """Joint law ``gamma[a, b]`` of (x* ~ R at grid[a], x ~ P at grid[b])."""

    gamma: np.ndarray
    positions: np.ndarray

    @property
    def epsilon(self):
        a, b = np.nonzero(self.gamma > 0)
        if a.size == 0:
            return 0.0
        return float(np.abs(self.positions[a] - self.positions[b]).max())

    def check(self, truth, assumed, epsilon=None, tol=PROB_TOL):
        if np.abs(self.gamma.sum(axis=1) - truth).max() > tol:
            raise ValueError("coupling's first marginal does not match the truth prior")
        if np.abs(self.gamma.sum(axis=0) - assumed).max() > tol:
            raise ValueError("coupling's second marginal does not match the assumed prior")
        if np.any(self.gamma < 0):
            raise ValueError("coupling has negative mass")
        if epsilon is not None and self.epsilon > epsilon + 1e-12:
            raise ValueError(f"coupling moves mass by {self.epsilon:.6g} > epsilon = {epsilon:.6g}")


def monotone_coupling(truth, assumed, positions):
    """Quantile coupling of two laws on a sorted 1-D grid (optimal for W-infinity)."""
    r, p = _prior(truth), _prior(assumed)
    positions = np.asarray(positions, dtype=float)
    if np.any(np.diff(positions) <= 0):
        raise ValueError("grid positions must be strictly increasing")
    gamma = np.zeros((r.size, p.size))
    i = j = 0
    ri, pj = r[0], p[0]
    while i < r.size and j < p.size:
        m = min(ri, pj)
        gamma[i, j] += m
        ri -= m
        pj -= m
        if ri <= 1e-15:
            i += 1
            ri = r[i] if i < r.size else 0.0
        if pj <= 1e-15:
            j += 1
            pj = p[j] if j < p.size else 0.0
    return Coupling(gamma, positions)


def thickened_boundary(positions, members, radius):
    """Indices of (S + closed ball of ``radius``) minus S, for S given by ``members``."""
    members = np.asarray(sorted(members), dtype=int)
    inside = np.zeros(positions.size, dtype=bool)
    inside[members] = True
    dist = np.abs(positions[:, None] - positions[members][None, :]).min(axis=1)
    return np.flatnonzero((dist <= radius + 1e-12) & ~inside)


@dataclass
class BoundaryMassReport:
    r_u_2eps: float
    r_v_2eps: float
    p_u_eps: float
    p_v_eps: float

    @property
    def delta(self):
        return max(self.r_u_2eps, self.r_v_2eps, self.p_u_eps, self.p_v_eps)


@dataclass
class WinfCheck:
    q_uv: float
    q_vu: float
    epsilon: float
    channel_tv: float
    boundary: BoundaryMassReport
    delta_eff: float
    bound: float
    passed: bool
    vacuous: bool
    assumption_violations: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["boundary"]["delta"] = self.boundary.delta
        return d


def check_winf_spe_bound(truth, assumed, positions, coupling, channel, U, V, epsilon=None, delta=None):
    """Check |q_UV - q_VU| <= 4 delta_eff for a W-infinity perturbation.

    ``delta_eff`` is the largest of the channel TV over coupled pairs and the
    four boundary masses. When a target ``delta`` is given, every quantity
    exceeding it is listed in ``assumption_violations``.
    """
    r, p = _prior(truth), _prior(assumed)
    positions = np.asarray(positions, dtype=float)
    if not (r.size == p.size == positions.size == channel.n_inputs):
        raise DimensionError("grid, priors and channel disagree on the number of cells")
    coupling.check(r, p, epsilon)
    eps = coupling.epsilon if epsilon is None else float(epsilon)
    a, b = np.nonzero(coupling.gamma > 0)
    K = channel.kernel
    channel_tv = float(0.5 * np.abs(K[a] - K[b]).sum(axis=1).max()) if a.size else 0.0
    boundary = BoundaryMassReport(
        float(r[thickened_boundary(positions, U, 2 * eps)].sum()),
        float(r[thickened_boundary(positions, V, 2 * eps)].sum()),
        float(p[thickened_boundary(positions, U, eps)].sum()),
        float(p[thickened_boundary(positions, V, eps)].sum()),
    )
    delta_eff = max(channel_tv, boundary.delta)
    q_uv, q_vu = mismatched_joint(r, p, channel, U, V)
    bound = 4 * delta_eff
    violations = []
    if delta is not None:
        named = {"channel_tv": channel_tv, **asdict(boundary)}
        violations = [k for k, v in named.items() if v > delta]
    return WinfCheck(
        q_uv, q_vu, eps, channel_tv, boundary, delta_eff, bound, abs(q_uv - q_vu) <= bound + 1e-12, bound >= 1, violations
    )


def grid_gaussian(positions, center, scale, support=None):
    """Normalized Gaussian weights on the grid, zero outside ``support`` (index range)."""
    w = np.exp(-0.5 * ((positions - center) / scale) ** 2)
    if support is not None:
        mask = np.zeros_like(w, dtype=bool)
        mask[support[0] : support[1]] = True
        w = np.where(mask, w, 0.0)
    return w / w.sum()


def shift_cells(prior, shift):
    """Move every cell's mass ``shift`` cells to the right; mass must not fall off."""
    out = np.zeros_like(prior)
    if shift >= 0:
        if shift and prior[-shift:].sum() > 0:
            raise ValueError("shift pushes mass off the grid")
        out[shift:] = prior[: prior.size - shift]
    else:
        if prior[:-shift].sum() > 0:
            raise ValueError("shift pushes mass off the grid")
        out[:shift] = prior[-shift:]
    return out


# --------------------------------------------------------------------------
# Impossibility of oblivious RDP and of RDP together with PR


def _alpha_coefficients(model, channel, groups):
    """Tensor C[i, y, x] with alpha_i(K) = sum_{y,x} C[i, y, x] K[y, x]."""
    r = _prior(model)
    G = groups.membership(r.size)
    masses = r @ G
    if np.any(masses <= 0):
        raise PreconditionError("every group needs positive mass")
    M = channel.kernel.T @ (r[:, None] * G)  # Pr(x* in c_i, y)
    return np.einsum("xi,yi->iyx", G, M) / masses[:, None, None]


def _gap_pairs(sizes):
    pairs, start = [], 0
    for s in sizes:
        pairs += [(start + i, start + j) for i in range(s) for j in range(s) if i != j]
        start += s
    return pairs


def project_rows_to_simplex(K):
    """Euclidean projection of each row onto the probability simplex."""
    n = K.shape[1]
    u = -np.sort(-K, axis=1)
    css = np.cumsum(u, axis=1) - 1
    idx = np.arange(1, n + 1)
    cond = u - css / idx > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(K.shape[0]), rho] / (rho + 1)
    return np.maximum(K - theta[:, None], 0.0)


def simplex_grid(n, resolution):
    """All probability vectors of length ``n`` with entries on a 1/steps lattice."""
    steps = round(1 / resolution)
    if not math.isclose(steps * resolution, 1.0, rel_tol=1e-9):
        raise ValueError("resolution must divide 1")
    pts = [c for c in itertools.product(range(steps + 1), repeat=n - 1) if sum(c) <= steps]
    arr = np.array([(*c, steps - sum(c)) for c in pts], dtype=np.int64)
    return arr, steps


@dataclass
class InfeasibilityResult:
    """Minimum of max(RDP gap on each partition) over reconstruction kernels.

    ``optimizer_value`` comes from multistart projected subgradient descent;
    ``lp_value`` solves the same problem exactly as a linear program;
    ``grid_value`` is the best kernel on a lattice of row-stochastic matrices
    (an upper bound on the true minimum, within Lipschitz distance of it).
    """

    optimizer_value: float
    kernel: np.ndarray
    lp_value: float
    lp_kernel: np.ndarray
    grid_value: float = None
    grid_resolution: float = None
    grid_kernel: np.ndarray = None
    min_accuracy: float = 0.0

    @property
    def certified_minimum(self):
        return self.lp_value

    def to_dict(self):
        d = asdict(self)
        for k in ("kernel", "lp_kernel", "grid_kernel"):
            if d[k] is not None:
                d[k] = np.asarray(d[k]).tolist()
        d["certified_minimum"] = self.certified_minimum
        return d


class _RdpProblem:
    """alpha(K) for every group of every partition, as one linear map."""

    def __init__(self, model, channel, partitions, floor_partition=0):
        self.C = [_alpha_coefficients(model, channel, g) for g in partitions]
        self.sizes = [c.shape[0] for c in self.C]
        self.flat = np.concatenate(self.C, axis=0)  # (k_total, n_y, n_x)
        self.offsets = np.cumsum([0, *self.sizes])
        self.floor_slice = slice(self.offsets[floor_partition], self.offsets[floor_partition + 1])
        self.shape = self.flat.shape[1:]

    def alphas(self, K):
        return np.einsum("iyx,yx->i", self.flat, K)

    def gaps(self, alpha):
        return [alpha[a:b].max() - alpha[a:b].min() for a, b in zip(self.offsets[:-1], self.offsets[1:])]


def _lp_minimum(problem, min_accuracy):
    n_y, n_x = problem.shape
    nv = n_y * n_x + 1
    A = problem.flat.reshape(problem.flat.shape[0], -1)
    rows, rhs = [], []
    for i, j in _gap_pairs(problem.sizes):
        rows.append(np.concatenate([A[i] - A[j], [-1.0]]))
        rhs.append(0.0)
    for i in range(problem.floor_slice.start, problem.floor_slice.stop):
        if min_accuracy > 0:
            rows.append(np.concatenate([-A[i], [0.0]]))
            rhs.append(-min_accuracy)
    A_eq = np.zeros((n_y, nv))
    for y in range(n_y):
        A_eq[y, y * n_x : (y + 1) * n_x] = 1.0
    c = np.zeros(nv)
    c[-1] = 1.0
    res = linprog(
        c,
        A_ub=np.array(rows) if rows else None,
        b_ub=np.array(rhs) if rhs else None,
        A_eq=A_eq,
        b_eq=np.ones(n_y),
        bounds=[(0, None)] * nv,
        method="highs",
    )
    if not res.success:
        raise PreconditionError(f"no kernel meets the accuracy floor ({res.message})")
    return float(res.x[-1]), res.x[:-1].reshape(n_y, n_x)


def _subgradient(problem, K0, min_accuracy, iters, penalty):
    """Projected subgradient on max(gaps) + penalty * floor shortfall.

    ``K0`` stacks independent starts, shape (n_starts, n_y, n_x); all starts
    advance together. Returns the best (value, kernel) seen.
    """
    S = K0.shape[0]
    K = K0.copy()
    flat = problem.flat
    fs = problem.floor_slice
    bounds = list(zip(problem.offsets[:-1], problem.offsets[1:]))
    best_val, best_K = np.full(S, math.inf), K0.copy()
    rows = np.arange(S)
    for t in range(iters):
        a = np.einsum("iyx,syx->si", flat, K)
        hi = np.stack([lo + a[:, lo:up].argmax(axis=1) for lo, up in bounds], axis=1)
        low = np.stack([lo + a[:, lo:up].argmin(axis=1) for lo, up in bounds], axis=1)
        gaps = a[rows[:, None], hi] - a[rows[:, None], low]
        worst = gaps.argmax(axis=1)
        shortfall = np.maximum(min_accuracy - a[:, fs], 0.0)
        f = gaps[rows, worst] + penalty * shortfall.sum(axis=1)
        better = f < best_val
        best_val[better] = f[better]
        best_K[better] = K[better]
        g = flat[hi[rows, worst]] - flat[low[rows, worst]]
        g -= penalty * np.einsum("si,iyx->syx", (shortfall > 0).astype(float), flat[fs])
        norm = np.sqrt((g**2).sum(axis=(1, 2)))
        norm[norm == 0] = np.inf
        step = (0.5 / math.sqrt(t + 1)) / norm
        K = project_rows_to_simplex((K - step[:, None, None] * g).reshape(-1, K.shape[2])).reshape(K.shape)
    i = int(np.argmin(best_val))
    return float(best_val[i]), best_K[i]


def _grid_minimum(problem, min_accuracy, resolution, max_points=MAX_GRID_KERNELS, chunk=256):
    n_y, n_x = problem.shape
    pts, steps = simplex_grid(n_x, resolution)
    n_p = len(pts)
    if float(n_p) ** n_y > max_points:
        raise ValueError(f"grid of {float(n_p) ** n_y:.3g} kernels is too large; use a coarser resolution")
    rows = pts / steps
    # contrib[y, p, i]: lattice row p used at measurement y, contribution to alpha_i
    contrib = np.einsum("iyx,px->ypi", problem.flat, rows)
    fs = problem.floor_slice
    bounds = list(zip(problem.offsets[:-1], problem.offsets[1:]))
    heads = np.array(list(itertools.product(range(n_p), repeat=n_y - 1)), dtype=int).reshape(-1, n_y - 1)
    best_val, best_idx = math.inf, None
    for c in range(0, len(heads), chunk):
        h = heads[c : c + chunk]
        base = sum(contrib[y, h[:, y]] for y in range(n_y - 1)) if n_y > 1 else np.zeros((1, contrib.shape[2]))
        a = base[:, None, :] + contrib[n_y - 1][None, :, :]  # (chunk, n_p, k_total)
        gap = np.max([np.ptp(a[..., lo:hi], axis=2) for lo, hi in bounds], axis=0)
        ok = np.all(a[..., fs] >= min_accuracy - 1e-12, axis=2)
        gap = np.where(ok, gap, np.inf)
        flat_i = int(np.argmin(gap))
        hi_i, last = divmod(flat_i, n_p)
        if gap[hi_i, last] < best_val:
            best_val, best_idx = float(gap[hi_i, last]), (*h[hi_i], last)
    if best_idx is None:
        return math.inf, None
    return best_val, rows[list(best_idx)]


def oblivious_rdp_infeasibility(
    model,
    channel,
    partitions,
    min_accuracy=0.5,
    n_starts=20,
    iters=2000,
    rng_seed=0,
    grid_resolution=0.01,
    penalty=10.0,
):
    """Smallest achievable max(RDP gap) over a coarse and a refined partition.

    ``partitions = (coarse, fine)``, e.g. ``{A, B}`` and ``{A1, A2, B}``.
    Kernels must reach self-reconstruction rate ``min_accuracy`` on every group
    of the coarse partition; without a floor, the kernel that never
    reconstructs any group correctly equalizes every rate at zero.

    The grid search runs only when the kernel has at most 3 rows and 3 columns.
    """
    coarse, fine = partitions
    if coarse.k < 2 or fine.k <= coarse.k:
        raise PreconditionError("need a coarse partition with >= 2 groups and a strict refinement")
    problem = _RdpProblem(model, channel, [coarse, fine])
    n_y, n_x = problem.shape
    lp_val, lp_K = _lp_minimum(problem, min_accuracy)
    K0 = np.stack([chain_rng(rng_seed, s).dirichlet(np.ones(n_x), size=n_y) for s in range(n_starts)])
    best = _subgradient(problem, K0, min_accuracy, iters, penalty)
    out = InfeasibilityResult(best[0], best[1], lp_val, lp_K, min_accuracy=min_accuracy)
    if grid_resolution is not None and n_y <= 3 and n_x <= 3:
        res = _affordable_resolution(n_y, n_x, grid_resolution)
        gval, gK = _grid_minimum(problem, min_accuracy, res)
        out.grid_value, out.grid_kernel, out.grid_resolution = gval, gK, res
    return out


def _affordable_resolution(n_y, n_x, requested):
    """Finest resolution, no finer than ``requested``, whose lattice fits the budget."""
    for res in (requested, *[r for r in GRID_LADDER if r > requested]):
        steps = round(1 / res)
        if math.comb(steps + n_x - 1, n_x - 1) ** n_y <= MAX_GRID_KERNELS:
            return res
    return GRID_LADDER[-1]


@dataclass
class FrontierResult:
    points: list
    rdp_tol: float
    min_pr_gap_near_rdp: float
    max_alpha_near_rdp: float
    proof_threshold: float
    majority: str
    majority_mass: float
    n_kernels: int

    def to_dict(self):
        return asdict(self)


def _all_kernels(n_y, n_x, resolution):
    pts, steps = simplex_grid(n_x, resolution)
    rows = pts / steps
    idx = np.array(list(itertools.product(range(len(pts)), repeat=n_y)))
    return rows[idx]  # (n_kernels, n_y, n_x)


def rdp_pr_frontier(model, channel, partition, resolution=0.005, rdp_tol=0.01):
    """Pareto front of (RDP gap, PR gap) over a lattice of kernels.

    Requires a group with more than half the mass. ``proof_threshold`` is a
    lower bound on the PR gap of every lattice kernel whose RDP gap is at most
    ``rdp_tol``: ``(1 - a1) * (m1 - (1 - m1)) - rdp_tol * (1 - m1)`` with
    ``a1`` the largest majority rate among those kernels.
    """
    r = _prior(model)
    G = partition.membership(r.size)
    masses = r @ G
    top = int(np.argmax(masses))
    if masses[top] <= 0.5:
        raise PreconditionError(
            f"no majority group: largest group {partition.names[top]!r} has mass {masses[top]:.6g} <= 1/2"
        )
    kernels = _all_kernels(channel.n_symbols, r.size, resolution)
    M = channel.kernel.T @ (r[:, None] * G)  # (n_y, k): Pr(x* in c_i, y)
    psi = r @ channel.kernel
    Q = kernels @ G  # (n_k, n_y, k)
    alpha = np.einsum("nyi,yi->ni", Q, M) / masses
    out_mass = np.einsum("nyi,y->ni", Q, psi)
    rdp = alpha.max(axis=1) - alpha.min(axis=1)
    pr = np.abs(out_mass - masses).max(axis=1)

    order = np.lexsort((pr, rdp))
    front, best_pr = [], math.inf
    for i in order:
        if pr[i] < best_pr - 1e-15:
            front.append((float(rdp[i]), float(pr[i])))
            best_pr = pr[i]
    near = rdp <= rdp_tol
    m1 = masses[top]
    a1 = float(alpha[near, top].max()) if near.any() else math.nan
    threshold = (1 - a1) * (2 * m1 - 1) - rdp_tol * (1 - m1) if near.any() else math.nan
    return FrontierResult(
        front,
        rdp_tol,
        float(pr[near].min()) if near.any() else math.inf,
        a1,
        float(threshold),
        str(partition.names[top]),
        float(m1),
        int(len(kernels)),
    )
