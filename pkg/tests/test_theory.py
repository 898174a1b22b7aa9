import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairrecon import (
    DimensionError,
    DiscreteChannel,
    DiscreteModel,
    GroupCollection,
    PreconditionError,
    check_tv_spe_bound,
    check_winf_spe_bound,
    mismatched_joint,
    monotone_coupling,
    oblivious_rdp_infeasibility,
    rdp_pr_frontier,
)
from fairrecon.theory import (
    Coupling,
    grid_gaussian,
    project_rows_to_simplex,
    shift_cells,
    simplex_grid,
    thickened_boundary,
)
from fairrecon.verification import confusable_fixture, run_suite, winf_configuration

from conftest import CATDOG_KERNEL, random_model
import oracles


def test_mismatched_catdog_example(catdog):
    _, channel, _ = catdog
    R, P = (Fraction(1, 5), Fraction(4, 5)), (Fraction(1, 4), Fraction(3, 4))
    J = oracles.joint(R, CATDOG_KERNEL, oracles.posterior_rows(P, CATDOG_KERNEL), ({0}, {1}))
    # J[i][j] has the reconstruction in group i and the truth in group j
    q_uv_exact, q_vu_exact = J[1][0], J[0][1]
    q_uv, q_vu = mismatched_joint([0.2, 0.8], [0.25, 0.75], channel, {0}, {1})
    assert q_uv == pytest.approx(float(q_uv_exact), abs=1e-15)
    assert q_vu == pytest.approx(float(q_vu_exact), abs=1e-15)
    assert q_uv == pytest.approx(0.13714, abs=1e-5) and q_vu == pytest.approx(0.18286, abs=1e-5)
    assert abs(q_uv - q_vu) <= 2 * 0.05


def test_matched_priors_and_equal_sets_are_symmetric(catdog):
    model, channel, _ = catdog
    a, b = mismatched_joint(model, model, channel, {0}, {1})
    assert abs(a - b) < 1e-15
    a, b = mismatched_joint([0.2, 0.8], [0.25, 0.75], channel, {0, 1}, {0, 1})
    assert a == b


def test_mismatched_dimension_checks(catdog):
    _, channel, _ = catdog
    with pytest.raises(DimensionError):
        mismatched_joint([0.5, 0.5], [1 / 3] * 3, channel, {0}, {1})


def test_assumed_prior_must_explain_truth():
    with pytest.raises(PreconditionError):
        mismatched_joint([0.5, 0.5], [1.0, 0.0], DiscreteChannel.identity(2), {0}, {1})


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_tv_bound_on_random_models(seed):
    rng = np.random.default_rng(seed)
    truth, channel = random_model(rng, 6, 5)
    assumed = rng.dirichlet(np.ones(6))
    chk = check_tv_spe_bound(truth, assumed, channel, trials=60, rng_seed=seed)
    assert chk.passed and chk.worst_ratio <= 1 + 1e-12
    assert len(chk.trials) == 61


def test_tv_bound_with_equal_priors_reports_symmetry(catdog):
    model, channel, _ = catdog
    chk = check_tv_spe_bound(model, model, channel, trials=50)
    assert chk.passed and chk.worst_ratio == 0.0 and chk.tv == 0.0
    assert chk.worst_asymmetry < 1e-12
    assert all(t["ratio"] is None for t in chk.trials)


def test_adversarial_pair_is_close_to_tight():
    # a noiseless channel with R and P far apart: the proof's extreme case
    chk = check_tv_spe_bound([0.9, 0.1], [0.1, 0.9], DiscreteChannel.identity(2), trials=0)
    adv = chk.trials[-1]
    assert adv["U"] == [0] and adv["V"] == [1]
    assert adv["ratio"] <= 1


def test_monotone_coupling_marginals_and_displacement():
    pos = np.arange(10) * 0.5
    r = grid_gaussian(pos, 2.0, 0.7, support=(2, 8))
    p = shift_cells(r, 1)
    c = monotone_coupling(r, p, pos)
    np.testing.assert_allclose(c.gamma.sum(axis=1), r, atol=1e-15)
    np.testing.assert_allclose(c.gamma.sum(axis=0), p, atol=1e-15)
    assert c.epsilon == pytest.approx(0.5)
    c.check(r, p, epsilon=0.5)
    with pytest.raises(ValueError, match="moves mass"):
        c.check(r, p, epsilon=0.25)


def test_coupling_marginal_mismatch_detected():
    pos = np.arange(3.0)
    c = Coupling(np.diag([0.5, 0.5, 0.0]), pos)
    with pytest.raises(ValueError, match="first marginal"):
        c.check(np.array([0.4, 0.6, 0.0]), np.array([0.5, 0.5, 0.0]))
    with pytest.raises(ValueError, match="second marginal"):
        c.check(np.array([0.5, 0.5, 0.0]), np.array([0.4, 0.6, 0.0]))


def test_shift_refuses_to_drop_mass():
    with pytest.raises(ValueError):
        shift_cells(np.array([0.5, 0.5]), 1)
    with pytest.raises(ValueError):
        shift_cells(np.array([0.5, 0.5]), -1)
    np.testing.assert_array_equal(shift_cells(np.array([0.0, 1.0, 0.0]), -1), [1.0, 0.0, 0.0])


def test_thickened_boundary():
    pos = np.arange(10.0)
    np.testing.assert_array_equal(thickened_boundary(pos, range(3, 6), 2.0), [1, 2, 6, 7])
    assert thickened_boundary(pos, range(3, 6), 0.0).size == 0


def test_winf_zero_displacement_reduces_to_symmetry():
    cfg = winf_configuration(np.random.default_rng(0))
    r = cfg["truth"]
    res = check_winf_spe_bound(r, r, cfg["positions"], monotone_coupling(r, r, cfg["positions"]), cfg["channel"], cfg["U"], cfg["V"])
    assert res.epsilon == 0.0 and res.channel_tv == 0.0
    assert abs(res.q_uv - res.q_vu) < 1e-12 and res.passed


def test_winf_flags_assumption_violations():
    cfg = winf_configuration(np.random.default_rng(3))
    pos = cfg["positions"]
    # U covers the bulk of the prior, so its thickened boundary carries real mass
    U, V = range(30, 41), range(41, 50)
    c = monotone_coupling(cfg["truth"], cfg["assumed"], pos)
    res = check_winf_spe_bound(cfg["truth"], cfg["assumed"], pos, c, cfg["channel"], U, V, delta=1e-3)
    assert res.passed
    assert res.assumption_violations
    assert res.delta_eff >= res.boundary.delta


def test_winf_rejects_bad_coupling():
    cfg = winf_configuration(np.random.default_rng(1))
    bad = Coupling(np.diag(cfg["truth"]), cfg["positions"])
    with pytest.raises(ValueError):
        check_winf_spe_bound(cfg["truth"], cfg["assumed"], cfg["positions"], bad, cfg["channel"], cfg["U"], cfg["V"])


def test_case3_suite_small():
    rep = run_suite("case3", seed=5, n_configurations=12)
    assert rep.passed and rep.summary["assumptions_met"] > 0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(2, 6))
def test_simplex_projection(seed, rows, cols):
    rng = np.random.default_rng(seed)
    K = rng.normal(scale=2.0, size=(rows, cols))
    P = project_rows_to_simplex(K)
    assert np.all(P >= 0)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(project_rows_to_simplex(P), P, atol=1e-12)
    # no random point of the simplex is closer to K
    Z = rng.dirichlet(np.ones(cols), size=(200, rows))
    d_proj = ((P - K) ** 2).sum(axis=1)
    d_rand = ((Z - K) ** 2).sum(axis=2).min(axis=0)
    assert np.all(d_proj <= d_rand + 1e-12)


@pytest.mark.parametrize("n, res", [(2, 0.1), (3, 0.05), (4, 0.25)])
def test_simplex_grid_counts(n, res):
    pts, steps = simplex_grid(n, res)
    assert len(pts) == math.comb(steps + n - 1, n - 1)
    assert np.all(pts.sum(axis=1) == steps)
    with pytest.raises(ValueError):
        simplex_grid(n, 0.3)


def test_oblivious_fixture_three_routes():
    model, channel, parts = confusable_fixture()
    res = oblivious_rdp_infeasibility(model, channel, parts, grid_resolution=0.05)
    assert res.lp_value == pytest.approx(1 / 6, abs=1e-9)
    assert res.optimizer_value >= res.lp_value - 1e-9
    assert res.grid_value >= res.lp_value - 1e-9
    assert res.grid_value - res.lp_value < 0.05
    assert res.certified_minimum >= 0.05
    K = res.lp_kernel
    np.testing.assert_allclose(K.sum(axis=1), 1.0, atol=1e-9)


def test_oblivious_floor_matters():
    model, channel, parts = confusable_fixture()
    low = oblivious_rdp_infeasibility(model, channel, parts, min_accuracy=0.1, grid_resolution=None, n_starts=4, iters=300)
    assert low.lp_value == pytest.approx(1 / 30, abs=1e-9)
    none = oblivious_rdp_infeasibility(model, channel, parts, min_accuracy=0.0, grid_resolution=None, n_starts=4, iters=300)
    assert none.lp_value == pytest.approx(0.0, abs=1e-9)
    # one symbol for every state: the coarse rates sum to at most 1
    blind = DiscreteChannel([[1.0], [1.0], [1.0]])
    with pytest.raises(PreconditionError, match="accuracy floor"):
        oblivious_rdp_infeasibility(model, blind, parts, min_accuracy=0.6, grid_resolution=None)


def test_oblivious_zero_without_confusion():
    model, _, parts = confusable_fixture()
    res = oblivious_rdp_infeasibility(model, DiscreteChannel.identity(3), parts, grid_resolution=0.5)
    assert res.lp_value == pytest.approx(0.0, abs=1e-9)
    assert res.grid_value == pytest.approx(0.0, abs=1e-12)
    assert res.grid_kernel.shape == (3, 3)


def test_oblivious_overlap_sweep_is_monotone():
    values = []
    for o in (1.0, 0.75, 0.5, 0.25, 0.0):
        m, ch, parts = confusable_fixture(o) if o > 0 else (confusable_fixture()[0], DiscreteChannel.identity(3), confusable_fixture()[2])
        values.append(oblivious_rdp_infeasibility(m, ch, parts, min_accuracy=0.75, grid_resolution=None, n_starts=4, iters=300).lp_value)
    assert all(a >= b - 1e-9 for a, b in zip(values, values[1:]))
    assert values[0] > 0 and values[-1] == pytest.approx(0.0, abs=1e-9)


def test_oblivious_needs_a_refinement():
    model, channel, (coarse, _) = confusable_fixture()
    with pytest.raises(PreconditionError):
        oblivious_rdp_infeasibility(model, channel, (coarse, coarse))


def test_frontier_catdog(catdog):
    model, channel, groups = catdog
    f = rdp_pr_frontier(model, channel, groups, resolution=0.01)
    assert f.min_pr_gap_near_rdp >= 0.1
    assert f.min_pr_gap_near_rdp >= f.proof_threshold - 1e-12
    assert f.majority == "dog" and f.majority_mass == 0.8
    rdp = [p[0] for p in f.points]
    pr = [p[1] for p in f.points]
    assert rdp == sorted(rdp) and pr == sorted(pr, reverse=True)


def test_frontier_brute_force_agrees(catdog):
    model, channel, groups = catdog
    f = rdp_pr_frontier(model, channel, groups, resolution=0.05, rdp_tol=0.01)
    best = math.inf
    steps = 20
    for a in range(steps + 1):
        for b in range(steps + 1):
            rows = [[a / steps, 1 - a / steps], [b / steps, 1 - b / steps]]
            J = oracles.joint([0.2, 0.8], [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], rows, ({0}, {1}))
            alpha = [J[0][0] / 0.2, J[1][1] / 0.8]
            out = [J[0][0] + J[0][1], J[1][0] + J[1][1]]
            if max(alpha) - min(alpha) <= 0.01:
                best = min(best, max(abs(out[0] - 0.2), abs(out[1] - 0.8)))
    assert f.min_pr_gap_near_rdp == pytest.approx(best, abs=1e-12)


def test_frontier_perfect_channel_reaches_origin(catdog):
    model, _, groups = catdog
    f = rdp_pr_frontier(model, DiscreteChannel.identity(2), groups, resolution=0.05)
    assert f.points[0] == (0.0, 0.0)


def test_frontier_needs_a_majority():
    with pytest.raises(PreconditionError, match="no majority"):
        rdp_pr_frontier(DiscreteModel([0.5, 0.5]), DiscreteChannel.identity(2), GroupCollection(("a", "b"), ([0], [1])))


def test_frontier_narrow_majority():
    model = DiscreteModel([0.49, 0.51])
    channel = DiscreteChannel([[0.95, 0.05], [0.05, 0.95]])
    f = rdp_pr_frontier(model, channel, GroupCollection(("a", "b"), ([0], [1])), resolution=0.005)
    assert 0 < f.min_pr_gap_near_rdp < 0.01
