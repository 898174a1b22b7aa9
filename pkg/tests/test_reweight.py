from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fairrecon import (
    DimensionError,
    DiscreteChannel,
    DiscreteModel,
    GroupCollection,
    RDPReweighter,
    alpha_under_weights,
    reweighted_model,
    solve_rdp_weights,
)

from conftest import CATDOG_KERNEL, random_model, random_partition
import oracles


def test_catdog_half_half_equalizes():
    alpha = oracles.reweighted_alpha([Fraction(1, 5), Fraction(4, 5)], CATDOG_KERNEL, ({0}, {1}), [Fraction(1, 2)] * 2)
    assert alpha == [Fraction(5, 9), Fraction(5, 9)]


def test_catdog_solver_from_uniform(catdog):
    model, channel, groups = catdog
    res = solve_rdp_weights(model, channel, groups)
    assert res.converged and res.n_iter == 0
    np.testing.assert_allclose(res.weights, [0.5, 0.5])
    np.testing.assert_allclose(res.alpha, [5 / 9, 5 / 9], atol=1e-12)


def test_catdog_solver_from_the_prior(catdog):
    model, channel, groups = catdog
    res = solve_rdp_weights(model, channel, groups, init=[0.2, 0.8])
    assert res.converged
    np.testing.assert_allclose(res.weights, [0.5, 0.5], atol=1e-3)
    assert res.ratio <= 1 + 1e-6
    assert res.monotonicity_violations == []


def test_reweighted_model_moves_group_masses():
    model = DiscreteModel([0.1, 0.3, 0.6])
    groups = GroupCollection(("a", "b"), ([0, 1], [2]))
    world = reweighted_model(model, groups, [0.5, 0.5])
    np.testing.assert_allclose(world.prior, [0.125, 0.375, 0.5])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 8), st.integers(2, 3))
def test_reweighting_keeps_within_group_shape(seed, n_x, k):
    rng = np.random.default_rng(seed)
    model = DiscreteModel(rng.dirichlet(np.ones(n_x)))
    groups = random_partition(rng, n_x, k)
    lam = rng.dirichlet(np.ones(k))
    world = reweighted_model(model, groups, lam)
    G = groups.membership(n_x)
    np.testing.assert_allclose(world.prior @ G, lam, atol=1e-12)
    for j in range(k):
        inside = G[:, j] == 1
        np.testing.assert_allclose(world.prior[inside] / lam[j], model.prior[inside] / model.prior[inside].sum(), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_truth_modes_agree(seed):
    rng = np.random.default_rng(seed)
    model, channel = random_model(rng, 6, 4)
    groups = random_partition(rng, 6, 3)
    lam = rng.dirichlet(np.ones(3))
    a = alpha_under_weights(model, channel, groups, lam, truth="reweighted")
    b = alpha_under_weights(model, channel, groups, lam, truth="original")
    np.testing.assert_allclose(a.alpha, b.alpha, atol=1e-12)
    members = [set(m) for m in groups.members]
    np.testing.assert_allclose(a.alpha, oracles.reweighted_alpha(model.prior.tolist(), channel.kernel.tolist(), members, lam), atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_solver_rates_move_monotonically(seed):
    rng = np.random.default_rng(seed)
    model, channel = random_model(rng, 6, 4)
    groups = random_partition(rng, 6, 3)
    res = solve_rdp_weights(model, channel, groups, tol=1e-4, max_iter=300)
    hi = [max(t["alpha"]) for t in res.trace]
    lo = [min(t["alpha"]) for t in res.trace]
    assert all(b <= a + 1e-12 for a, b in zip(hi, hi[1:]))
    assert all(b >= a - 1e-12 for a, b in zip(lo, lo[1:]))
    assert res.monotonicity_violations == []
    ratios = [t["ratio"] for t in res.trace]
    assert all(b <= a + 1e-12 for a, b in zip(ratios, ratios[1:]))


def test_identity_channel_needs_no_iterations():
    model = DiscreteModel([0.5, 0.3, 0.2])
    groups = GroupCollection(("a", "b", "c"), ([0], [1], [2]))
    res = solve_rdp_weights(model, DiscreteChannel.identity(3), groups)
    assert res.converged and res.n_iter == 0 and res.ratio == 1.0


def test_iteration_budget_is_not_an_error():
    rng = np.random.default_rng(5)
    model, channel = random_model(rng, 6, 4)
    groups = random_partition(rng, 6, 3)
    res = solve_rdp_weights(model, channel, groups, tol=1e-9, max_iter=2)
    assert not res.converged and res.n_iter == 2
    assert res.ratio == min(t["ratio"] for t in res.trace)


def test_damping_slows_but_converges():
    rng = np.random.default_rng(8)
    model, channel = random_model(rng, 6, 4)
    groups = random_partition(rng, 6, 3)
    fast = solve_rdp_weights(model, channel, groups, tol=1e-3)
    slow = solve_rdp_weights(model, channel, groups, tol=1e-3, damping=0.5)
    assert fast.converged and slow.converged
    assert slow.n_iter >= fast.n_iter


@pytest.mark.parametrize("kw", [dict(tol=0.0), dict(damping=0.0), dict(damping=1.5), dict(truth="other")])
def test_solver_argument_checks(catdog, kw):
    model, channel, groups = catdog
    with pytest.raises(ValueError):
        solve_rdp_weights(model, channel, groups, **kw)


def test_overlapping_groups_are_rejected():
    model = DiscreteModel([0.5, 0.5])
    groups = GroupCollection(("a", "b"), ([0, 1], [1]), is_partition=False)
    with pytest.raises(ValueError):
        reweighted_model(model, groups, [0.5, 0.5])


def test_weight_checks(catdog):
    model, _, groups = catdog
    with pytest.raises(ValueError):
        reweighted_model(model, groups, [1.0, 0.0])
    with pytest.raises(DimensionError):
        reweighted_model(model, groups, [1.0])


def test_trace_csv(catdog):
    model, channel, groups = catdog
    lines = solve_rdp_weights(model, channel, groups, init=[0.2, 0.8]).trace_csv().splitlines()
    assert lines[0] == "iteration,lambda_0,lambda_1,alpha_0,alpha_1,ratio"
    assert lines[1].startswith("0,0.2,0.8,")


def test_reweighter_estimator(catdog):
    model, channel, groups = catdog
    est = RDPReweighter(tol=1e-8)
    assert clone(est).get_params()["tol"] == 1e-8
    with pytest.raises(NotFittedError):
        est.transform(model)
    world = est.fit_transform(model, channel, groups)
    np.testing.assert_allclose(world.prior, [0.5, 0.5])
    assert est.converged_ and est.ratio_ <= 1 + 1e-8
