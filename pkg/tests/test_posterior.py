from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fairrecon import (
    AnnealSchedule,
    DimensionError,
    DiscreteChannel,
    DiscreteModel,
    DivergenceError,
    ExactPosterior,
    FixedStochastic,
    GaussianLinearChannel,
    GaussianMixture,
    GroupCollection,
    LangevinPosteriorSampler,
    MapBaseline,
    UnreachableMeasurementError,
    exact_posterior,
    langevin_posterior_sample,
    map_reconstruct,
    posterior_matrix,
    sample,
    smoothed_score,
)
from fairrecon.posterior import noiseless_channel

from conftest import CATDOG_KERNEL, CATDOG_PRIOR, random_model
from oracles import posterior_rows


def test_catdog_posterior_exact(catdog):
    model, channel, _ = catdog
    rows = posterior_rows(CATDOG_PRIOR, CATDOG_KERNEL)
    assert rows == [[Fraction(1, 3), Fraction(2, 3)], [Fraction(1, 9), Fraction(8, 9)]]
    for y, row in zip(("y1", "y2"), rows):
        np.testing.assert_allclose(exact_posterior(model, channel, y), [float(v) for v in row], atol=1e-15)


def test_map_picks_dog_everywhere(catdog):
    model, channel, _ = catdog
    assert [map_reconstruct(model, channel, y) for y in ("y1", "y2")] == [1, 1]
    est = MapBaseline(model).fit(channel)
    np.testing.assert_array_equal(est.predict(["y1", "y2"]), [1, 1])


def test_map_ties_go_to_lowest_index():
    model = DiscreteModel([0.5, 0.5])
    assert map_reconstruct(model, DiscreteChannel([[0.5, 0.5], [0.5, 0.5]]), 0) == 0


def test_unreachable_measurement():
    model = DiscreteModel([1.0, 0.0])
    channel = DiscreteChannel([[1.0, 0.0], [0.0, 1.0]], ("a", "b"))
    with pytest.raises(UnreachableMeasurementError) as info:
        exact_posterior(model, channel, "b")
    assert info.value.symbol == "b"
    est = ExactPosterior(model).fit(channel)
    assert est.reachable_.tolist() == [True, False]
    with pytest.raises(UnreachableMeasurementError):
        est.predict_proba("b")


def test_prior_channel_dimension_mismatch(catdog):
    _, channel, _ = catdog
    with pytest.raises(DimensionError):
        exact_posterior(DiscreteModel([1 / 3] * 3), channel, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12), st.integers(2, 6))
def test_posterior_is_bayes_rule(seed, n_x, n_y):
    model, channel = random_model(np.random.default_rng(seed), n_x, n_y)
    post, psi = posterior_matrix(model, channel)
    np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(post * psi[:, None], (model.prior[:, None] * channel.kernel).T, atol=1e-15)
    oracle = posterior_rows(model.prior.tolist(), channel.kernel.tolist())
    np.testing.assert_allclose(post, oracle, atol=1e-12)


def test_kernels_follow_the_estimator_protocol(catdog):
    model, channel, _ = catdog
    est = ExactPosterior(model)
    assert est.get_params() == {"prior": model}
    with pytest.raises(NotFittedError):
        est.predict_proba("y1")
    twin = clone(est).fit(channel)
    assert twin is not est and twin.n_symbols_ == 2 and twin.n_states_ == 2
    np.testing.assert_allclose(twin.predict_proba(["y1", "y2"]), [[1 / 3, 2 / 3], [1 / 9, 8 / 9]])
    with pytest.raises(ValueError):
        ExactPosterior().fit(channel)


def test_fixed_kernel_shape_checked(catdog):
    _, channel, _ = catdog
    with pytest.raises(DimensionError):
        FixedStochastic(np.full((3, 2), 0.5)).fit(channel)
    with pytest.raises(ValueError):
        FixedStochastic([[0.5, 0.4], [0.5, 0.5]]).fit(channel)
    assert FixedStochastic.uniform(2, 2).fit(channel).conditional_.tolist() == [[0.5, 0.5], [0.5, 0.5]]


def test_discrete_kernels_reject_gaussian_channel():
    with pytest.raises(TypeError):
        ExactPosterior(DiscreteModel([1.0])).fit(GaussianLinearChannel([[1.0]], 1.0))


def test_sampling_frequencies(catdog):
    model, channel, groups = catdog
    est = ExactPosterior(model).fit(channel)
    draws = est.sample(["y2"] * 40_000, random_state=3)
    assert draws.mean() == pytest.approx(8 / 9, abs=4 * np.sqrt((8 / 9) * (1 / 9) / 40_000))
    np.testing.assert_array_equal(draws, est.sample(["y2"] * 40_000, random_state=3))
    x_hat, names = sample(est, channel, "y1", rng_seed=5, groups=groups)
    assert names == [groups.names[x_hat]]


def test_sample_accepts_raw_matrix(catdog):
    _, channel, _ = catdog
    assert sample([[0.0, 1.0], [0.0, 1.0]], channel, "y1", rng_seed=0) == 1


@settings(max_examples=40, deadline=None)
@given(st.floats(-6, 6), st.floats(0.0, 3.0))
def test_score_matches_finite_difference(x, sigma):
    g = GaussianMixture([0.3, 0.7], [-2.0, 1.5], [0.4, 1.1])
    h = 1e-5
    fd = (g.log_density([[x + h]], sigma) - g.log_density([[x - h]], sigma)) / (2 * h)
    assert smoothed_score(g, sigma, x) == pytest.approx(fd[0], rel=1e-5, abs=1e-6)


def test_score_shapes():
    g1 = GaussianMixture([1.0], [0.0], [1.0])
    assert np.shape(smoothed_score(g1, 0.0, 2.0)) == ()
    assert smoothed_score(g1, 0.0, np.array([1.0, 2.0])).shape == (2,)
    g2 = GaussianMixture([0.5, 0.5], [[0.0, 0.0], [1.0, 1.0]], [1.0, 1.0])
    s = smoothed_score(g2, 0.5, np.zeros((4, 2)))
    assert s.shape == (4, 2)
    with pytest.raises(DimensionError):
        smoothed_score(g2, 0.5, np.zeros((4, 3)))
    with pytest.raises(ValueError):
        smoothed_score(g1, -1.0, 0.0)


def test_schedule_levels_and_steps():
    s = AnnealSchedule(1.0, 0.01, 30, gamma_end=1e-4)
    assert s.n_levels == 10
    np.testing.assert_allclose(np.diff(np.log(s.level_sigmas())), np.log(0.01) / 9)
    sig, gam = s.step_values()
    assert sig.size == 30 and np.all(sig[0:3] == 1.0) and sig[-1] == pytest.approx(0.01)
    np.testing.assert_allclose(gam, 1e-4 * (sig / 0.01) ** 2)
    assert AnnealSchedule(**s.to_dict()) == s


@pytest.mark.parametrize(
    "kw",
    [
        dict(sigma_start=0.1, sigma_end=1.0, total_steps=10, gamma_end=1e-3),
        dict(sigma_start=1.0, sigma_end=0.1, total_steps=-1, gamma_end=1e-3),
        dict(sigma_start=1.0, sigma_end=0.1, total_steps=10, gamma_end=0.0),
        dict(sigma_start=1.0, sigma_end=0.1, total_steps=10, gamma_end=1e-3, steps_per_level=0),
    ],
)
def test_schedule_rejects_bad_settings(kw):
    with pytest.raises(ValueError):
        AnnealSchedule(**kw)


SHORT = AnnealSchedule(1.0, 0.05, 300, gamma_end=7.5e-4)


def test_langevin_independent_of_batch_size():
    g = GaussianMixture([1.0], [1.0], [1.0])
    ch = GaussianLinearChannel([[1.0]], 0.5)
    a = langevin_posterior_sample(g, ch, [2.0], SHORT, rng_seed=4, n_chains=50, batch_size=7)
    b = langevin_posterior_sample(g, ch, [2.0], SHORT, rng_seed=4, n_chains=50, batch_size=50)
    np.testing.assert_array_equal(a, b)
    # chain i is the same whether or not later chains exist
    np.testing.assert_array_equal(a[:10], langevin_posterior_sample(g, ch, [2.0], SHORT, rng_seed=4, n_chains=10))


def test_langevin_conjugate_quick():
    g = GaussianMixture([1.0], [1.0], [1.0])
    ch = GaussianLinearChannel([[1.0]], 0.5)
    xs = langevin_posterior_sample(g, ch, [2.0], AnnealSchedule(1.0, 0.05, 900, 7.5e-4), rng_seed=11, n_chains=2000)[:, 0]
    assert abs(xs.mean() - 1.8) < 4 * np.sqrt(0.2 / 2000)
    assert xs.var() == pytest.approx(0.2, rel=0.15)


def test_langevin_single_draw_shape():
    g = GaussianMixture([1.0], [[0.0, 0.0]], [1.0])
    ch = GaussianLinearChannel([[1.0, 0.0]], 1.0)
    assert langevin_posterior_sample(g, ch, [0.5], SHORT, rng_seed=0).shape == (2,)


def test_langevin_input_checks():
    g = GaussianMixture([1.0], [0.0], [1.0])
    with pytest.raises(TypeError):
        langevin_posterior_sample(g, DiscreteChannel([[1.0]]), [0.0], SHORT)
    with pytest.raises(DimensionError):
        langevin_posterior_sample(g, GaussianLinearChannel(np.eye(2), 1.0), [0.0, 0.0], SHORT)
    with pytest.raises(DimensionError):
        langevin_posterior_sample(g, GaussianLinearChannel([[1.0]], 1.0), [0.0, 1.0], SHORT)
    with pytest.raises(ValueError):
        langevin_posterior_sample(g, GaussianLinearChannel([[1.0]], 1.0), [0.0], SHORT, likelihood_variance="x")


def test_langevin_divergence_is_reported():
    g = GaussianMixture([1.0], [0.0], [1e-4])
    with pytest.raises(DivergenceError) as info:
        langevin_posterior_sample(
            g, GaussianLinearChannel([[1.0]], 1.0), [0.0], AnnealSchedule(1.0, 1.0, 200, gamma_end=50.0), rng_seed=0, n_chains=3
        )
    assert info.value.step >= 0


def test_noiseless_schedule_mode():
    # y = x exactly: the chain should land on the measurement
    g = GaussianMixture([1.0], [0.0], [4.0])
    sched = AnnealSchedule(2.0, 0.01, 900, gamma_end=3e-5)
    ch = noiseless_channel([[1.0]], sched)
    xs = langevin_posterior_sample(g, ch, [1.2], sched, rng_seed=2, n_chains=300, likelihood_variance="schedule")
    assert xs.mean() == pytest.approx(1.2, abs=0.02)


def test_sampler_estimator():
    g = GaussianMixture([1.0], [1.0], [1.0])
    est = LangevinPosteriorSampler(g, SHORT, random_state=1)
    assert clone(est).get_params()["random_state"] == 1
    with pytest.raises(NotFittedError):
        est.sample([0.0])
    est.fit(GaussianLinearChannel([[1.0]], 0.5))
    np.testing.assert_array_equal(
        est.sample([2.0], n_chains=5),
        langevin_posterior_sample(g, GaussianLinearChannel([[1.0]], 0.5), [2.0], SHORT, rng_seed=1, n_chains=5),
    )
    with pytest.raises(TypeError):
        est.fit(DiscreteChannel([[1.0]]))


def test_sample_group_names_with_overlap():
    model = DiscreteModel([0.5, 0.5])
    channel = DiscreteChannel.identity(2)
    groups = GroupCollection(("all", "second"), ([0, 1], [1]), is_partition=False)
    _, names = sample(ExactPosterior(model), channel, 1, rng_seed=0, groups=groups)
    assert names == ["all", "second"]
