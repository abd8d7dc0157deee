from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_rng
from rippler.model import FixedModel, ModelParams, Population, simulate, transmission_log_density
from rippler.params import (AdaptState, PriorSpec, log_prior, param_log_posterior, propose,
                            rwm_step)


def test_prior_example():
    lp = log_prior(ModelParams(1.0, 1.0, 0.0, 0.0), PriorSpec())
    assert lp == pytest.approx(2 * (math.log(0.001) - 0.001) + 2 * math.log(0.001 / 2))


def test_prior_support():
    assert log_prior(ModelParams(-0.1, 1.0), PriorSpec()) == -math.inf
    assert log_prior(ModelParams(0.1, -1.0), PriorSpec()) == -math.inf
    with pytest.raises(ValueError):
        PriorSpec(mu_G=0.0)


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_prior_laplace_symmetry(a, s):
    p = PriorSpec(0.5, 0.5, 2.0, 3.0)
    assert log_prior(ModelParams(0.1, 0.1, a, s), p) == log_prior(ModelParams(0.1, 0.1, -a, -s), p)


def test_posterior_ratio_matches_slow_path(small_pop, fixed):
    x = simulate(ModelParams(0.3, 1.5, 0.1, -0.2), small_pop, fixed, 10, make_rng(0))
    p = PriorSpec()
    t1, t2 = ModelParams(0.3, 1.5, 0.1, -0.2), ModelParams(0.25, 2.0, 0.05, 0.3)
    slow = (transmission_log_density(x, t2, small_pop, fixed) + log_prior(t2, p)
            - transmission_log_density(x, t1, small_pop, fixed) - log_prior(t1, p))
    fast = (param_log_posterior(t2, x, None, p, small_pop, fixed)
            - param_log_posterior(t1, x, None, p, small_pop, fixed))
    assert fast == pytest.approx(slow, abs=1e-10)
    assert param_log_posterior(ModelParams(-1, 1), x, None, p, small_pop, fixed) == -math.inf


def test_beta_h_flat_without_household_exposure(fixed):
    pop = Population(np.array([0, 1, 2]))
    x = np.zeros((5, 3), np.int8)
    vals = {param_log_posterior(ModelParams(0.2, bh), x, None, PriorSpec(1, 1e-300, 1, 1), pop,
                                fixed) for bh in (0.1, 1.0, 5.0)}
    assert max(vals) - min(vals) < 1e-12


def test_zero_variance_proposal_always_accepted(small_pop, fixed):
    x = simulate(ModelParams(0.3, 1.5), small_pop, fixed, 6, make_rng(1))
    adapt = AdaptState(Sigma=np.zeros((4, 4)), Sigma0=np.zeros((4, 4)), frozen=True)
    theta = ModelParams(0.3, 1.5)
    rng = make_rng(2)
    for _ in range(50):
        theta2, _, acc, _ = rwm_step(theta, x, None, adapt, PriorSpec(), small_pop, fixed, rng)
        assert acc and theta2 == theta


def test_scale_adaptation_direction():
    up = AdaptState()
    down = AdaptState()
    for k in range(50):
        up.adapt(np.zeros(4), 1.0)
        down.adapt(np.zeros(4), 0.0)
        up.n_steps += 1
        down.n_steps += 1
    assert up.kappa > 1.19 > down.kappa


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(2, 300))
def test_covariance_stays_psd(seed, n):
    rng = make_rng(seed)
    adapt = AdaptState()
    scale = rng.uniform(0.001, 10, 4)
    for k in range(n):
        adapt.adapt(rng.normal(size=4) * scale, rng.random())
        adapt.n_steps += 1
        S = adapt.Sigma
        assert np.array_equal(S, S.T)
        assert np.linalg.eigvalsh(S).min() >= -1e-12 * max(1.0, np.abs(S).max())


def test_learned_covariance_tracks_target():
    rng = make_rng(4)
    adapt = AdaptState()
    C = np.array([[1.0, 0.5, 0, 0], [0.5, 2.0, 0, 0], [0, 0, 0.1, 0], [0, 0, 0, 0.3]])
    L = np.linalg.cholesky(C)
    for _ in range(20000):
        adapt.adapt(L @ rng.normal(size=4), 0.234)
        adapt.n_steps += 1
    np.testing.assert_allclose(adapt.Sigma, C, atol=0.15)


def test_escape_component_frequency():
    adapt = AdaptState(Sigma=np.eye(4), Sigma0=np.eye(4) * 1e-12, epsilon=0.3, shape_start=0)
    rng = make_rng(5)
    esc = [propose(ModelParams(1, 1), adapt, rng)[1] for _ in range(20000)]
    assert abs(np.mean(esc) - 0.3) < 0.02


def test_frozen_adaptation_is_static():
    adapt = AdaptState(frozen=True)
    k0, S0 = adapt.kappa, adapt.Sigma.copy()
    adapt.adapt(np.ones(4), 0.0)
    assert adapt.kappa == k0 and np.array_equal(adapt.Sigma, S0)


def test_validation():
    with pytest.raises(ValueError):
        AdaptState(kappa=0)
    with pytest.raises(ValueError):
        AdaptState(epsilon=1.0)
    with pytest.raises(ValueError):
        AdaptState(Sigma=np.ones((3, 3)))


def test_rwm_targets_posterior(fixed):
    # singletons: only beta_G touches the likelihood, so its marginal is a 1-d grid integral
    pop = Population(np.arange(30))
    x = simulate(ModelParams(0.8, 0.0), pop, fixed, 20, make_rng(6))
    priors = PriorSpec(1.0, 1.0, 1e3, 1e3)
    adapt = AdaptState()
    rng = make_rng(7)
    theta = ModelParams(0.5, 1.0)
    draws = []
    for k in range(20000):
        theta, adapt, _, _ = rwm_step(theta, x, None, adapt, priors, pop, fixed, rng)
        if k >= 2000:
            draws.append(theta.beta_G)
    grid = np.linspace(1e-4, 4, 4000)
    lp = np.array([param_log_posterior(ModelParams(g, 1.0), x, None, priors, pop, fixed)
                   for g in grid])
    w = np.exp(lp - lp.max())
    mean = (grid * w).sum() / w.sum()
    sd = math.sqrt(((grid - mean) ** 2 * w).sum() / w.sum())
    assert abs(np.mean(draws) - mean) < 0.2 * sd
