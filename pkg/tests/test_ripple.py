from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_rng
from rippler import _kernels
from rippler.errors import DegenerateProposal, NoPerturbableCell
from rippler.model import (FixedModel, ModelParams, Population, observation_log_density,
                           proposal_bounds, realise, simulate, simulate_observations,
                           transmission_log_density)
from rippler.ripple import (RippleChain, RipplerConfig, complement_mass, log_proposal_ratio,
                            rippler_latent_update, sample_noncentred, select_and_perturb)


@settings(deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1, exclude_max=True))
def test_complement_draw_lands_outside(lo, hi, r):
    a, b = min(lo, hi), max(lo, hi)
    if 1 + a - b <= 0:
        return
    v = _kernels.complement_draw(a, b, r)
    assert 0 <= v < 1 and not (a <= v < b)


def test_sample_noncentred_degenerate_bounds(rng):
    u = sample_noncentred(None, (np.zeros((50, 40)), np.ones((50, 40))), rng)
    assert 0 <= u.min() and u.max() < 1
    assert abs(u.mean() - 0.5) < 4 * math.sqrt(1 / 12 / u.size)


def test_single_perturbable_cell_always_chosen(rng):
    a = np.zeros((3, 3))
    b = np.ones((3, 3))
    a[2, 1] = 0.4
    u = np.full((3, 3), 0.5)
    for _ in range(20):
        u_new, origins = select_and_perturb(u, (a, b), 1, rng)
        assert origins == [(2, 1)] and u_new[2, 1] < 0.4


def test_selection_frequencies(rng):
    a = np.array([[0.0, 0.1, 0.3], [0.0, 0.0, 0.2], [0.5, 0.0, 0.05]])
    b = np.array([[0.9, 1.0, 1.0], [0.5, 1.0, 0.6], [1.0, 0.7, 1.0]])
    w = complement_mass(a, b).ravel()
    p = w / w.sum()
    n = 100_000
    counts = np.zeros(9)
    u = (a + b) / 2
    for _ in range(n):
        _, ((t, j),) = select_and_perturb(u, (a, b), 1, rng)
        counts[3 * t + j] += 1
    assert np.all(np.abs(counts / n - p) <= 3 * np.sqrt(p * (1 - p) / n) + 1e-12)


def test_no_perturbable_cell(rng):
    with pytest.raises(NoPerturbableCell):
        select_and_perturb(np.zeros((2, 2)), (np.zeros((2, 2)), np.ones((2, 2))), 1, rng)


def test_log_proposal_ratio_examples():
    cur = (np.zeros((1, 4)), np.full((1, 4), 0.5))  # complement masses sum to 2
    new = (np.zeros((1, 4)), np.zeros((1, 4)))  # and to 4
    assert log_proposal_ratio(cur, cur) == 0.0
    assert log_proposal_ratio(cur, new, 1) == pytest.approx(-math.log(2))
    assert log_proposal_ratio(cur, new, 2) == pytest.approx(-2 * math.log(2))
    with pytest.raises(DegenerateProposal):
        log_proposal_ratio((np.zeros((1, 1)), np.ones((1, 1))), cur)


def _setup(seed, n=10, T=8, n_hh=4, k=1):
    rng = make_rng(seed)
    pop = Population(rng.integers(0, n_hh, n), rng.normal(size=(n, 2)) * [10, 0.5])
    f = FixedModel()
    theta = ModelParams(0.4, 1.2, 0.01, -0.3)
    x = simulate(theta, pop, f, T, rng)
    y = simulate_observations(x, rng.random(x.shape) < 0.3, f, rng)
    return rng, pop, f, theta, x, y


@pytest.mark.parametrize("k", [1, 2, 3])
def test_log_ratio_matches_slow_path(k):
    rng, pop, f, theta, x, y = _setup(11 + k)
    chain = RippleChain(x, theta, y, pop, f, n_elements=k)
    for _ in range(100):
        x_cur = chain.x.copy()
        record, x_star = chain.step(rng)
        slow = (observation_log_density(y, x_star, f) - observation_log_density(y, x_cur, f)
                + log_proposal_ratio(proposal_bounds(x_cur, theta, pop, f),
                                     proposal_bounds(x_star, theta, pop, f), k))
        assert record.log_ratio == pytest.approx(slow, abs=1e-9)
        t_min = min(t for t, _ in record.origins)
        assert not (x_star[:t_min] != x_cur[:t_min]).any()  # ripples only move forward
        if k == 1:
            (t0, j0), = record.origins
            assert x_star[t0, j0] != x_cur[t0, j0]
        assert transmission_log_density(x_star, theta, pop, f) > -math.inf
        assert np.array_equal(chain.x, x_star if record.accepted else x_cur)


def test_proposal_matches_realisation_of_perturbed_draws():
    # the compiled replay equals realise() on draws consistent with the proposal
    rng, pop, f, theta, x, y = _setup(5)
    chain = RippleChain(x, theta, y, pop, f)
    for _ in range(50):
        x_cur = chain.x.copy()
        _, x_star = chain.step(rng)
        a, b = proposal_bounds(x_star, theta, pop, f)
        u = sample_noncentred(x_star, (a, b), rng)
        assert np.array_equal(realise(u, theta, pop, f), x_star)
        diff = np.argwhere(x_star != x_cur)
        if len(diff):
            t0 = diff[:, 0].min()
            assert np.array_equal(x_star[:t0], x_cur[:t0])


def test_cached_bounds_stay_exact():
    rng, pop, f, theta, x, y = _setup(8, n=30, T=15, n_hh=8)
    chain = RippleChain(x, theta, y, pop, f)
    chain.sweep(3000, rng)
    a, b = proposal_bounds(chain.x, theta, pop, f)
    np.testing.assert_allclose(chain.a, a, atol=1e-12)
    np.testing.assert_allclose(chain.b, b, atol=1e-12)
    np.testing.assert_allclose(chain.rowmass, complement_mass(a, b).sum(axis=1), atol=1e-9)
    np.testing.assert_array_equal(chain.tcount, chain.x.sum(axis=1))


def test_no_data_ratio_is_proposal_ratio():
    rng, pop, f, theta, x, _ = _setup(3)
    y = np.full(x.shape, -1, np.int8)
    chain = RippleChain(x, theta, y, pop, f)
    for _ in range(30):
        x_cur = chain.x.copy()
        record, x_star = chain.step(rng)
        expect = log_proposal_ratio(proposal_bounds(x_cur, theta, pop, f),
                                    proposal_bounds(x_star, theta, pop, f))
        assert record.log_ratio == pytest.approx(expect, abs=1e-9)


def test_functional_update(rng):
    _, pop, f, theta, x, y = _setup(4)
    x_new, record = rippler_latent_update(x, theta, y, RipplerConfig(1, 1), pop, f, rng)
    assert x_new.shape == x.shape and isinstance(record.accepted, bool)
    assert (record.n_changed >= 1) or not record.accepted


def test_config_validation():
    with pytest.raises(ValueError):
        RipplerConfig(0, 1)
    with pytest.raises(ValueError):
        RipplerConfig(1, 0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_sweep_is_deterministic(seed):
    _, pop, f, theta, x, y = _setup(seed % 1000)
    out = []
    for _ in range(2):
        chain = RippleChain(x, theta, y, pop, f)
        chain.sweep(200, make_rng(seed))
        out.append(chain.x.copy())
    assert np.array_equal(*out)


def test_tiny_stationarity(tiny, fixed):
    from rippler.diagnostics import exact_latent_posterior

    pop, theta, y = tiny
    exact = exact_latent_posterior(y, theta, pop, fixed)
    chain = RippleChain(np.zeros((4, 2), np.int8), theta, y, pop, fixed)
    trace = np.empty(200_000, np.int64)
    chain.sweep(trace.size, make_rng(9), trace)
    assert exact.tv_distance(trace) < 0.03
