import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irsnoma.channels import ChannelSet, channel_strengths, combined_channel
from irsnoma.errors import DomainError
from irsnoma.ordering import order_users
from irsnoma.siso import (BisectionConfig, SolverConfig, closed_form_phases_two_user,
                          maxmin_sinr_siso, optimal_power_allocation, phase_opt_siso,
                          rates_from_sinr, sic_sinr_matrix, sinr_siso, solve_siso)

from conftest import random_channels, toy_channels
from oracles import grid_balanced_q, recursion_alphas, recursion_q


def test_sinr_siso_cases():
    assert sinr_siso([1.0, 4.0], [0.0, 1.0], 10.0, 1.0, 1) == pytest.approx(40.0)
    assert sinr_siso([1.0, 4.0], [0.0, 1.0], 10.0, 1.0, 0) == 0.0
    a = [0.89248, 0.10752]
    for k in range(2):
        assert sinr_siso([1.0, 4.0], a, 10.0, 1.0, k) == pytest.approx(4.3007, abs=2e-4)


def test_symmetric_closed_case():
    alloc, q = optimal_power_allocation([1.0, 1.0], 1.0, 1.0)
    assert q == pytest.approx(math.sqrt(2) - 1, abs=1e-10)
    assert np.allclose(alloc.alpha, [2 - math.sqrt(2), math.sqrt(2) - 1], atol=1e-10)


def test_asymmetric_closed_case():
    alloc, q = optimal_power_allocation([1.0, 4.0], 10.0, 1.0)
    assert q == pytest.approx((-5 + math.sqrt(185)) / 2, abs=1e-10)
    assert np.allclose(alloc.alpha, [0.89248, 0.10752], atol=1e-5)


def test_rejects_zero_strength():
    with pytest.raises(DomainError):
        optimal_power_allocation([0.0, 1.0], 1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), k=st.integers(2, 8))
def test_matches_recursion_oracle(seed, k):
    rng = np.random.default_rng(seed)
    s = np.sort(10 ** rng.uniform(-3, 3, k))
    snr = 10 ** rng.uniform(0, 6)
    alloc, q = optimal_power_allocation(s, snr, 1.0)
    assert q == pytest.approx(recursion_q(s, snr), rel=1e-8)
    assert alloc.alpha.sum() == pytest.approx(1.0, abs=1e-10)
    gam = [sinr_siso(s, alloc, snr, 1.0, i) for i in range(k)]
    assert np.max(np.abs(np.array(gam) - q)) <= 1e-8 * q


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), k=st.integers(2, 6))
def test_alpha_sum_strictly_increasing(seed, k):
    rng = np.random.default_rng(seed)
    s = np.sort(rng.uniform(0.1, 10, k))
    sums = [recursion_alphas(q, s, 5.0).sum() for q in np.linspace(0.01, 10, 50)]
    assert np.all(np.diff(sums) > 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), k=st.integers(2, 6))
def test_sorted_strengths_make_own_sinr_binding(seed, k):
    rng = np.random.default_rng(seed)
    s = np.sort(rng.uniform(0.1, 10, k))
    a = rng.dirichlet(np.ones(k))
    gam = sic_sinr_matrix(s, a, 3.0)
    for t in range(k):
        assert np.all(gam[t, t:] >= gam[t, t] * (1 - 1e-12))


def test_rate_map():
    assert np.allclose(rates_from_sinr([0.0, 1.0, 3.0]), [0.0, 1.0, 2.0])


def _single_antenna_channel(xi, phi, psi, m=3):
    F = np.exp(1j * psi) * np.ones((m, 1))
    g = np.vstack([np.ones(m), np.exp(-1j * phi) * np.ones(m)])
    v = np.array([[1.0], [np.exp(-1j * xi)]])
    return ChannelSet(F, g, v, 1.0)


def test_closed_form_phases():
    ch = _single_antenna_channel(0.0, 0.0, 0.0)
    assert np.allclose(closed_form_phases_two_user(ch).theta, 0.0)
    ch = _single_antenna_channel(math.pi / 2, math.pi / 4, math.pi / 8)
    assert np.allclose(closed_form_phases_two_user(ch).theta, math.pi / 8)


def test_closed_form_cophases_strong_user(rng):
    for _ in range(10):
        ch = toy_channels(rng, m=5)
        h = combined_channel(ch, closed_form_phases_two_user(ch).theta, 1)
        expect = np.sum(np.abs(ch.g[1]) * np.abs(ch.F[:, 0])) + abs(ch.v[1, 0])
        assert abs(h[0]) == pytest.approx(expect, rel=1e-10)


def test_phase_step_without_irs(rng):
    ch = toy_channels(rng, m=3).without_irs()
    step = phase_opt_siso(ch, [0.6, 0.4], 1.0)
    s = channel_strengths(ch, np.zeros(0))
    assert step.q == pytest.approx(maxmin_sinr_siso(s, [0.6, 0.4], 1.0))
    assert step.phases.theta.size == 0


def test_phase_step_near_grid(rng):
    ch = toy_channels(rng, m=2)
    perm = order_users(ch, 100, 0).permutation
    chd = ch.reorder(perm)
    snr = 1.0
    alloc, _ = optimal_power_allocation(np.sort(channel_strengths(chd, np.zeros(2))), snr, 1.0)
    step = phase_opt_siso(chd, alloc, snr, BisectionConfig(), 400, 0)
    cas = chd.cascades()
    roots = np.exp(2j * np.pi * np.arange(64) / 64)
    best = 0.0
    for a in roots:
        for b in roots:
            h = a * cas[:, 0, 0] + b * cas[:, 1, 0] + cas[:, 2, 0]
            s = np.abs(h) ** 2
            if s[1] >= s[0]:
                best = max(best, float(maxmin_sinr_siso(s, alloc.alpha, snr)))
    assert step.q >= 0.95 * best


def test_solve_without_irs_is_balanced_allocation(rng):
    ch = toy_channels(rng, m=3).without_irs()
    res = solve_siso(ch, order_users(ch, 1, 0), 1.0)
    s = np.sort(np.abs(ch.v[:, 0]) ** 2)
    assert res.q_star == pytest.approx(recursion_q(s, 1.0), rel=1e-9)
    assert res.iterations == 1


def test_solve_not_worse_than_zero_phases():
    ch = random_channels(3, m=4)
    ordering = order_users(ch, 400, 0)
    power = 1e-2
    res = solve_siso(ch, ordering, power, SolverConfig(), 0)
    s0 = channel_strengths(ch.reorder(ordering.permutation), np.zeros(4))
    base = recursion_q(np.minimum.accumulate(s0[::-1])[::-1], power / ch.noise_power)
    assert res.q_star >= base * (1 - 1e-9)
    assert np.all(np.diff(res.q_trace) >= -1e-9)
    assert np.allclose(res.rates, np.log2(1 + res.q_star), rtol=1e-6)


def test_solve_near_joint_grid():
    ch = random_channels(11, m=2)
    power = 1e-2
    ordering = order_users(ch, 400, 0)
    res = solve_siso(ch, ordering, power, SolverConfig(), 0)
    q_grid, _ = grid_balanced_q(ch.reorder(ordering.permutation), power / ch.noise_power, 64)
    assert res.q_star >= 0.95 * q_grid
