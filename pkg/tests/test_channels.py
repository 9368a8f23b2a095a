import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irsnoma.channels import (ChannelParams, ChannelSet, Geometry, channel_strengths,
                              combined_channel, dbm_to_watt, pathloss, sample_channels,
                              steering_ula, steering_ura)
from irsnoma.errors import DomainError
from irsnoma.relax import lift


def test_pathloss_values():
    assert pathloss(1, 4, 1e-3) == pytest.approx(1e-3)
    assert pathloss(10, 2, 1e-3) == pytest.approx(1e-5)
    d = math.hypot(25 * math.sqrt(2), 25 * math.sqrt(2))
    assert d == pytest.approx(50.0)
    assert pathloss(d, 2, 1e-3) == pytest.approx(4e-7)


def test_pathloss_rejects_nonpositive_distance():
    with pytest.raises(DomainError):
        pathloss(0.0, 2)


def test_noise_conversion():
    assert dbm_to_watt(-114) == pytest.approx(10 ** (-14.4))


def test_steering_ula():
    assert np.allclose(steering_ula(1.234, 1, 0.5), [1])
    assert np.allclose(steering_ula(0.0, 4, 0.5), np.ones(4))
    assert np.allclose(steering_ula(math.pi / 2, 2, 0.5), [1, -1])


def test_steering_ura():
    assert np.allclose(steering_ura(0.3, 0.2, (1, 1), 0.125), [1])
    assert np.allclose(steering_ura(0.0, 0.0, (3, 2), 0.125), np.ones(6))
    expect = np.kron([1, np.exp(1j * math.pi / 4)], [1, 1])
    assert np.allclose(steering_ura(math.pi / 2, 0.0, (2, 2), 0.125), expect)


@settings(max_examples=30, deadline=None)
@given(az=st.floats(-math.pi, math.pi), el=st.floats(-1.5, 1.5),
       rows=st.integers(1, 6), cols=st.integers(1, 6))
def test_steering_unit_modulus(az, el, rows, cols):
    a = steering_ura(az, el, (rows, cols), 0.125)
    assert a.shape == (rows * cols,)
    assert np.allclose(np.abs(a), 1.0, atol=1e-15)


def test_sample_channels_deterministic():
    geo = Geometry().with_elements(8)
    a = sample_channels(geo, ChannelParams(), 2, 3, 42)
    b = sample_channels(geo, ChannelParams(), 2, 3, 42)
    for x, y in ((a.F, b.F), (a.g, b.g), (a.v, b.v)):
        assert np.array_equal(x, y)
    assert a.F.shape == (8, 3) and a.g.shape == (2, 8) and a.v.shape == (2, 3)


def test_direct_link_power_matches_pathloss():
    geo = Geometry(user_positions=((10.0, 0.0, 10.0),)).with_elements(1)
    rho = pathloss(10.0, 4.0, 1e-3)
    v = np.concatenate([sample_channels(geo, ChannelParams(), 1, 1000, s).v.ravel()
                        for s in range(100)])
    assert np.mean(np.abs(v) ** 2) == pytest.approx(rho, rel=0.03)


def test_pure_nlos_variance():
    geo = Geometry().with_elements(100)
    params = ChannelParams(rician_K1=0.0)
    kappa = pathloss(50.0, 2.0, 1e-3)
    F = np.concatenate([sample_channels(geo, params, 2, 10, s).F.ravel() for s in range(100)])
    assert np.mean(np.abs(F) ** 2) == pytest.approx(kappa, rel=0.05)


def test_pure_los_is_deterministic():
    geo = Geometry().with_elements(16)
    params = ChannelParams(rician_K1=math.inf)
    a = sample_channels(geo, params, 2, 2, 1).F
    b = sample_channels(geo, params, 2, 2, 2).F
    assert np.allclose(a, b)
    assert np.linalg.norm(a) == pytest.approx(math.sqrt(pathloss(50.0, 2.0) * 32))


def test_combined_channel_special_cases(rng):
    ch = sample_channels(Geometry(), ChannelParams(), 2, 2, 7)
    h0 = combined_channel(ch, np.zeros(ch.M), 1)
    assert np.allclose(h0, ch.g[1].conj() @ ch.F + ch.v[1].conj())
    bare = ch.without_irs()
    assert np.allclose(combined_channel(bare, np.zeros(0), 0), ch.v[0].conj())


def test_single_element_cophasing(rng):
    g, f, v = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    ch = ChannelSet(np.array([[f]]), np.array([[g]]), np.array([[v]]), 1.0)
    theta = np.angle(np.conj(v)) - np.angle(np.conj(g) * f)
    h = combined_channel(ch, np.array([theta]), 0)
    assert abs(h[0]) == pytest.approx(abs(g) * abs(f) + abs(v), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), m=st.integers(1, 6), n=st.integers(1, 3))
def test_lifted_form_matches_direct(seed, m, n):
    rng = np.random.default_rng(seed)
    ch = ChannelSet(*(rng.standard_normal(s) + 1j * rng.standard_normal(s)
                      for s in ((m, n), (2, m), (2, n))), 1.0)
    theta = rng.uniform(0, 2 * math.pi, m)
    w = np.append(np.exp(1j * theta), 1.0)
    for k in range(2):
        assert np.allclose(w @ ch.cascade(k), combined_channel(ch, theta, k), atol=1e-12)
        G = ch.cascade(k).conj() @ ch.cascade(k).T
        assert np.real(np.trace(G @ lift(theta))) == pytest.approx(
            channel_strengths(ch, theta)[k], rel=1e-12)
