import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from securemec import Geometry, RngStreams, SystemConfig, sample_channels, sample_geometry
from securemec.scenario import (ChannelSet, PhaseVector, SicOrder, complex_normal,
                                effective_channels, path_gain, sic_order)

from _runs import channels


def test_path_gain_reference_and_clamp():
    assert path_gain(1.0, 3.0, 1e-3) == pytest.approx(1e-3)
    assert path_gain(10.0, 2.0, 1e-3) == pytest.approx(1e-5)
    assert path_gain(0.5, 2.0, 1e-3) == pytest.approx(1e-3)   # clamped at 1 m
    with pytest.raises(ValueError):
        path_gain(0.0, 2.0, 1e-3)


def test_complex_normal_unit_variance():
    z = complex_normal(np.random.default_rng(0), 200000)
    assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, rel=0.01)
    assert np.var(z.real) == pytest.approx(0.5, rel=0.02)


def test_streams_are_keyed_not_sequential():
    a = RngStreams(5).get("ua", 2).standard_normal(4)
    s = RngStreams(5)
    s.get("ua", 0).standard_normal(100)
    assert np.array_equal(s.get("ua", 2).standard_normal(4), a)
    assert not np.array_equal(RngStreams(6).get("ua", 2).standard_normal(4), a)


@given(seed=st.integers(0, 10 ** 6), K=st.integers(1, 5))
def test_fewer_users_is_a_prefix(seed, K):
    _, big, _ = channels(seed, K=5)
    _, small, _ = channels(seed, K=K)
    assert np.array_equal(small.h_a, big.h_a[:K])
    assert np.array_equal(small.h_e, big.h_e[:K])


@given(seed=st.integers(0, 10 ** 6), M=st.integers(0, 8))
def test_more_elements_extend_the_realization(seed, M):
    _, big, _ = channels(seed, M=8)
    _, small, _ = channels(seed, M=M)
    assert np.array_equal(small.H, big.H[:, :M])
    assert np.array_equal(small.h_r, big.h_r[:, :M])
    assert np.array_equal(small.h_a, big.h_a)


def test_user_positions_inside_disk():
    cfg, geo = SystemConfig(K=50), Geometry()
    pos = sample_geometry(cfg, geo, RngStreams(1))
    d = np.linalg.norm(pos - np.array(geo.user_center), axis=1)
    assert np.all(d <= geo.user_radius + 1e-12)


def test_effective_channel_composition():
    _, ch, _ = channels(3)
    e = PhaseVector(np.linspace(0, 3, ch.M)).e
    h, g = effective_channels(ch, e)
    k = 1
    assert np.allclose(h[k], ch.h_a[k] + ch.H @ np.diag(e) @ ch.h_r[k])
    assert np.allclose(g[k], ch.h_e[k] + ch.G @ np.diag(e) @ ch.h_r[k])
    assert np.allclose(g[k], ch.h_e[k] + ch.G_cascade[k] @ e)
    h0, g0 = effective_channels(ch, np.zeros(ch.M))
    assert np.array_equal(h0, ch.h_a) and np.array_equal(g0, ch.h_e)
    with pytest.raises(ValueError):
        effective_channels(ch, np.ones(ch.M + 1))


def test_without_ris_keeps_direct_links():
    _, ch, _ = channels(2)
    nr = ch.without_ris()
    h, _ = effective_channels(nr, PhaseVector.random(ch.M, np.random.default_rng(0)).e)
    assert np.array_equal(h, ch.h_a)
    assert nr.digest() != ch.digest()


def test_channel_set_rejects_bad_shapes_and_is_frozen():
    _, ch, _ = channels(0)
    with pytest.raises(ValueError):
        ChannelSet(ch.h_a, ch.h_r[:, :-1], ch.h_e, ch.H, ch.G)
    with pytest.raises(ValueError):
        ch.h_a[0, 0] = 1.0


@given(theta=st.lists(st.floats(-50, 50), min_size=1, max_size=6))
def test_phase_vector_unit_modulus_and_wrap(theta):
    pv = PhaseVector(np.array(theta))
    assert np.all((pv.theta >= 0) & (pv.theta < 2 * np.pi))
    assert np.allclose(np.abs(pv.e), 1.0)
    assert np.allclose(PhaseVector.from_complex(pv.e).e, pv.e)


@given(gains=st.lists(st.floats(0.0, 10.0), min_size=1, max_size=6))
def test_sic_order_descending_gain(gains):
    h = np.array(gains)[:, None] * np.ones((1, 2))
    order = sic_order(h)
    g = np.array(gains)[order.perm]
    assert np.all(np.diff(g) <= 0)
    pos = order.position
    for k in range(len(gains)):
        assert set(order.later(k)) == {j for j in range(len(gains)) if pos[j] > pos[k]}


def test_sic_order_rejects_non_permutation():
    with pytest.raises(ValueError):
        SicOrder(np.array([0, 0, 1]))


def test_sampling_same_seed_same_channels():
    cfg, geo = SystemConfig(), Geometry()
    a = sample_channels(cfg, geo, sample_geometry(cfg, geo, RngStreams(9)), RngStreams(9))
    b = sample_channels(cfg, geo, sample_geometry(cfg, geo, RngStreams(9)), RngStreams(9))
    assert a.digest() == b.digest()
