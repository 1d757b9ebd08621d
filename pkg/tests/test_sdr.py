import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from securemec.sdr import (eigen_gap, extract_phases, phase_blends, randomize_unit_modulus,
                           randomize_vector, select_candidate, unit_modulus_candidates)

seeds = st.integers(0, 2 ** 32 - 1)


def rank_one(v):
    return np.outer(v, v.conj())


@given(n=st.integers(2, 6), seed=seeds)
def test_rank_one_returns_principal_direction(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    out = randomize_vector(rank_one(v), lambda w: 0.0, 10, rng)
    overlap = abs(np.vdot(out.vector, v)) / (np.linalg.norm(out.vector) * np.linalg.norm(v))
    assert overlap == pytest.approx(1.0, abs=1e-10)
    assert out.gap <= 1e-6


@given(n=st.integers(2, 6), seed=seeds)
def test_randomized_vectors_are_unit_norm_and_best(n, seed):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    X = F @ F.conj().T
    target = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    q = lambda w: abs(np.vdot(w, target)) ** 2 / np.vdot(w, w).real
    out = randomize_vector(X, q, 50, rng)
    assert np.linalg.norm(out.vector) == pytest.approx(1.0)
    assert out.score == pytest.approx(q(out.vector))


@given(n=st.integers(1, 6), seed=seeds)
def test_unit_modulus_candidates(n, seed):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    cands, gap = unit_modulus_candidates(F @ F.conj().T, 20, rng)
    assert all(np.allclose(np.abs(c), 1.0) for c in cands)
    assert 0.0 <= gap <= 1.0


def test_margin_guard_discards_violators():
    cands = [np.array([1.0]), np.array([2.0]), np.array([3.0])]
    out = select_candidate(cands, lambda c: float(c[0]), lambda c: 2.5 - float(c[0]), 0.0)
    assert out.vector[0] == 2.0 and not out.degraded
    out = select_candidate(cands, lambda c: float(c[0]), lambda c: -1.0 - float(c[0]), 0.0)
    assert out.degraded


def test_randomize_unit_modulus_keeps_extra_candidate():
    rng = np.random.default_rng(0)
    E = np.eye(3)
    best = np.exp(1j * np.array([0.1, 0.2, 0.3]))
    q = lambda c: -float(np.linalg.norm(c - best))
    out = randomize_unit_modulus(E, q, 5, rng, extra=[best])
    assert np.allclose(out.vector, best)


@given(seed=seeds, levels=st.integers(1, 10))
def test_blends_are_unit_modulus_and_move_toward_target(seed, levels):
    rng = np.random.default_rng(seed)
    a = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
    b = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
    bl = phase_blends(a, b, levels)
    assert len(bl) == levels
    assert all(np.allclose(np.abs(v), 1.0) for v in bl)
    d = [np.linalg.norm(np.angle(v / a)) for v in bl]
    assert all(x >= y - 1e-12 for x, y in zip(d, d[1:]))


def test_extract_phases_normalizes_reference():
    ebar = 2.0 * np.exp(1j * np.array([0.5, 1.0, 0.2]))
    e = extract_phases(ebar)
    assert e.shape == (2,)
    assert np.allclose(e, [0.3, 0.8])


@given(tiny=st.floats(-1e-300, 0.0))
def test_extract_phases_stays_below_two_pi(tiny):
    th = extract_phases(np.array([np.exp(1j * tiny), 1.0]))
    assert 0.0 <= th[0] < 2 * np.pi


def test_eigen_gap_values():
    assert eigen_gap(np.diag([2.0, 1.0])) == pytest.approx(0.5)
    assert eigen_gap(np.diag([1.0, 0.0])) == 0.0


def test_count_must_be_positive():
    with pytest.raises(ValueError):
        randomize_vector(np.eye(2), lambda w: 0.0, 0, np.random.default_rng(0))
