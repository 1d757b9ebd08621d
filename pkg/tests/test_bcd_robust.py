import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from securemec import EveCsi, evaluate_solution
from securemec import bcd_perfect as bp
from securemec import bcd_robust as br
from securemec.metrics import sample_ball

from _oracles import k1_detection_overlap
from _runs import channels

radius = st.floats(0.0, 0.5)


def vec(seed, n, scale=1.0):
    rng = np.random.default_rng(seed)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


@given(seed=st.integers(0, 10 ** 6), Ne=st.integers(1, 3), xe=radius, xg=radius,
       nE=st.floats(0.5, 8.0))
def test_structured_certificate_is_psd_and_tight(seed, Ne, xe, xg, nE):
    t = vec(seed, Ne)
    beta, mh, mg = br.structured_certificate(t, xe, xg, nE)
    assert beta == pytest.approx((np.linalg.norm(t) + xe + xg * np.sqrt(nE)) ** 2)
    F = br.build_robust_lmi(t, beta, mh, mg, xe, xg, nE)
    assert np.allclose(F, F.conj().T)
    assert np.linalg.eigvalsh(F)[0] >= -1e-9 * max(1.0, beta)


@given(seed=st.integers(0, 10 ** 6), Ne=st.integers(1, 3), xe=radius, xg=radius,
       nE=st.floats(0.5, 8.0))
@settings(max_examples=20)
def test_certified_beta_bounds_sampled_gains(seed, Ne, xe, xg, nE):
    # any PSD certificate must dominate every admissible perturbation
    t = vec(seed, Ne)
    beta, mh, mg = br.structured_certificate(t, xe, xg, nE)
    rng = np.random.default_rng(seed)
    M = 4
    e = vec(seed + 1, M)
    e *= np.sqrt(nE) / np.linalg.norm(e)
    # t already contains G e; errors act as dh + dG e
    dh = sample_ball(rng, (Ne,), xe, 1000)
    dG = sample_ball(rng, (Ne, M), xg, 1000)
    g = t[None] + dh + np.einsum("snm,m->sn", dG, e)
    assert np.max(np.sum(np.abs(g) ** 2, axis=1)) <= beta * (1 + 1e-12)


@given(seed=st.integers(0, 10 ** 6), Ne=st.integers(1, 2), xe=st.floats(0.0, 0.3),
       xg=st.floats(0.0, 0.3), nE=st.floats(1.0, 6.0))
@settings(max_examples=8)
def test_bisection_never_below_closed_form(seed, Ne, xe, xg, nE):
    t = vec(seed, Ne)
    cf = (np.linalg.norm(t) + xe + xg * np.sqrt(nE)) ** 2
    b = br.bisect_min_beta(t, xe, xg, nE, rel_tol=1e-8)
    assert b >= cf - 1e-6
    assert b <= cf * (1 + 1e-6) + 1e-9


@pytest.mark.parametrize("xi", [(0.1, 0.05), (0.3, 0.2)])
def test_identity_form_is_conservative(xi):
    t = vec(3, 3)
    s = br.lmi_min_beta(t, xi[0], xi[1], 5.0, form="structured")[0]
    i = br.lmi_min_beta(t, xi[0], xi[1], 5.0, form="identity")[0]
    assert i >= s - 1e-6


def test_no_error_reduces_to_schur_complement():
    t = vec(7, 3)
    assert br.lmi_min_beta(t, 0.0, 0.0, 5.0)[0] == pytest.approx(np.linalg.norm(t) ** 2, rel=1e-7)
    assert not br.lmi_feasible(t, 0.99 * np.linalg.norm(t) ** 2, 0.0, 0.0, 5.0)
    assert br.lmi_feasible(t, 1.01 * np.linalg.norm(t) ** 2, 0.0, 0.0, 5.0)


def test_unknown_lmi_form_rejected():
    with pytest.raises(ValueError):
        br.build_robust_lmi(vec(0, 2), 1.0, 0.0, 0.0, 0.1, 0.1, 1.0, form="other")


def test_zero_error_allocation_equals_perfect_allocation():
    cfg, ch, streams = channels(6)
    base = bp.initial_state(cfg, ch, streams)
    perfect = bp.PerfectState(base.l.copy(), base.p.copy(), base.W.copy(), base.e.copy(), base.order)
    bp.allocation_block(cfg, ch, perfect)
    rs = br.robust_state(cfg, ch, EveCsi.from_channels(ch, 0.0, 0.0), base)
    bp.allocation_block(cfg, ch, rs, br._allocation_solver, br._robust_feasible(rs.csi))
    assert rs.energy(cfg) == pytest.approx(perfect.energy(cfg), rel=1e-4)


def test_robust_allocation_costs_at_least_as_much():
    cfg, ch, streams = channels(6)
    base = bp.initial_state(cfg, ch, streams)
    exact = br.robust_state(cfg, ch, EveCsi.from_channels(ch, 0.0, 0.0), base)
    noisy = br.robust_state(cfg, ch, EveCsi.from_channels(ch, 0.05, 0.05), base)
    for st in (exact, noisy):
        bp.allocation_block(cfg, ch, st, br._allocation_solver, br._robust_feasible(st.csi))
    assert noisy.energy(cfg) >= exact.energy(cfg) * (1 - 1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_single_user_robust_detector_is_mrc(seed):
    assert k1_detection_overlap(seed, robust=True) >= 1 - 1e-6


def test_robust_run_small_instance():
    cfg, ch, streams = channels(1, K=2, M=3)
    csi = EveCsi.from_channels(ch, cfg.eps_e, cfg.eps_g)
    sol, tr = br.run_robust(cfg, ch, csi, streams=streams, audit_samples=500)
    assert tr.non_increasing()
    assert tr.audit >= -1e-6
    assert evaluate_solution(cfg, ch, sol, mode="robust", csi=csi).feasible
    assert np.allclose(np.abs(sol.e), 1.0)


def test_robust_phase_block_without_ris():
    cfg, ch, streams = channels(0, M=0)
    rs = br.robust_state(cfg, ch, EveCsi.from_channels(ch, 0.01, 0.01),
                         bp.initial_state(cfg, ch, streams))
    e, order, pen, st = br.phase_block_robust(cfg, ch, rs, cfg.lambda0)
    assert st.status == "Skipped" and pen == 0.0
