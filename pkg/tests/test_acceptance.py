"""Acceptance criteria 1-9. Each test prints one pass/fail line; the session
summary repeats them in order.

Seed ranges are fixed up front: criteria 1 and 5 use seeds 0-19, the RIS
benefit and trend sweeps use seeds 0-29, and every run is shared through the
session cache in _runs.
"""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from securemec import bcd_robust as br
from securemec.bcd_perfect import log_tangent_bound
from securemec.experiments import ScenarioConfig, with_axis
from securemec.metrics import EveCsi

import _oracles as oracles
from _runs import channels, report, runs, sweep_means

pytestmark = pytest.mark.slow

BASE = ScenarioConfig(record_timing=True)
ROBUST = ScenarioConfig(record_timing=True, mode="robust")
ROBUST_EXACT = ScenarioConfig(record_timing=True, mode="robust", eps_e=0.0, eps_g=0.0)
SEEDS_20 = range(20)
SEEDS_30 = range(30)


def _conv_stats(recs):
    mono = all(np.all(np.diff(r.trace) <= 1e-6) for r in recs)
    fast = sum(r.converged and r.iterations <= 15 for r in recs)
    worst = max(r.wall_ms for r in recs) / 1e3
    failed = sum(r.failed for r in recs)
    return mono, fast, worst, failed


def test_criterion_1_convergence():
    parts, ok = [], True
    for name, cfg in (("Alg1", BASE), ("Alg2", ROBUST)):
        recs = runs(cfg, SEEDS_20)
        mono, fast, worst, failed = _conv_stats(recs)
        ok &= mono and fast >= 0.9 * len(recs) and worst < 60.0 and failed == 0
        its = [r.iterations for r in recs]
        parts.append(f"{name}: monotone={mono} within15={fast}/{len(recs)} "
                     f"iters={its} max_run={worst:.1f}s failed={failed}")
    report(1, ok, "; ".join(parts))
    assert ok


def test_criterion_2_ris_benefit():
    means = {}
    failed = 0
    for bl in ("optimized", "random-phase", "no-ris"):
        recs = runs(BASE, SEEDS_30, bl)
        failed += sum(r.failed for r in recs)
        means[bl] = float(np.mean([r.E_total for r in recs if not r.failed]))
    order_ok = means["optimized"] < means["random-phase"] < means["no-ris"]
    m20 = with_axis(BASE, "M", 20)
    opt20 = runs(m20, SEEDS_30, "optimized")
    nor20 = runs(m20, SEEDS_30, "no-ris")
    failed += sum(r.failed for r in opt20 + nor20)
    saving = 1.0 - np.mean([r.E_total for r in opt20]) / np.mean([r.E_total for r in nor20])
    ok = order_ok and saving >= 0.30 and failed == 0
    report(2, ok, f"L=3e5 means optimized={means['optimized']:.4f} random={means['random-phase']:.4f} "
                  f"no-ris={means['no-ris']:.4f} J (ordered={order_ok}); M=20 saving "
                  f"{100 * saving:.1f}% (>= 30% required); failed={failed}")
    assert ok


SWEEPS = {
    # axis: (values, +1 non-decreasing / -1 non-increasing)
    "L": ([1e5, 2e5, 3e5, 4e5], +1),
    "K": ([1, 2, 3, 4], +1),
    "M": ([5, 10, 15, 20], -1),
    "T": ([0.1, 0.15, 0.2, 0.25], -1),
}


def _violations(means, sign):
    d = np.diff(means) * sign
    return int(np.sum(d < 0))


def test_criterion_3_monotone_trends():
    parts, ok = [], True
    for axis, (values, sign) in SWEEPS.items():
        means, failed = sweep_means(BASE, axis, values, SEEDS_30)
        v = _violations(means, sign)
        ok &= v <= 1 and failed == 0
        parts.append(f"{axis}: " + ",".join(f"{m:.4f}" for m in means) + f" violations={v}"
                     + (f" failed={failed}" if failed else ""))
    report(3, ok, "; ".join(parts))
    assert ok


def test_criterion_4_ris_placement():
    xs = [5, 20, 35, 50, 65]
    means, failed = sweep_means(BASE, "ris_x", xs, SEEDS_30)
    i = int(np.argmax(means))
    ok = 0 < i < len(xs) - 1 and failed == 0
    report(4, ok, "mean E by ris_x " + ", ".join(f"{x}:{m:.4f}" for x, m in zip(xs, means))
           + f"; max at ris_x={xs[i]}")
    assert ok


def test_criterion_5_robust_gap():
    perf = runs(BASE, SEEDS_20)
    rob = runs(ROBUST, SEEDS_20)
    exact = runs(ROBUST_EXACT, SEEDS_20)
    failed = sum(r.failed for r in perf + rob + exact)
    mp = np.mean([r.E_total for r in perf])
    mr = np.mean([r.E_total for r in rob])
    me = np.mean([r.E_total for r in exact])
    gap0 = abs(me - mp) / mp
    ok = mr >= mp and gap0 <= 0.03 and failed == 0
    report(5, ok, f"mean E perfect={mp:.4f} robust(eps=0.01)={mr:.4f} robust(eps=0)={me:.4f}; "
                  f"eps=0 gap {100 * gap0:.2f}% (<= 3% required); failed={failed}")
    assert ok


def test_criterion_6_certification():
    recs = runs(ROBUST, SEEDS_20) + runs(ROBUST_EXACT, SEEDS_20)
    worst_audit = min(r.min_margin for r in recs)
    audit_ok = all(not r.failed and r.min_margin >= -1e-6 for r in recs)
    # bisection-minimal beta vs the closed form on the seeds' nominal Eve channels
    worst_gap = math.inf
    for seed in range(10):
        cfg, ch, _ = channels(seed)
        csi = EveCsi.from_channels(ch, cfg.eps_e, cfg.eps_g)
        e = np.exp(1j * np.random.default_rng(seed).uniform(0, 2 * np.pi, ch.M))
        t = csi.nominal_eve_channel(e) / math.sqrt(cfg.sigma_e2)
        xe, xg = br.scaled_radii(cfg, csi)
        for k in range(ch.K):
            b = br.bisect_min_beta(t[k], xe[k], xg[k], float(ch.M))
            cf = (np.linalg.norm(t[k]) + xe[k] + xg[k] * math.sqrt(ch.M)) ** 2
            worst_gap = min(worst_gap, b - cf)
    ok = audit_ok and worst_gap >= -1e-6
    report(6, ok, f"{len(recs)} robust runs, worst audited margin {worst_audit:.3g} "
                  f"(>= -1e-6 required); bisection beta - closed form >= {worst_gap:.3g}")
    assert ok


def test_criterion_7_solver_correctness():
    errs = [abs(solve() - opt) / max(1.0, abs(opt)) for _, solve, opt in oracles.sdp_corpus()]
    fd = oracles.solver_callback_errors()
    fd_worst = max(max(g, h) for _, g, h in fd)
    ok = len(errs) == 20 and max(errs) <= 1e-6 and fd_worst <= 1e-5
    report(7, ok, f"SDP corpus 20 instances, worst relative error {max(errs):.2g}; "
                  f"{len(fd)} callback rows, worst finite-difference error {fd_worst:.2g}")
    assert ok


def test_criterion_8_small_oracles():
    seeds = range(10)
    alloc = [oracles.k1_allocation(s) for s in seeds]
    alloc_ok = all(E <= 1.01 * Eg and E >= Ex * (1 - 1e-6) for E, Eg, Ex in alloc)
    alloc_worst = max(E / Eg - 1.0 for E, Eg, _ in alloc)
    det = [oracles.k1_detection_overlap(s, robust=r) for s in seeds for r in (False, True)]
    det_ok = min(det) >= 1 - 1e-6
    phase = [oracles.m2_phase(s) for s in seeds]
    phase = [p for p in phase if p is not None and np.isfinite(p[1])]
    phase_gap = max((best - got) / abs(best) for got, best in phase)
    phase_ok = len(phase) >= 5 and phase_gap <= 0.05
    xs = np.logspace(-8, 8, 1001)
    tangent_err = max(abs(log_tangent_bound(x)[1] + math.log(x)) for x in xs)
    ok = alloc_ok and det_ok and phase_ok and tangent_err <= 1e-6
    report(8, ok, f"K=1 allocation vs 400x400 grid worst {100 * alloc_worst:+.3f}%; "
                  f"K=1 detector overlap min {min(det):.12f}; M=2 phases worst gap "
                  f"{100 * phase_gap:+.3f}% over {len(phase)} instances; log-tangent error {tangent_err:.2g}")
    assert ok


def _cli_csv(tmp_path, tag, threads, args):
    out = str(tmp_path / f"{tag}.csv")
    env = {**os.environ, "PYTHONPATH": os.path.join(os.path.dirname(__file__), "..", "src")}
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        env[var] = str(threads)
    proc = subprocess.run([sys.executable, "-m", "securemec", *args, "--out", out], env=env,
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    with open(out, "rb") as fh:
        return fh.read()


def test_criterion_9_determinism(tmp_path):
    cfg = tmp_path / "robust.json"
    cfg.write_text('{"mode": "robust", "K": 2, "M": 3}')
    cases = {"perfect": ["run", "--seed", "0"],
             "robust": ["run", "--config", str(cfg), "--seed", "1"]}
    ok, parts = True, []
    for name, args in cases.items():
        a = _cli_csv(tmp_path, name + "_a", 1, args)
        b = _cli_csv(tmp_path, name + "_b", 1, args)
        c = _cli_csv(tmp_path, name + "_c", 8, args)
        same = a == b == c
        ok &= same
        parts.append(f"{name}: {'identical' if same else 'DIFFERENT'} ({len(a)} bytes)")
    report(9, ok, "two processes and 1 vs 8 threads: " + "; ".join(parts))
    assert ok
