"""Block coordinate descent under bounded eavesdropper CSI errors.

Eve's channel is g_k = (h_e,k + dh) + (G_k + dG) e with ||dh|| <= xi_e,k and
||dG||_F <= xi_g,k. A sign-definiteness (S-procedure) LMI in (beta_k, mu_h,k,
mu_g,k) certifies beta_k >= ||g_k||^2 over the whole error set, and the
secrecy constraint uses the Eve SNR bound a_k >= p_k beta_k / sigma_e^2.

Blocks: (l, p, a, beta, multipliers) by SCA with tangent forms of the
subtracted log terms, per-user detector SDPs, and the RIS phases by a
penalty convex-concave (PCC) program that relaxes |e_m| = 1 to
1 - b_m <= |e_m|^2 <= 1 + c_m and charges lambda (b_m + c_m).

Inside the programs beta, t = h_e + G e and the radii are divided by the
Eve noise power (beta) or its square root (t, xi), so beta is in noise units.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from . import cone
from .bcd_perfect import (LN2, RATE_SLACK, BcdOptions, BcdTrace, BlockStatus, PerfectState,
                          _opt, allocation_block, allocation_builder, _energy_objective,
                          idle_users, initial_state, later_mask, lifted_channel_rows,
                          normalized_gains, own_power, phase_quality, phase_scored_users,
                          relative_change, solve_phases)
from .config import SystemConfig
from .metrics import (EveCsi, required_rate, robust_audit, secrecy_margins,
                      worst_case_eve_gain)
from .scenario import ChannelSet, RngStreams, effective_channels, sic_order
from .sdr import phase_blends, randomize_vector, select_candidate

ACCEPT_TOL = 1e-6
PCC_START = 0.1     # initial b_m, c_m (strictly inside their rows)


# ----------------------------------------------------------------------------
# sign-definiteness LMI


def _lmi_pieces(Ne: int, xi_e: float, xi_g: float, norm_e_sq: float, form: str):
    """Constant part (without t) and the coefficient matrices of beta, mu_h, mu_g.

    Layout of the order 3 N_e + 1 matrix: [1 | N_e (x) | N_e (h-mult) | N_e (G-mult)].
    T = [[beta, t^H], [t, I]] - mu_h Z1^H Z1 - mu_g Z2^H Z2 with Z2^H Z2 =
    diag(||e||^2, 0, ...) and Z1 = e_1^T ("structured") or I ("identity");
    the bordered blocks are -xi Y with Y = -[0 I].
    """
    if form not in ("structured", "identity"):
        raise ValueError(f"unknown LMI form {form!r}")
    n = 3 * Ne + 1
    x = slice(1, Ne + 1)
    hb = slice(Ne + 1, 2 * Ne + 1)
    gb = slice(2 * Ne + 1, n)
    I = np.eye(Ne)
    C = np.zeros((n, n), complex)
    C[x, x] = I
    C[hb, x] = xi_e * I
    C[x, hb] = xi_e * I
    C[gb, x] = xi_g * I
    C[x, gb] = xi_g * I
    Fb = np.zeros((n, n), complex)
    Fb[0, 0] = 1.0
    Fh = np.zeros((n, n), complex)
    Fh[hb, hb] = I
    if form == "structured":
        Fh[0, 0] = -1.0
    else:
        Fh[: Ne + 1, : Ne + 1] -= np.eye(Ne + 1)
    Fg = np.zeros((n, n), complex)
    Fg[gb, gb] = I
    Fg[0, 0] = -norm_e_sq
    return C, Fb, Fh, Fg


def _place_t(C: np.ndarray, t: np.ndarray) -> np.ndarray:
    F = C.copy()
    Ne = t.size
    F[1:Ne + 1, 0] += t
    F[0, 1:Ne + 1] += t.conj()
    return F


def build_robust_lmi(t, beta: float, mu_h: float, mu_g: float, eps_e: float, eps_g: float,
                     norm_e_sq: float, form: str = "structured") -> np.ndarray:
    """The Hermitian LMI matrix at given (beta, mu_h, mu_g); PSD certifies
    beta >= ||t + dh + dG e||^2 for every admissible (dh, dG)."""
    t = np.asarray(t, complex).reshape(-1)
    if t.size < 1:
        raise ValueError("t must be a non-empty vector")
    C, Fb, Fh, Fg = _lmi_pieces(t.size, eps_e, eps_g, norm_e_sq, form)
    return _place_t(C, t) + beta * Fb + mu_h * Fh + mu_g * Fg


def structured_certificate(t, eps_e: float, eps_g: float, norm_e_sq: float):
    """Minimal beta of the structured LMI and the multipliers attaining it.

    beta = (||t|| + xi_e + xi_g ||e||)^2 with mu_h = xi_e s, mu_g = xi_g s / ||e||,
    s = sqrt(beta).
    """
    ne = math.sqrt(max(norm_e_sq, 0.0))
    s = float(np.linalg.norm(t)) + eps_e + eps_g * ne
    mu_g = eps_g * s / ne if ne > 0 else 0.0
    return s * s, eps_e * s, mu_g


def lmi_min_beta(t, eps_e: float, eps_g: float, norm_e_sq: float, form: str = "structured",
                 tol: float = 1e-9):
    """min beta over the LMI by the barrier solver. Returns (beta, mu_h, mu_g)."""
    t = np.asarray(t, complex).reshape(-1)
    C, Fb, Fh, Fg = _lmi_pieces(t.size, eps_e, eps_g, norm_e_sq, form)
    b = cone.ProgramBuilder()
    v = b.var("v", 3)
    b0, mh0, mg0 = structured_certificate(t, eps_e, eps_g, norm_e_sq)
    b.le({v.start + 1: -1.0}, 0.0)
    b.le({v.start + 2: -1.0}, 0.0)
    b.le({v.start: 1.0}, 10.0 * b0 + 10.0)
    b.add_lmi(cone.LMI(_place_t(C, t), np.arange(3), np.stack([Fb, Fh, Fg])))
    x0 = np.array([2.0 * b0 + 1.0, mh0 + 1e-3, mg0 + 1e-3])
    res = cone.solve_cone_program(b.build(c=np.array([1.0, 0.0, 0.0]), x0=x0), tol=tol)
    if res.status not in (cone.Status.OPTIMAL, cone.Status.MAX_ITERATIONS):
        raise ValueError(f"LMI minimization failed: {res.status.value}")
    return float(res.x[0]), float(res.x[1]), float(res.x[2])


def lmi_feasible(t, beta: float, eps_e: float, eps_g: float, norm_e_sq: float,
                 form: str = "structured") -> bool:
    """Is there (mu_h, mu_g) making the LMI PSD at this beta (max-margin SDP)."""
    t = np.asarray(t, complex).reshape(-1)
    C, Fb, Fh, Fg = _lmi_pieces(t.size, eps_e, eps_g, norm_e_sq, form)
    b = cone.ProgramBuilder()
    b.var("mu", 2)
    b.le({0: -1.0}, 0.0)
    b.le({1: -1.0}, 0.0)
    b.add_lmi(cone.LMI(_place_t(C, t) + beta * Fb, np.arange(2), np.stack([Fh, Fg]), margin=True))
    _, mh, mg = structured_certificate(t, eps_e, eps_g, norm_e_sq)
    res = cone.max_margin_feasibility(b.build(x0=np.array([mh + 1e-6, mg + 1e-6])), tol=1e-10,
                                      s_max=1.0)
    return res.margin is not None and res.margin >= -1e-12


def bisect_min_beta(t, eps_e: float, eps_g: float, norm_e_sq: float, form: str = "structured",
                    rel_tol: float = 1e-9) -> float:
    """Smallest beta with a PSD certificate, by bisection on lmi_feasible."""
    t = np.asarray(t, complex).reshape(-1)
    lo = 0.0
    hi = max(structured_certificate(t, eps_e, eps_g, norm_e_sq)[0], 1e-300)
    while not lmi_feasible(t, hi, eps_e, eps_g, norm_e_sq, form):
        lo, hi = hi, 2.0 * hi
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if lmi_feasible(t, mid, eps_e, eps_g, norm_e_sq, form):
            hi = mid
        else:
            lo = mid
    return hi


# ----------------------------------------------------------------------------
# state


@dataclass
class RobustState(PerfectState):
    csi: Optional[EveCsi] = None
    a: Optional[np.ndarray] = None      # Eve SNR bound p_k beta_k / sigma_e^2
    beta: Optional[np.ndarray] = None   # certified bound on ||g_k||^2 (W / W scale)
    mu_h: Optional[np.ndarray] = None
    mu_g: Optional[np.ndarray] = None
    lam: float = 10.0


@dataclass(frozen=True)
class RobustAllocation:
    l: np.ndarray
    p: np.ndarray
    a: np.ndarray
    beta: np.ndarray
    mu_h: np.ndarray
    mu_g: np.ndarray
    result: Optional[cone.SolveResult]


def scaled_radii(cfg: SystemConfig, csi: EveCsi, inflate: float = 1.0):
    s = math.sqrt(cfg.sigma_e2)
    return csi.eps_e / s, inflate * csi.eps_g / s


def certificates(cfg: SystemConfig, csi: EveCsi, e, form: Optional[str] = None,
                 inflate: float = 1.0, norm_e_sq: Optional[float] = None):
    """Minimal certified beta (noise units) and multipliers for every user."""
    form = form or cfg.robust_lmi
    e = np.asarray(e, complex)
    t = csi.nominal_eve_channel(e) / math.sqrt(cfg.sigma_e2)
    xe, xg = scaled_radii(cfg, csi, inflate)
    nE = float(np.vdot(e, e).real) if norm_e_sq is None else norm_e_sq
    K = t.shape[0]
    out = np.zeros((3, K))
    for k in range(K):
        if form == "structured":
            out[:, k] = structured_certificate(t[k], xe[k], xg[k], nE)
        else:
            out[:, k] = lmi_min_beta(t[k], xe[k], xg[k], nE, form)
    return out[0], out[1], out[2]


def refresh_certificates(cfg: SystemConfig, state: RobustState):
    beta, mh, mg = certificates(cfg, state.csi, state.e)
    state.beta = beta * cfg.sigma_e2
    state.mu_h, state.mu_g = mh, mg
    state.a = state.p * beta


def robust_margins(cfg: SystemConfig, channels: ChannelSet, csi: EveCsi, l, p, W, e, order):
    """Secrecy margins with Eve's gain at its exact worst case over the error balls."""
    return secrecy_margins(cfg, channels, e, W, p, order, l, eve_gain=worst_case_eve_gain(csi, e))


def _robust_feasible(csi: EveCsi):
    def feasible(cfg, channels, l, p, W, e, order) -> bool:
        m = robust_margins(cfg, channels, csi, l, p, W, e, order)
        return bool(np.all(m >= -ACCEPT_TOL))
    return feasible


# ----------------------------------------------------------------------------
# allocation block


def robust_rate_constraint(cfg: SystemConfig, Lk, Pk, aS, aI, p0, a0, n: int, a_sl: slice,
                           slack: float = RATE_SLACK) -> cone.SmoothConstraint:
    """r_k(u) - psi_a,k(p) - psi_e,k(a) <= slack over x = [u, q, a, ...].

    psi_a keeps log2(1 + aS p) and replaces -log2(1 + aI p) by its tangent
    at p0 (multiplier 1 / (1 + aI p0)); psi_e is the tangent of -log2(1 + a)
    at a0 (multiplier 1 / (1 + a0)).
    """
    K = Lk.size
    rL = Lk / (cfg.B * cfg.T)
    I0 = 1.0 + aI @ p0
    gI = aI / (I0[:, None] * LN2)
    ge = 1.0 / ((1.0 + a0) * LN2)
    const = rL + np.log2(I0) - gI @ p0 + np.log2(1.0 + a0) - ge * a0 - slack
    kk = np.arange(K)

    def value(x):
        u, q, a = x[:K], x[K:2 * K], x[a_sl]
        p = Pk * q
        S = 1.0 + aS @ p
        with np.errstate(invalid="ignore", divide="ignore"):
            return const - rL * u - np.log2(np.where(S > 0, S, np.nan)) + gI @ p + ge * a

    def full(x):
        u, q, a = x[:K], x[K:2 * K], x[a_sl]
        p = Pk * q
        S = 1.0 + aS @ p
        v = const - rL * u - np.log2(S) + gI @ p + ge * a
        J = np.zeros((K, n))
        J[kk, kk] = -rL
        aSq = aS * Pk[None, :]
        J[:, K:2 * K] = -aSq / (S[:, None] * LN2) + gI * Pk[None, :]
        J[kk, a_sl.start + kk] = ge
        U = np.zeros((K, n))
        U[:, K:2 * K] = aSq
        return v, J, cone.LowRank(U, 1.0 / (S ** 2 * LN2))

    return cone.SmoothConstraint(value, full, margin=True, name="robust-rate")


def solve_allocation_robust(cfg: SystemConfig, channels: ChannelSet, state: RobustState,
                            tol: Optional[float] = None,
                            freeze: Optional[np.ndarray] = None) -> RobustAllocation:
    """One SCA step on (l, p, a, beta, mu_h, mu_g) with W and e fixed.

    The bilinear p_k beta_k <= a_k is linearized at (p0, beta0) with beta0 the
    minimal certified bound at the current phases, so the linearized row
    upper-bounds p beta and is exact at beta = beta0.
    """
    K = channels.K
    csi = state.csi
    freeze = np.zeros(K, bool) if freeze is None else np.asarray(freeze, bool)
    active = (cfg.L_vec > 0) & ~freeze
    beta0, mh0, mg0 = certificates(cfg, csi, state.e)
    l = np.where(freeze, cfg.L_vec, 0.0)
    p = np.zeros(K)
    a = np.zeros(K)
    beta, mu_h, mu_g = beta0.copy(), mh0.copy(), mg0.copy()
    if not np.any(active):
        return RobustAllocation(l, p, a, beta * cfg.sigma_e2, mu_h, mu_g, None)
    A, _ = normalized_gains(cfg, channels, state.e, state.W)
    later = later_mask(state.order)
    aI = np.where(later, A, 0.0)
    aS = aI + np.diag(np.diag(A))
    ix = np.ix_(active, active)
    b, Lk, Pk = allocation_builder(cfg, active)
    Ka = Lk.size
    p0 = state.p[active]
    b0 = beta0[active]
    a0 = p0 * b0
    a_sl = b.nonneg("a", Ka)
    b_sl = b.bounded("beta", np.zeros(Ka), 2.0 * b0 + 1.0)
    h_sl = b.var("mu_h", Ka)
    g_sl = b.var("mu_g", Ka)
    for j in range(Ka):
        # beta0 p + p0 beta - beta0 p0 <= a
        b.le({Ka + j: b0[j] * Pk[j], b_sl.start + j: p0[j], a_sl.start + j: -1.0},
             b0[j] * p0[j])
    t = csi.nominal_eve_channel(state.e) / math.sqrt(cfg.sigma_e2)
    xe, xg = scaled_radii(cfg, csi)
    nE = float(np.vdot(state.e, state.e).real)
    for j, k in enumerate(np.flatnonzero(active)):
        C, Fb, Fh, Fg = _lmi_pieces(channels.N_e, xe[k], xg[k], nE, cfg.robust_lmi)
        idx = np.array([b_sl.start + j, h_sl.start + j, g_sl.start + j])
        b.add_lmi(cone.LMI(_place_t(C, t[k]), idx, np.stack([Fb, Fh, Fg]), name=f"lmi{k}"))
    b.add_smooth(robust_rate_constraint(cfg, Lk, Pk, aS[ix], aI[ix], p0, a0, b.n, a_sl))
    obj, _ = _energy_objective(cfg, Lk, Pk, n_extra=4 * Ka)
    with np.errstate(divide="ignore", invalid="ignore"):
        q0 = np.where(Pk > 0, p0 / np.where(Pk > 0, Pk, 1.0), 0.5)
    bs = 1.01 * b0 + 1e-6
    x0 = np.concatenate([state.l[active] / Lk, q0, 1.01 * Pk * q0 * bs + 1e-9, bs,
                         mh0[active] + 1e-9, mg0[active] + 1e-9])
    res = cone.solve_cone_program(b.build(objective=obj, x0=x0), tol=tol or cfg.solver_tol)
    x = res.x
    l[active] = Lk * np.clip(x[:Ka], 0.0, 1.0)
    p[active] = Pk * np.clip(x[Ka:2 * Ka], 0.0, 1.0)
    a[active] = x[a_sl]
    beta[active] = x[b_sl]
    mu_h[active], mu_g[active] = x[h_sl], x[g_sl]
    return RobustAllocation(l, p, a, beta * cfg.sigma_e2, mu_h, mu_g, res)


def _allocation_solver(cfg, channels, state, tol=None, freeze=None):
    out = solve_allocation_robust(cfg, channels, state, tol, freeze)
    return out.l, out.p, out.result


# ----------------------------------------------------------------------------
# detection block


def detection_objective_terms(cfg: SystemConfig, channels: ChannelSet, state: PerfectState, k: int):
    """(C_s, C_i) with Tr(W C_s) the signal-plus-interference and Tr(W C_i) the
    interference power of user k in noise units (own power from own_power)."""
    h, _ = effective_channels(channels, state.e)
    pe = own_power(cfg, state.p)
    Ci = np.zeros((channels.N_a, channels.N_a), complex)
    for i in state.order.later(k):
        Ci += state.p[i] * np.outer(h[i], h[i].conj())
    Ci /= cfg.sigma_a2
    Cs = Ci + pe[k] * np.outer(h[k], h[k].conj()) / cfg.sigma_a2
    return Cs, Ci


def phi_a(X: np.ndarray, Cs: np.ndarray, Ci: np.ndarray, mu: float) -> float:
    """ln(1 + Tr(X Cs)) - mu (1 + Tr(X Ci)) + ln mu + 1 for Tr X = 1, in nats."""
    s = float(np.real(np.trace(X @ Cs)))
    i = float(np.real(np.trace(X @ Ci)))
    return math.log1p(s) - mu * (1.0 + i) + math.log(mu) + 1.0


def solve_detection_sdp_robust(Cs: np.ndarray, Ci: np.ndarray, mu: float, tol: float = 1e-7,
                               w0: Optional[np.ndarray] = None):
    """max phi_a over Tr W = 1, W PSD. Returns (W, SolveResult)."""
    n = Cs.shape[0]
    b = cone.ProgramBuilder()
    sl, basis = b.hermitian_psd("W", n)
    tr = basis.inner(np.eye(n))
    b.eq({sl.start + j: v for j, v in enumerate(tr) if v}, 1.0)
    cs, ci = basis.inner(Cs), basis.inner(Ci)

    def value(x):
        S = 1.0 + cs @ x
        return -math.log(S) + mu * (ci @ x) if S > 0 else math.inf

    def full(x):
        S = 1.0 + cs @ x
        return -math.log(S) + mu * (ci @ x), -cs / S + mu * ci, np.outer(cs, cs) / S ** 2

    W0 = np.eye(n) / n
    if w0 is not None:
        W0 = 0.5 * W0 + 0.5 * np.outer(w0, w0.conj()) / max(np.vdot(w0, w0).real, 1e-300)
    prog = b.build(objective=cone.Objective(value, full), x0=basis.from_matrix(W0))
    res = cone.solve_cone_program(prog, tol=tol)
    return basis.to_matrix(res.x[sl]), res


def _detector_rate(w, Cs, Ci) -> float:
    nw = float(np.real(np.vdot(w, w)))
    return float(np.log1p(np.real(np.vdot(w, Cs @ w)) / nw) - np.log1p(np.real(np.vdot(w, Ci @ w)) / nw))


def solve_detection_robust(cfg: SystemConfig, channels: ChannelSet, state: PerfectState,
                           rng: np.random.Generator, rand_count: Optional[int] = None):
    """Per-user detectors maximizing the log-tangent form of the legitimate rate.

    The multiplier is set from the current detector, where the form is tight,
    and re-set after every accepted step (up to ``sca_inner`` steps, stop at
    relative gain ``sca_inner_tol``). A new detector is kept only if the true
    rate of its user improves.
    """
    rand_count = rand_count or cfg.rand_count
    W = state.W.copy()
    statuses = []
    for k in range(channels.K):
        Cs, Ci = detection_objective_terms(cfg, channels, state, k)
        accepted, status, detail = False, "Trivial", ""
        for _ in range(cfg.sca_inner):
            w_old = W[:, k]
            mu = 1.0 / (1.0 + float(np.real(np.vdot(w_old, Ci @ w_old))))
            try:
                Wk, res = solve_detection_sdp_robust(Cs, Ci, mu, cfg.solver_tol, w_old)
            except (np.linalg.LinAlgError, ValueError) as exc:
                status, detail = "NumericalFailure", str(exc)
                break
            status = res.status.value
            if res.status not in (cone.Status.OPTIMAL, cone.Status.MAX_ITERATIONS):
                break
            quality = lambda w, mu=mu: phi_a(np.outer(w, w.conj()) / np.vdot(w, w).real,
                                             Cs, Ci, mu)
            w = randomize_vector(Wk, quality, rand_count, rng).vector
            w = w / np.linalg.norm(w)
            old, new = _detector_rate(w_old, Cs, Ci), _detector_rate(w, Cs, Ci)
            if new <= old + 1e-12 * max(1.0, abs(old)):
                detail = "" if accepted else "no improvement"
                break
            W[:, k] = w
            accepted = True
            if new - old <= cfg.sca_inner_tol * max(1.0, abs(old)):
                break
        statuses.append(BlockStatus(f"W{k}", status, accepted, detail))
    return W, statuses


# ----------------------------------------------------------------------------
# phase block (penalty convex-concave)


@dataclass
class PccResult:
    e: np.ndarray          # relaxed-modulus phases returned by the program
    b: np.ndarray
    c: np.ndarray
    kappa: np.ndarray
    a: np.ndarray
    beta: np.ndarray       # noise units
    d: np.ndarray
    rho: np.ndarray
    users: np.ndarray      # users whose rows are in the program
    result: cone.SolveResult

    @property
    def penalty(self) -> float:
        return float(np.sum(self.b) + np.sum(self.c))


def _affine_rows(rows: np.ndarray, scale: float):
    """x(y) = x0 + J y for y = [Re e, Im e]: returns (x0, J) with J = [c, j c]."""
    c0 = rows[..., -1] / scale
    c = rows[..., :-1] / scale
    return c0, np.concatenate([c, 1j * c], axis=-1)


def solve_phases_pcc(cfg: SystemConfig, channels: ChannelSet, state: RobustState, lam: float,
                     tol: Optional[float] = None) -> PccResult:
    """max sum kappa - lam sum(b + c) around the current phases e~.

    Rows per scored user k (noise units, own power pe_k from own_power):
      r_k + kappa_k <= [ln(rho + d + 1) - mu_r (rho + 1) + ln mu_r + 1
                        + 1 - mu_e (1 + a) + ln mu_e] / ln 2
      d_k / pe_k <= 2 Re{x~* x(e)} - |x~|^2,   x(e) = w_k^H h_k(e) / sigma_a
      sum_{j after k} p_j |w_k^H h_j(e)|^2 / sigma_a^2 <= rho_k
      pe_k beta_k <= a_k,   robust LMI in (beta, mu_h, mu_g, e) with ||e||^2 = M
    and per element 2 Re{e~_m* e_m} - 1 >= 1 - b_m, |e_m|^2 <= 1 + c_m.
    """
    K, M = channels.K, channels.M
    csi = state.csi
    idle = idle_users(cfg, state.p)
    users = np.flatnonzero(phase_scored_users(idle))
    Ku = users.size
    r = np.where(idle, 0.0, required_rate(cfg, state.l))[users]
    p = state.p
    pe = own_power(cfg, p)
    later = later_mask(state.order)
    et = state.e.copy()
    y0 = np.concatenate([et.real, et.imag])
    rows = lifted_channel_rows(channels, state.W)
    x0c, Jx = _affine_rows(rows, math.sqrt(cfg.sigma_a2))   # (K, K), (K, K, 2M)
    inflate = cfg.eps_g_inflation
    beta0, mh0, mg0 = certificates(cfg, csi, et, inflate=inflate, norm_e_sq=float(M))

    b = cone.ProgramBuilder()
    ey = b.var("e", 2 * M)
    d_sl = b.var("d", Ku)
    rho_sl = b.var("rho", Ku)
    a_sl = b.var("a", Ku)
    be_sl = b.var("beta", Ku)
    mh_sl = b.var("mu_h", Ku)
    mg_sl = b.var("mu_g", Ku)
    ka_sl = b.var("kappa", Ku)
    bb = b.nonneg("b", M)
    cc = b.nonneg("c", M)

    # signal rows and interference rows
    sig0 = np.zeros(Ku)
    rho0 = np.zeros(Ku)
    quad = []   # (j, [(weight, x0, J)])
    for j, k in enumerate(users):
        xt = x0c[k, k] + Jx[k, k] @ y0
        sig0[j] = pe[k] * abs(xt) ** 2
        v = xt.conjugate() * Jx[k, k]
        row = {d_sl.start + j: 1.0 / pe[k]}
        for m in range(2 * M):
            row[ey.start + m] = -2.0 * v[m].real
        b.le(row, 2.0 * (xt.conjugate() * x0c[k, k]).real - abs(xt) ** 2)
        terms = [(p[i], x0c[k, i], Jx[k, i]) for i in range(K) if later[k, i] and p[i] > 0]
        rho0[j] = sum(w * abs(z0 + Jz @ y0) ** 2 for w, z0, Jz in terms)
        quad.append(terms)
        b.le({be_sl.start + j: pe[k], a_sl.start + j: -1.0}, 0.0)
        if not idle[k]:
            b.le({ka_sl.start + j: -1.0}, RATE_SLACK)
    n = b.n

    def interf_full(x):
        y = x[ey]
        v = -x[rho_sl].copy()
        J = np.zeros((Ku, n))
        J[np.arange(Ku), rho_sl.start + np.arange(Ku)] = -1.0
        Hs = np.zeros((Ku, n, n))
        for j, terms in enumerate(quad):
            for w, z0, Jz in terms:
                z = z0 + Jz @ y
                v[j] += w * abs(z) ** 2
                J[j, ey] += 2.0 * w * (z.conjugate() * Jz).real
                Hs[j, ey, ey] += 2.0 * w * (Jz.conj()[:, None] * Jz[None, :]).real
        return v, J, Hs

    b.add_smooth(cone.SmoothConstraint(lambda x: interf_full(x)[0], interf_full, margin=True,
                                       name="interference"))

    mu_r = 1.0 / (1.0 + rho0)
    a_base = pe[users] * beta0[users]
    mu_e = 1.0 / (1.0 + a_base)
    const = (np.log(mu_r) + 1.0 - mu_r + 1.0 - mu_e + np.log(mu_e)) / LN2
    kk = np.arange(Ku)

    def rate_value(x):
        s = 1.0 + x[rho_sl] + x[d_sl]
        with np.errstate(invalid="ignore"):
            lb = np.log(np.where(s > 0, s, np.nan)) / LN2 - mu_r * x[rho_sl] / LN2 \
                - mu_e * x[a_sl] / LN2 + const
        return r + x[ka_sl] - lb

    def rate_full(x):
        s = 1.0 + x[rho_sl] + x[d_sl]
        v = rate_value(x)
        J = np.zeros((Ku, n))
        J[kk, ka_sl.start + kk] = 1.0
        J[kk, rho_sl.start + kk] = -1.0 / (s * LN2) + mu_r / LN2
        J[kk, d_sl.start + kk] = -1.0 / (s * LN2)
        J[kk, a_sl.start + kk] = mu_e / LN2
        Hs = np.zeros((Ku, n, n))
        w = 1.0 / (s ** 2 * LN2)
        for i, jx in ((rho_sl.start, rho_sl.start), (rho_sl.start, d_sl.start),
                      (d_sl.start, rho_sl.start), (d_sl.start, d_sl.start)):
            Hs[kk, i + kk, jx + kk] = w
        return v, J, Hs

    b.add_smooth(cone.SmoothConstraint(rate_value, rate_full, margin=True, name="rate"))

    def modulus_full(x):
        y = x[ey]
        v = y[:M] ** 2 + y[M:] ** 2 - 1.0 - x[cc]
        J = np.zeros((M, n))
        mm = np.arange(M)
        J[mm, ey.start + mm] = 2.0 * y[:M]
        J[mm, ey.start + M + mm] = 2.0 * y[M:]
        J[mm, cc.start + mm] = -1.0
        Hs = np.zeros((M, n, n))
        Hs[mm, ey.start + mm, ey.start + mm] = 2.0
        Hs[mm, ey.start + M + mm, ey.start + M + mm] = 2.0
        return v, J, Hs

    b.add_smooth(cone.SmoothConstraint(lambda x: modulus_full(x)[0], modulus_full, margin=True,
                                       name="modulus-upper"))
    for m in range(M):
        # 2 Re{e~* e} - |e~|^2 >= 1 - b
        b.le({bb.start + m: -1.0, ey.start + m: -2.0 * et[m].real,
              ey.start + M + m: -2.0 * et[m].imag}, -1.0 - abs(et[m]) ** 2)

    # robust LMIs
    s_e = math.sqrt(cfg.sigma_e2)
    xe, xg = scaled_radii(cfg, csi, inflate)
    for j, k in enumerate(users):
        C, Fb, Fh, Fg = _lmi_pieces(channels.N_e, xe[k], xg[k], float(M), cfg.robust_lmi)
        F0 = _place_t(C, csi.h_e_nominal[k] / s_e)
        Gk = csi.G_cascade_nominal[k] / s_e
        Fe = []
        for col in np.concatenate([Gk, 1j * Gk], axis=1).T:
            Fe.append(_place_t(np.zeros_like(C), col))
        idx = np.concatenate([[be_sl.start + j, mh_sl.start + j, mg_sl.start + j],
                              np.arange(ey.start, ey.stop)])
        b.add_lmi(cone.LMI(F0, idx, np.stack([Fb, Fh, Fg] + Fe), name=f"lmi{k}"))

    # start point: current phases with every auxiliary strictly inside its row
    x0 = np.zeros(n)
    x0[ey] = y0
    x0[bb] = PCC_START
    x0[cc] = PCC_START
    x0[d_sl] = 0.99 * sig0
    x0[rho_sl] = rho0 + 1e-6 * (1.0 + rho0)
    bs = 1.01 * beta0[users] + 1e-6
    x0[be_sl] = bs
    x0[mh_sl] = mh0[users] + 1e-9
    x0[mg_sl] = mg0[users] + 1e-9
    x0[a_sl] = 1.01 * pe[users] * bs + 1e-9
    x0[ka_sl] = 0.0
    x0[ka_sl] = -rate_value(x0) - 1e-3
    c = np.zeros(n)
    c[ka_sl] = -1.0
    c[bb] = lam
    c[cc] = lam
    res = cone.solve_cone_program(b.build(c=c, x0=x0), tol=tol or cfg.solver_tol)
    x = res.x
    y = x[ey]
    return PccResult(y[:M] + 1j * y[M:], x[bb], x[cc], x[ka_sl], x[a_sl], x[be_sl], x[d_sl],
                     x[rho_sl], users, res)


def robust_phase_quality(cfg: SystemConfig, channels: ChannelSet, state: RobustState):
    csi = state.csi
    return phase_quality(cfg, channels, state.W, state.p, state.l,
                         eve_gain_fn=lambda e: worst_case_eve_gain(csi, e))


def _pcc_step(cfg: SystemConfig, channels: ChannelSet, state: RobustState, lam: float):
    """One PCC program around state.e, projected and guarded.

    Candidates: the projected PCC point, blends from the incumbent toward it,
    and the incumbent. The best summed worst-case residual among the
    worst-case feasible ones wins. Returns (e, score, penalty, status, detail).
    """
    try:
        out = solve_phases_pcc(cfg, channels, state, lam)
    except (np.linalg.LinAlgError, ValueError) as exc:
        return None, None, math.inf, "NumericalFailure", str(exc)
    status = out.result.status.value
    if out.result.status not in (cone.Status.OPTIMAL, cone.Status.MAX_ITERATIONS):
        return None, None, math.inf, status, ""
    e_raw = out.e
    if np.any(np.abs(e_raw) == 0) or not np.all(np.isfinite(e_raw)):
        return None, None, math.inf, "NumericalFailure", "zero modulus"
    unit = np.append(e_raw / np.abs(e_raw), 1.0)
    inc = np.append(state.e, 1.0)
    quality, margin = robust_phase_quality(cfg, channels, state)
    pick = select_candidate([unit] + phase_blends(inc, unit) + [inc], quality, margin, 0.0)
    if pick.degraded:
        return None, None, out.penalty, status, "degraded"
    ebar = pick.vector
    e = ebar[:-1] / ebar[-1]
    return e / np.abs(e), pick.score, out.penalty, status, ""


def sdr_proposal(cfg: SystemConfig, channels: ChannelSet, state: RobustState,
                 rng: np.random.Generator, rand_count: Optional[int] = None):
    """Lifted phase SDP with Eve's gain at its worst case, randomized recovery.

    With unit-modulus phases the worst-case gain is (||t_k(e)|| + c_k)^2,
    c_k = eps_e,k + eps_g,k sqrt(M), and ||t_k||^2 is linear in E = [e; 1][e; 1]^H.
    The program is the perfect-CSI one with that offset; candidates are
    scored and guarded by the exact worst-case residuals.
    Returns (e, order, BlockStatus).
    """
    csi = state.csi
    xe, xg = scaled_radii(cfg, csi)
    D = np.concatenate([csi.G_cascade_nominal, csi.h_e_nominal[:, :, None]], axis=2)
    return solve_phases(cfg, channels, state, rng, rand_count, eve_lifted_rows=D,
                        eve_offset=xe + xg * math.sqrt(channels.M),
                        eve_gain_fn=lambda e: worst_case_eve_gain(csi, e))


def phase_block_robust(cfg: SystemConfig, channels: ChannelSet, state: RobustState,
                       lam: float, rng: Optional[np.random.Generator] = None,
                       inner: Optional[int] = None, rand_count: Optional[int] = None):
    """Worst-case SDR proposal followed by PCC refinement at penalty lam.

    The PCC program alone is a proximal local step: with b = c = 0 its
    feasible set is the incumbent itself, so each step moves the phases by
    roughly gradient / (2 lam). The SDR proposal supplies the global move and
    PCC refines around it, re-linearizing up to ``inner`` times until the
    summed worst-case residual stops improving (relative 1e-4).
    Returns (e, order, penalty, BlockStatus).
    """
    M = channels.M
    if M == 0:
        return state.e, state.order, 0.0, BlockStatus("theta", "Skipped", False, "no RIS")
    inner = inner or cfg.pcc_inner
    cur = replace(state)
    accepted, detail, penalty = False, "", math.inf
    status = "Trivial"
    if rng is not None:
        e, order, sst = sdr_proposal(cfg, channels, cur, rng, rand_count)
        if sst.accepted:
            cur.e, cur.order = e, order
            accepted = True
        status = sst.status
    quality, _ = robust_phase_quality(cfg, channels, cur)
    score = quality(np.append(cur.e, 1.0))
    for _ in range(inner):
        e, new_score, pen, st, det = _pcc_step(cfg, channels, cur, lam)
        status, detail = st, det
        if e is None:
            break
        penalty = pen
        moved = not np.allclose(e, cur.e, rtol=0, atol=1e-15)
        if moved:
            h, _ = effective_channels(channels, e)
            cur.e, cur.order = e, sic_order(h)
            accepted = True
        if not moved or new_score - score <= 1e-4 * max(1.0, abs(score)):
            break
        score = new_score
    return cur.e, cur.order, penalty, BlockStatus("theta", status, accepted, detail)


# ----------------------------------------------------------------------------
# driver


def robust_state(cfg: SystemConfig, channels: ChannelSet, csi: EveCsi,
                 base: PerfectState) -> RobustState:
    kw = {f.name: getattr(base, f.name) for f in fields(PerfectState)}
    st = RobustState(**kw, csi=csi, lam=cfg.lambda0)
    st.l, st.p, st.W, st.e = st.l.copy(), st.p.copy(), st.W.copy(), st.e.copy()
    refresh_certificates(cfg, st)
    return st


def run_robust(cfg: SystemConfig, channels: ChannelSet, csi: Optional[EveCsi] = None,
               init: Optional[PerfectState] = None, opts: Optional[BcdOptions] = None,
               streams: Optional[RngStreams] = None, audit_samples: int = 1000):
    """Alternate the robust blocks until the relative energy change is below eps.

    The penalty grows as lambda <- min(growth lambda, lambda_max) after each
    phase block. The returned trace carries the sampled audit minimum
    (``trace.audit``) over ``audit_samples`` perturbations per user.
    """
    streams = streams or RngStreams(0)
    csi = csi or EveCsi.from_channels(channels, cfg.eps_e, cfg.eps_g)
    base = init if init is not None else initial_state(cfg, channels, streams)
    state = robust_state(cfg, channels, csi, base)
    max_iter = _opt(opts, cfg, "max_iter")
    eps = _opt(opts, cfg, "eps")
    rand_count = _opt(opts, cfg, "rand_count")
    do_phases = opts.optimize_phases if opts is not None else True
    rng = streams.get("randomization")
    feasible = _robust_feasible(csi)
    trace = BcdTrace()
    E_prev = state.energy(cfg)
    trace.E.append(E_prev)
    failed_sweeps = 0
    lam = cfg.lambda0
    if not np.any(cfg.L_vec > 0):
        state.l = np.zeros(channels.K)
        state.p = np.zeros(channels.K)
        trace.E.append(0.0)
        trace.iterations, trace.converged = 1, True
    else:
        for it in range(1, max_iter + 1):
            t0 = time.perf_counter()
            sts = [allocation_block(cfg, channels, state, _allocation_solver, feasible)]
            refresh_certificates(cfg, state)
            W, wst = solve_detection_robust(cfg, channels, state, rng, rand_count)
            state.W = W
            sts.extend(wst)
            if do_phases:
                e, order, pen, pst = phase_block_robust(cfg, channels, state, lam, rng,
                                                         rand_count=rand_count)
                state.e, state.order = e, order
                refresh_certificates(cfg, state)
                sts.append(pst)
                trace.penalty.append(pen)
                lam = min(cfg.lambda_growth * lam, cfg.lambda_max)
                state.lam = lam
            E = state.energy(cfg)
            trace.E.append(E)
            trace.statuses.append(sts)
            m = robust_margins(cfg, channels, csi, state.l, state.p, state.W, state.e, state.order)
            trace.margins.append(float(np.min(m)))
            trace.wall_ms.append(1e3 * (time.perf_counter() - t0))
            trace.iterations = it
            hard_fail = [s for s in sts
                         if s.status not in ("Optimal", "MaxIterations", "Trivial", "Skipped")]
            failed_sweeps = failed_sweeps + 1 if len(hard_fail) == len(sts) else 0
            if failed_sweeps >= 2:
                break
            if relative_change(E, E_prev) <= eps:
                trace.converged = True
                break
            E_prev = E
    sol = state.solution()
    if audit_samples:
        trace.audit = float(np.min(robust_audit(cfg, channels, sol, csi, audit_samples,
                                                streams.get("audit"))))
    return sol, trace
