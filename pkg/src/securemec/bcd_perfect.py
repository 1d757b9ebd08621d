"""Block coordinate descent under perfect eavesdropper CSI.

Blocks: (l, p) by successive convex approximation, the detectors W by
per-user max-margin SDPs, and the RIS phases by a lifted SDP in which
-ln x is replaced by its tangent form -mu x + ln mu + 1 (tight at mu = 1/x). Every accepted block keeps the
current point feasible and never increases the energy.

Inside the subproblems all gains are expressed in noise units
(|w^H h|^2 / sigma_a^2 and ||g||^2 / sigma_e^2), powers in Watts, and local
bits as fractions of the task size.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import cone
from .config import SystemConfig
from .metrics import (Solution, energies, model_rates, required_rate, secrecy_margins)
from .scenario import (ChannelSet, PhaseVector, RngStreams, SicOrder, effective_channels,
                       sic_order)
from .sdr import (Randomized, phase_blends, randomize_vector, select_candidate,
                  unit_modulus_candidates)

LN2 = math.log(2.0)
ACCEPT_TOL = 1e-6      # feasibility slack (bits/s/Hz) for accepting a block
DESCENT_SLACK = 1e-12  # relative energy slack when comparing blocks
RATE_SLACK = 1e-7      # bits/s/Hz of give in the convex rate constraints
IDLE_FRACTION = 1e-6   # users below this fraction of P_max count as idle
EXTRAPOLATION_CAP = 0.95  # largest contraction ratio trusted when extrapolating SCA


class DegenerateDetection(ValueError):
    pass


# ----------------------------------------------------------------------------
# coefficients and normalized gains


@dataclass(frozen=True)
class Coefficients:
    sigma: np.ndarray   # sigma_a^2 / |w_k^H h_k|^2
    eta: np.ndarray     # sigma_e^2 / ||g_k||^2
    delta: np.ndarray   # |w_k^H h_i|^2 / |w_k^H h_k|^2
    order: SicOrder

    @property
    def Gamma(self) -> np.ndarray:
        """Relative residual interference seen by each user at unit powers."""
        K = self.sigma.size
        pos = self.order.position
        later = pos[None, :] > pos[:, None]
        return np.sum(np.where(later, self.delta, 0.0), axis=1)


def coefficients(cfg: SystemConfig, channels: ChannelSet, e, W: np.ndarray,
                 order: SicOrder) -> Coefficients:
    """sigma_k, eta_k and delta_{k,i} for unit-norm detectors W (columns)."""
    h, g = effective_channels(channels, e)
    A = np.abs(W.conj().T @ h.T) ** 2
    d = np.diag(A)
    if np.any(d <= 0):
        raise DegenerateDetection("a detector is orthogonal to its own user's channel")
    ge = np.sum(np.abs(g) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        eta = np.where(ge > 0, cfg.sigma_e2 / np.where(ge > 0, ge, 1.0), np.inf)
    nw = np.sum(np.abs(W) ** 2, axis=0)
    return Coefficients(cfg.sigma_a2 * nw / d, eta, A / d[:, None], order)


def normalized_gains(cfg: SystemConfig, channels: ChannelSet, e, W: np.ndarray):
    """A[k, i] = |w_k^H h_i|^2 / (sigma_a^2 ||w_k||^2) and zeta_k = ||g_k||^2 / sigma_e^2."""
    h, g = effective_channels(channels, e)
    A = np.abs(W.conj().T @ h.T) ** 2 / (cfg.sigma_a2 * np.sum(np.abs(W) ** 2, axis=0))[:, None]
    zeta = np.sum(np.abs(g) ** 2, axis=1) / cfg.sigma_e2
    return A, zeta


def later_mask(order: SicOrder) -> np.ndarray:
    """later[k, i] is True when user i is decoded after user k."""
    pos = order.position
    return pos[None, :] > pos[:, None]


def mrc_detectors(channels: ChannelSet, e) -> np.ndarray:
    h, _ = effective_channels(channels, e)
    nrm = np.linalg.norm(h, axis=1)
    W = (h / np.where(nrm > 0, nrm, 1.0)[:, None]).T
    W[:, nrm == 0] = 1.0 / np.sqrt(channels.N_a)
    return W


# ----------------------------------------------------------------------------
# state and trace


@dataclass
class PerfectState:
    l: np.ndarray
    p: np.ndarray
    W: np.ndarray
    e: np.ndarray
    order: SicOrder

    def solution(self) -> Solution:
        return Solution(self.l.copy(), self.p.copy(), self.W.copy(), self.e.copy(), self.order)

    def energy(self, cfg: SystemConfig) -> float:
        return energies(cfg, (self.l, self.p)).E_total

    def margins(self, cfg: SystemConfig, channels: ChannelSet) -> np.ndarray:
        return secrecy_margins(cfg, channels, self.e, self.W, self.p, self.order, self.l)


@dataclass
class BlockStatus:
    block: str
    status: str
    accepted: bool
    detail: str = ""


@dataclass
class BcdTrace:
    E: list = field(default_factory=list)
    statuses: list = field(default_factory=list)
    margins: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    penalty: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    audit: Optional[float] = None   # sampled worst-case margin (robust runs)

    def non_increasing(self, slack: float = 1e-6) -> bool:
        E = np.asarray(self.E)
        return bool(np.all(np.diff(E) <= slack))


@dataclass
class BcdOptions:
    max_iter: Optional[int] = None
    eps: Optional[float] = None
    rand_count: Optional[int] = None
    optimize_phases: bool = True
    solver_tol: Optional[float] = None


def _opt(opts: Optional[BcdOptions], cfg: SystemConfig, name: str):
    v = getattr(opts, name) if opts is not None else None
    return getattr(cfg, name) if v is None else v


def initial_state(cfg: SystemConfig, channels: ChannelSet, streams: RngStreams,
                  theta: Optional[np.ndarray] = None) -> PerfectState:
    """Random phases, MRC detectors, everything computed locally, zero power."""
    if theta is None:
        theta = PhaseVector.random(channels.M, streams.get("theta0")).theta
    e = PhaseVector(theta).e if channels.M else np.zeros(0, complex)
    h, _ = effective_channels(channels, e)
    return PerfectState(cfg.L_vec.copy(), np.zeros(channels.K), mrc_detectors(channels, e), e,
                        sic_order(h))


def relative_change(E_new: float, E_old: float) -> float:
    if E_old == 0.0:
        return 0.0 if E_new == 0.0 else math.inf
    return abs(E_new - E_old) / abs(E_old)


# ----------------------------------------------------------------------------
# allocation block


def _energy_objective(cfg: SystemConfig, Lk, Pk, n_extra: int = 0):
    """Normalized energy sum(c L^3 u^3 + T P q) / E_ref over x = [u, q, extra]."""
    K = Lk.size
    cu = cfg.local_coeff[0] * Lk ** 3
    cq = cfg.T * Pk
    E_ref = float(np.sum(cu) + np.sum(cq)) or 1.0
    cu, cq = cu / E_ref, cq / E_ref
    n = 2 * K + n_extra

    def value(x):
        u = x[:K]
        return float(np.sum(cu * u ** 3) + np.sum(cq * x[K:2 * K]))

    def full(x):
        u = x[:K]
        g = np.zeros(n)
        g[:K] = 3 * cu * u ** 2
        g[K:2 * K] = cq
        H = np.zeros((n, n))
        H[np.arange(K), np.arange(K)] = 6 * cu * np.maximum(u, 0.0)
        return value(x), g, H

    return cone.Objective(value, full), E_ref


def allocation_builder(cfg: SystemConfig, active: np.ndarray) -> tuple[cone.ProgramBuilder, np.ndarray, np.ndarray]:
    b = cone.ProgramBuilder()
    Ka = int(np.sum(active))
    b.bounded("u", np.zeros(Ka), np.ones(Ka))
    b.bounded("q", np.zeros(Ka), np.ones(Ka))
    return b, cfg.L_vec[active], cfg.P_vec[active]


def sca_rate_constraint(cfg: SystemConfig, Lk, Pk, aS, aI, zeta, p0,
                        slack: float = RATE_SLACK) -> cone.SmoothConstraint:
    """Rate constraint with the subtracted log terms linearized at p0.

    Row k: r_k(u) - log2(1 + aS_k . p) + [log2(1 + aI_k . p0) + log2(1 + zeta_k p0_k)
    + gradient (p - p0)] <= slack, with p = P q and l = L u. Arrays are
    restricted to the users with a task. The slack gives the barrier an
    interior when some user cannot reach a positive secrecy rate.
    """
    K = Lk.size
    BT = cfg.B * cfg.T
    rL = Lk / BT
    I0 = 1.0 + aI @ p0
    E0 = 1.0 + zeta * p0
    c0 = (np.log(I0) + np.log(E0)) / LN2
    grad = aI / (I0[:, None] * LN2)
    grad[np.arange(K), np.arange(K)] += zeta / (E0 * LN2)
    const = rL + c0 - grad @ p0 - slack
    n = 2 * K

    def value(x):
        u, q = x[:K], x[K:2 * K]
        p = Pk * q
        S = 1.0 + aS @ p
        with np.errstate(invalid="ignore", divide="ignore"):
            return const - rL * u - np.log(np.where(S > 0, S, np.nan)) / LN2 + grad @ p

    def full(x):
        u, q = x[:K], x[K:2 * K]
        p = Pk * q
        S = 1.0 + aS @ p
        v = const - rL * u - np.log(S) / LN2 + grad @ p
        J = np.zeros((K, n))
        J[np.arange(K), np.arange(K)] = -rL
        aSq = aS * Pk[None, :]
        J[:, K:] = -aSq / (S[:, None] * LN2) + grad * Pk[None, :]
        U = np.zeros((K, n))
        U[:, K:] = aSq
        return v, J, cone.LowRank(U, 1.0 / (S ** 2 * LN2))

    return cone.SmoothConstraint(value, full, margin=True, name="rate")


def solve_allocation(cfg: SystemConfig, channels: ChannelSet, state: PerfectState,
                     tol: Optional[float] = None, freeze: Optional[np.ndarray] = None):
    """One SCA step for (l, p). Returns (l, p, SolveResult or None).

    Users in ``freeze`` stay all-local with zero power and their rate rows are
    dropped (they hold trivially there).
    """
    K = channels.K
    freeze = np.zeros(K, bool) if freeze is None else np.asarray(freeze, bool)
    active = (cfg.L_vec > 0) & ~freeze
    l = np.where(freeze, cfg.L_vec, 0.0)
    p = np.zeros(K)
    if not np.any(active):
        return l, p, None
    A, zeta = normalized_gains(cfg, channels, state.e, state.W)
    later = later_mask(state.order)
    aI = np.where(later, A, 0.0)
    aS = aI + np.diag(np.diag(A))
    ix = np.ix_(active, active)
    b, Lk, Pk = allocation_builder(cfg, active)
    p0 = state.p[active]
    b.add_smooth(sca_rate_constraint(cfg, Lk, Pk, aS[ix], aI[ix], zeta[active], p0))
    obj, E_ref = _energy_objective(cfg, Lk, Pk)
    with np.errstate(divide="ignore", invalid="ignore"):
        q0 = np.where(Pk > 0, p0 / np.where(Pk > 0, Pk, 1.0), 0.5)
    x0 = np.concatenate([state.l[active] / Lk, q0])
    prog = b.build(objective=obj, x0=x0)
    res = cone.solve_cone_program(prog, tol=tol or cfg.solver_tol)
    x = res.x
    l[active] = Lk * np.clip(x[b.blocks["u"]], 0.0, 1.0)
    p[active] = Pk * np.clip(x[b.blocks["q"]], 0.0, 1.0)
    return l, p, res


# ----------------------------------------------------------------------------
# detection block


def own_power(cfg: SystemConfig, p: np.ndarray) -> np.ndarray:
    """Power used for a user's own signal and leakage terms in the W and theta blocks.

    Idle users (p ~ 0) have no rate to protect; they are scored at full power
    instead, so the detectors and phases still prepare them for offloading.
    Their interference on other users stays at the true (zero) power.
    """
    P = cfg.P_vec
    return np.where(p > IDLE_FRACTION * P, p, P)


def idle_users(cfg: SystemConfig, p: np.ndarray) -> np.ndarray:
    return ~(p > IDLE_FRACTION * cfg.P_vec)


def detection_margin_matrix(cfg, channels, state: PerfectState, k: int) -> np.ndarray:
    """Q_k such that the linear SINR margin of w (unit norm) is w^H Q_k w.

    margin = p_k |w^H h_k|^2 - tau_k (sum_{i after k} p_i |w^H h_i|^2 + sigma_a^2),
    tau_k = 2^{r_k} (1 + p_k zeta_k) - 1, all in noise units.
    """
    h, g = effective_channels(channels, state.e)
    zeta = np.sum(np.abs(g[k]) ** 2) / cfg.sigma_e2
    r = required_rate(cfg, state.l)[k]
    pk = own_power(cfg, state.p)[k]
    tau = 2.0 ** r * (1.0 + pk * zeta) - 1.0
    Q = pk * np.outer(h[k], h[k].conj()) / cfg.sigma_a2
    for i in state.order.later(k):
        Q = Q - tau * state.p[i] * np.outer(h[i], h[i].conj()) / cfg.sigma_a2
    return Q - tau * np.eye(channels.N_a)


def solve_detection_sdp(Q: np.ndarray, tol: float = 1e-7, w0: Optional[np.ndarray] = None):
    """max s s.t. Tr(W Q) >= s, Tr W = 1, W PSD. Returns (W, SolveResult)."""
    n = Q.shape[0]
    scale = max(float(np.max(np.abs(Q))), 1e-300)
    Qs = Q / scale
    b = cone.ProgramBuilder()
    sl, basis = b.hermitian_psd("W", n)
    tr = basis.inner(np.eye(n))
    b.eq({sl.start + j: v for j, v in enumerate(tr) if v}, 1.0)
    coef = basis.inner(Qs)
    lin = -coef

    def value(x):
        return np.array([lin @ x[sl]])

    def full(x):
        J = np.zeros((1, b.n))
        J[0, sl] = lin
        return value(x), J, None

    b.add_smooth(cone.SmoothConstraint(value, full, margin=True, name="sinr"))
    W0 = np.eye(n) / n
    if w0 is not None:
        W0 = 0.5 * W0 + 0.5 * np.outer(w0, w0.conj()) / max(np.vdot(w0, w0).real, 1e-300)
    prog = b.build(x0=basis.from_matrix(W0))
    res = cone.max_margin_feasibility(prog, tol=tol)
    W = basis.to_matrix(res.x[sl])
    if res.margin is not None:
        res.margin *= scale
    return W, res


def solve_detection(cfg: SystemConfig, channels: ChannelSet, state: PerfectState,
                    rng: np.random.Generator, rand_count: Optional[int] = None):
    """Per-user max-margin detectors. A user keeps its detector unless the margin improves."""
    rand_count = rand_count or cfg.rand_count
    W = state.W.copy()
    statuses = []
    for k in range(channels.K):
        Q = detection_margin_matrix(cfg, channels, state, k)
        quality = lambda w, Q=Q: float(np.real(np.vdot(w, Q @ w)) / np.real(np.vdot(w, w)))
        old = quality(W[:, k])
        try:
            Wk, res = solve_detection_sdp(Q, cfg.solver_tol, W[:, k])
        except (np.linalg.LinAlgError, ValueError) as exc:
            statuses.append(BlockStatus(f"W{k}", "NumericalFailure", False, str(exc)))
            continue
        if res.status not in (cone.Status.OPTIMAL, cone.Status.MAX_ITERATIONS):
            statuses.append(BlockStatus(f"W{k}", res.status.value, False))
            continue
        pick = randomize_vector(Wk, quality, rand_count, rng)
        w = pick.vector
        if pick.score > old + 1e-12 * max(1.0, abs(old)):
            W[:, k] = w / np.linalg.norm(w)
            statuses.append(BlockStatus(f"W{k}", res.status.value, True))
        else:
            statuses.append(BlockStatus(f"W{k}", res.status.value, False, "no improvement"))
    return W, statuses


# ----------------------------------------------------------------------------
# phase block


def lifted_channel_rows(channels: ChannelSet, W: np.ndarray) -> np.ndarray:
    """c[k, i] with w_k^H h_i(e) = c[k, i] . [e; 1], shape (K, K, M + 1)."""
    K, M = channels.K, channels.M
    out = np.empty((K, K, M + 1), complex)
    for k in range(K):
        wH = W[:, k].conj()
        for i in range(K):
            out[k, i, :M] = (wH @ channels.H) * channels.h_r[i]
            out[k, i, M] = wH @ channels.h_a[i]
    return out


def eve_lifted(channels: ChannelSet) -> np.ndarray:
    """D_k = [G diag(h_r,k), h_e,k] so that g_k = D_k [e; 1], shape (K, N_e, M + 1)."""
    return np.concatenate([channels.G_cascade, channels.h_e[:, :, None]], axis=2)


def phase_quality(cfg: SystemConfig, channels: ChannelSet, W: np.ndarray, p: np.ndarray,
                  l: np.ndarray, eve_gain_fn: Optional[Callable] = None):
    """Candidate scores under each candidate's own gain-sorted SIC order.

    quality = summed secrecy residuals of the users with power or, when every
    user is idle, their summed full-power secrecy rates; margin = smallest
    true residual.
    ``eve_gain_fn(e)`` overrides ||g_k||^2 (worst case in the robust model).
    Both callables take the length-(M+1) lifted vector.
    """
    r = required_rate(cfg, l)
    pe = own_power(cfg, p)
    idle = idle_users(cfg, p)
    scored = phase_scored_users(idle)
    nw = np.sum(np.abs(W) ** 2, axis=0)

    def residuals(ebar):
        e = ebar[:-1] / ebar[-1]
        h, g = effective_channels(channels, e)
        later = later_mask(sic_order(h))
        A = np.abs(W.conj().T @ h.T) ** 2 / (cfg.sigma_a2 * nw)[:, None]
        ge = np.sum(np.abs(g) ** 2, axis=1) if eve_gain_fn is None else eve_gain_fn(e)
        zeta = ge / cfg.sigma_e2
        interf = 1.0 + np.sum(np.where(later, A * p[None, :], 0.0), axis=1)
        a = np.diag(A)
        true = np.log2(1 + p * a / interf) - np.log2(1 + p * zeta) - r
        probe = np.log2(1 + pe * a / interf) - np.log2(1 + pe * zeta)
        return true, probe

    def quality(ebar):
        true, probe = residuals(ebar)
        return float(np.sum(np.where(idle, probe, true)[scored]))

    def margin(ebar):
        return float(np.min(residuals(ebar)[0]))

    return quality, margin


def phase_scored_users(idle: np.ndarray) -> np.ndarray:
    """Users whose residual enters the phase objective: active ones, or all if none is."""
    return ~idle if np.any(~idle) else np.ones_like(idle)


def log_tangent_bound(x: float) -> tuple[float, float]:
    """mu* = 1/x and the tight value -mu* x + ln mu* + 1 = -ln x."""
    mu = 1.0 / x
    return mu, -mu * x + math.log(mu) + 1.0


def _phase_program(cfg, channels, state: PerfectState, Vs, S, order, eve_offset=None):
    """max sum nu s.t. nu_k <= log-tangent lower bound of user k's residual.

    Rows cover the active users (nu_k >= -RATE_SLACK); when every user is
    idle they cover all users at full power with nu free. Variables: E (unit
    diagonal, PSD) and one nu per row.
    """
    K, M = channels.K, channels.M
    n = M + 1
    later = later_mask(order)
    idle = idle_users(cfg, state.p)
    r = np.where(idle, 0.0, required_rate(cfg, state.l))
    p = state.p
    pe = own_power(cfg, p)
    ebar0 = np.append(state.e, 1.0)
    E0 = np.outer(ebar0, ebar0.conj())
    users = np.flatnonzero(phase_scored_users(idle))
    b = cone.ProgramBuilder()
    sl, basis = b.hermitian_psd("E", n, fixed_diag=True)
    nu = b.var("nu", users.size)
    for j, k in enumerate(users):
        if not idle[k]:
            b.le({nu.start + j: -1.0}, RATE_SLACK)
    # Tr(E X) = Tr(X) + basis.inner(X) . x for unit-diagonal E
    nE = basis.size
    sig_c, int_c, ev_c = np.ones(K), np.ones(K), np.zeros(K)
    sig_v, int_v, ev_v = np.zeros((K, nE)), np.zeros((K, nE)), np.zeros((K, nE))
    for k in range(K):
        if k not in users:
            continue
        for i in range(K):
            if i == k or later[k, i]:
                pw = pe[k] if i == k else p[i]
                c0, v = float(np.real(np.trace(Vs[k, i]))), basis.inner(Vs[k, i])
                sig_c[k] += pw * c0
                sig_v[k] += pw * v
                if i != k:
                    int_c[k] += pw * c0
                    int_v[k] += pw * v
        ev_c[k] = float(np.real(np.trace(S[k])))
        ev_v[k] = basis.inner(S[k])
    sig_c, int_c, ev_c = sig_c[users], int_c[users], ev_c[users]
    sig_v, int_v, ev_v = sig_v[users], int_v[users], ev_v[users]
    r = r[users]
    K = users.size
    x_cur = basis.from_matrix(E0)
    mu = 1.0 / (int_c + int_v @ x_cur)
    off = np.zeros(K) if eve_offset is None else np.asarray(eve_offset, float)[users]
    pu = pe[users]
    y0 = np.maximum(ev_c + ev_v @ x_cur, 1e-300)
    amp = np.sqrt(y0) + off
    f0 = np.log1p(pu * amp ** 2)
    f1 = pu * amp / np.sqrt(y0) / (1.0 + pu * amp ** 2)
    const = (np.log(mu) + 1.0 - mu * int_c - f0 + f1 * y0 - f1 * ev_c) / LN2
    lin_v = -(mu[:, None] * int_v + f1[:, None] * ev_v) / LN2
    kk = np.arange(K)

    def value(x):
        xe = x[sl]
        sig = sig_c + sig_v @ xe
        with np.errstate(invalid="ignore"):
            lb = np.log(np.where(sig > 0, sig, np.nan)) / LN2 + const + lin_v @ xe
        return x[nu] + r - lb

    def full(x):
        xe = x[sl]
        sig = sig_c + sig_v @ xe
        v = x[nu] + r - (np.log(sig) / LN2 + const + lin_v @ xe)
        J = np.zeros((K, b.n))
        J[:, sl] = -(sig_v / (sig[:, None] * LN2) + lin_v)
        J[kk, nu.start + kk] = 1.0
        U = np.zeros((K, b.n))
        U[:, sl] = sig_v
        return v, J, cone.LowRank(U, 1.0 / (sig ** 2 * LN2))

    b.add_smooth(cone.SmoothConstraint(value, full, margin=True, name="residual"))
    c = np.zeros(b.n)
    c[nu] = -1.0
    return b, basis, sl, c, E0


def _nu_count(b, sl) -> int:
    return b.n - sl.stop


def _nu_start(cfg, state, v0):
    """Strictly feasible nu at the start point where one exists (skips phase I).

    ``v0`` is the residual row at nu = 0, so nu < -v0 is required; active
    users also need nu > -RATE_SLACK.
    """
    idle = idle_users(cfg, state.p)
    users = np.flatnonzero(phase_scored_users(idle))
    room = -np.asarray(v0, float)
    lo = np.where(idle[users], room - 2.0, -RATE_SLACK)
    return np.where(room > lo, 0.5 * (lo + room), room - 1.0)


def recover_phases(E, quality, margin, ebar_old, count, rng) -> Randomized:
    """Randomized unit-modulus recovery plus blends toward the best-scoring draw.

    A tight rate constraint rejects most random draws outright; stepping part
    of the way from the incumbent toward the best draw keeps a feasible
    improvement available. The incumbent itself is always a candidate.
    """
    cands, gap = unit_modulus_candidates(E, count, rng)
    scores = np.array([quality(c) for c in cands])
    lead = cands[int(np.argmax(np.where(np.isfinite(scores), scores, -np.inf)))]
    cands = cands + phase_blends(ebar_old, lead) + [ebar_old]
    out = select_candidate(cands, quality, margin, gap)
    return out


def solve_phases(cfg: SystemConfig, channels: ChannelSet, state: PerfectState,
                 rng: np.random.Generator, rand_count: Optional[int] = None,
                 eve_lifted_rows: Optional[np.ndarray] = None,
                 eve_offset: Optional[np.ndarray] = None,
                 eve_gain_fn: Optional[Callable] = None):
    """Lifted phase SDP, randomized recovery, SIC order from the recovered phases.

    Returns (e, order, BlockStatus). The incumbent phases are always among
    the candidates, so the returned point is never less feasible.
    The robust model passes the nominal Eve rows D_k, the worst-case
    amplitude offset (noise units) and the worst-case gain for scoring.
    """
    K, M = channels.K, channels.M
    rand_count = rand_count or cfg.rand_count
    if M == 0:
        return state.e, state.order, BlockStatus("theta", "Skipped", False, "no RIS")
    c_rows = lifted_channel_rows(channels, state.W)
    Vs = np.einsum("kia,kib->kiab", c_rows.conj(), c_rows) / cfg.sigma_a2
    D = eve_lifted(channels) if eve_lifted_rows is None else eve_lifted_rows
    S = np.einsum("kna,knb->kab", D.conj(), D) / cfg.sigma_e2
    b, basis, sl, c, E0 = _phase_program(cfg, channels, state, Vs, S, state.order, eve_offset)
    n = M + 1
    Estart = 0.9 * E0 + 0.1 * np.eye(n)
    x0 = np.zeros(b.n)
    x0[sl] = basis.from_matrix(Estart)
    x0[b.n - _nu_count(b, sl):] = _nu_start(cfg, state, b.smooth[-1].value(x0))
    prog = b.build(c=c, x0=x0)
    try:
        res = cone.solve_cone_program(prog, tol=cfg.solver_tol)
    except (np.linalg.LinAlgError, ValueError) as exc:
        return state.e, state.order, BlockStatus("theta", "NumericalFailure", False, str(exc))
    ebar_old = np.append(state.e, 1.0)
    quality, margin = phase_quality(cfg, channels, state.W, state.p, state.l, eve_gain_fn)
    if res.status == cone.Status.INFEASIBLE or res.status == cone.Status.NUMERICAL_FAILURE:
        return state.e, state.order, BlockStatus("theta", res.status.value, False)
    E = np.eye(n) + basis.to_matrix(res.x[sl])
    pick = recover_phases(E, quality, margin, ebar_old, rand_count, rng)
    if pick.degraded:
        return state.e, state.order, BlockStatus("theta", res.status.value, False, "degraded")
    ebar = pick.vector
    e = ebar[:-1] / ebar[-1]
    e = e / np.abs(e)
    h, _ = effective_channels(channels, e)
    accepted = not np.allclose(e, state.e, rtol=0, atol=1e-15)
    return e, sic_order(h), BlockStatus("theta", res.status.value, accepted)


# ----------------------------------------------------------------------------
# driver


def _feasible(cfg, channels, l, p, W, e, order) -> bool:
    m = secrecy_margins(cfg, channels, e, W, p, order, l)
    return bool(np.all(m >= -ACCEPT_TOL))


def _allocation_step(cfg, channels, state: PerfectState, solver=None, feasible=None,
                     lin: Optional[PerfectState] = None):
    """Best of two SCA steps: idle users frozen, and every user free.

    After the difference-of-concave split an idle user's row reduces to
    "tangent gap of its interference <= 0", which pins the power of users
    decoded after it although the true constraint holds for any power.
    Freezing idle users removes that artefact; the free variant lets them
    start offloading. ``lin`` supplies the linearization point (default:
    the state itself); acceptance is always judged against ``state``.
    Returns (l, p, status) or None when neither step is acceptable.
    """
    solver = solver or solve_allocation
    feasible = feasible or _feasible
    idle = idle_users(cfg, state.p) & (cfg.L_vec > 0)
    variants = [np.zeros(channels.K, bool)]
    if np.any(idle) and not np.all(idle):
        variants.insert(0, idle)
    E_old = state.energy(cfg)
    best, status = None, "Trivial"
    for freeze in variants:
        l, p, res = solver(cfg, channels, lin or state, freeze=freeze)
        status = res.status.value if res is not None else "Trivial"
        if res is not None and res.status not in (cone.Status.OPTIMAL, cone.Status.MAX_ITERATIONS):
            continue
        E_new = energies(cfg, (l, p)).E_total
        if E_new > E_old * (1 + DESCENT_SLACK) or not feasible(cfg, channels, l, p, state.W,
                                                               state.e, state.order):
            continue
        if best is None or E_new < best[3]:
            best = (l, p, status, E_new)
    return None if best is None else best[:3]


def _extrapolated(cfg: SystemConfig, hist: list) -> Optional[np.ndarray]:
    """Aitken-style extrapolation of the last three accepted powers.

    SCA on the secrecy rows contracts linearly (the tangent of the Eve term
    is loose far from its base point). The tangent at any point still
    upper-bounds the concave term, so an extrapolated base point keeps every
    step a restriction of the true problem.
    """
    if len(hist) < 3:
        return None
    d1, d2 = hist[-2] - hist[-3], hist[-1] - hist[-2]
    n1, n2 = np.linalg.norm(d1), np.linalg.norm(d2)
    if n1 == 0.0 or n2 == 0.0:
        return None
    rho = min(n2 / n1, EXTRAPOLATION_CAP)
    if float(np.dot(d1, d2)) <= 0.0:
        return None
    return np.clip(hist[-1] + rho / (1.0 - rho) * d2, 0.0, cfg.P_vec)


def allocation_block(cfg: SystemConfig, channels: ChannelSet, state: PerfectState,
                     solver=None, feasible=None) -> BlockStatus:
    """Repeated SCA steps on (l, p); each step is kept only if feasible and not worse.

    After every second plain step the next one is also tried from an
    extrapolated linearization point and kept when it lowers the energy more.
    """
    accepted, status = False, "Trivial"
    E_old = state.energy(cfg)
    hist = [state.p.copy()]
    for _ in range(cfg.sca_inner):
        try:
            step = _allocation_step(cfg, channels, state, solver, feasible)
            p_hat = _extrapolated(cfg, hist + [step[1]]) if step is not None else None
            if p_hat is not None:
                fast = _allocation_step(cfg, channels, state, solver, feasible,
                                        lin=replace(state, p=p_hat))
                if fast is not None and energies(cfg, fast[:2]).E_total < \
                        energies(cfg, step[:2]).E_total:
                    step = fast
        except (np.linalg.LinAlgError, ValueError) as exc:
            return BlockStatus("alloc", "NumericalFailure", accepted, str(exc))
        if step is None:
            status = status if accepted else "Rejected"
            break
        state.l, state.p, status = step
        hist.append(state.p.copy())
        accepted = True
        E_new = state.energy(cfg)
        if relative_change(E_new, E_old) <= cfg.sca_inner_tol:
            break
        E_old = E_new
    return BlockStatus("alloc", status, accepted)


def run(cfg: SystemConfig, channels: ChannelSet, init: Optional[PerfectState] = None,
        opts: Optional[BcdOptions] = None, streams: Optional[RngStreams] = None):
    """Alternate the three blocks until the relative energy change is below eps."""
    streams = streams or RngStreams(0)
    state = init if init is not None else initial_state(cfg, channels, streams)
    state = replace(state)
    max_iter = _opt(opts, cfg, "max_iter")
    eps = _opt(opts, cfg, "eps")
    rand_count = _opt(opts, cfg, "rand_count")
    do_phases = opts.optimize_phases if opts is not None else True
    rng = streams.get("randomization")
    trace = BcdTrace()
    E_prev = state.energy(cfg)
    trace.E.append(E_prev)
    failed_sweeps = 0
    if not np.any(cfg.L_vec > 0):
        state.l = np.zeros(channels.K)
        state.p = np.zeros(channels.K)
        trace.E.append(0.0)
        trace.iterations, trace.converged = 1, True
        return state.solution(), trace
    for it in range(1, max_iter + 1):
        t0 = time.perf_counter()
        sts = []
        # (l, p)
        sts.append(allocation_block(cfg, channels, state))
        # W
        W, wst = solve_detection(cfg, channels, state, rng, rand_count)
        state.W = W
        sts.extend(wst)
        # theta
        if do_phases:
            e, order, pst = solve_phases(cfg, channels, state, rng, rand_count)
            state.e, state.order = e, order
            sts.append(pst)
        E = state.energy(cfg)
        trace.E.append(E)
        trace.statuses.append(sts)
        trace.margins.append(float(np.min(state.margins(cfg, channels))))
        trace.wall_ms.append(1e3 * (time.perf_counter() - t0))
        trace.iterations = it
        hard_fail = [s for s in sts if s.status not in ("Optimal", "MaxIterations", "Trivial", "Skipped")]
        failed_sweeps = failed_sweeps + 1 if len(hard_fail) == len(sts) else 0
        if failed_sweeps >= 2:
            break
        if relative_change(E, E_prev) <= eps:
            trace.converged = True
            break
        E_prev = E
    return state.solution(), trace
