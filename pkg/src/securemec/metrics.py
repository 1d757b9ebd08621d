"""Closed-form rates, energies and the worst-case eavesdropper gain."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import SystemConfig
from .scenario import ChannelSet, PhaseVector, SicOrder, effective_channels, sic_order

FEAS_TOL = 1e-6


@dataclass(frozen=True)
class Allocation:
    l: np.ndarray   # local bits (continuous)
    p: np.ndarray   # transmit power, W


@dataclass(frozen=True)
class Solution:
    """A full decision point. W holds the detectors as columns (N_a, K)."""

    l: np.ndarray
    p: np.ndarray
    W: np.ndarray
    e: np.ndarray
    order: SicOrder

    @property
    def phases(self) -> PhaseVector:
        return PhaseVector.from_complex(self.e)

    @property
    def alloc(self) -> Allocation:
        return Allocation(self.l, self.p)


@dataclass(frozen=True)
class RateReport:
    gamma: np.ndarray
    gamma_e: np.ndarray
    Rs: np.ndarray       # clamped secrecy rate, bits/s/Hz
    r: np.ndarray        # required secrecy rate
    margin: np.ndarray   # Rs - r


@dataclass(frozen=True)
class EnergyReport:
    E_loc: np.ndarray
    E_off: np.ndarray

    @property
    def E_total(self) -> float:
        return float(np.sum(self.E_loc + self.E_off))

    @property
    def E_local(self) -> float:
        return float(np.sum(self.E_loc))

    @property
    def E_offload(self) -> float:
        return float(np.sum(self.E_off))


@dataclass(frozen=True)
class EveCsi:
    """Nominal Eve channels with absolute error radii (Euclidean / Frobenius)."""

    h_e_nominal: np.ndarray      # (K, N_e)
    G_cascade_nominal: np.ndarray  # (K, N_e, M)
    eps_e: np.ndarray            # (K,)
    eps_g: np.ndarray            # (K,)

    def __post_init__(self):
        if np.any(np.asarray(self.eps_e) < 0) or np.any(np.asarray(self.eps_g) < 0):
            raise ValueError("error radii must be non-negative")

    @classmethod
    def from_channels(cls, cs: ChannelSet, eps_e: float, eps_g: float,
                      relative: bool = True) -> "EveCsi":
        """Treat the drawn Eve channels as estimates.

        With ``relative`` the radii scale with the nominal norms,
        ||dh_k|| <= eps_e ||h_e,k|| and ||dG_k||_F <= eps_g ||G_k||_F.
        """
        K = cs.K
        if relative:
            re = eps_e * np.linalg.norm(cs.h_e, axis=1)
            rg = eps_g * np.linalg.norm(cs.G_cascade.reshape(K, -1), axis=1)
        else:
            re = np.full(K, float(eps_e))
            rg = np.full(K, float(eps_g))
        return cls(cs.h_e.copy(), cs.G_cascade.copy(), re, rg)

    def nominal_eve_channel(self, e: np.ndarray) -> np.ndarray:
        """t_k = h_e,k + G_k e for every user, shape (K, N_e)."""
        return self.h_e_nominal + np.einsum("knm,m->kn", self.G_cascade_nominal, e)


def _as_e(e) -> np.ndarray:
    return e.e if isinstance(e, PhaseVector) else np.asarray(e, dtype=complex)


def required_rate(cfg: SystemConfig, l) -> np.ndarray:
    """Secrecy rate (bits/s/Hz) needed to offload the remaining L - l bits in T."""
    return (cfg.L_vec - np.asarray(l, float)) / (cfg.B * cfg.T)


def energies(cfg: SystemConfig, alloc) -> EnergyReport:
    l = np.asarray(alloc.l if hasattr(alloc, "l") else alloc[0], float)
    p = np.asarray(alloc.p if hasattr(alloc, "p") else alloc[1], float)
    E_loc = cfg.local_coeff * l ** 3
    E_off = p * cfg.T
    return EnergyReport(E_loc, E_off)


def detector_gains(W: np.ndarray, h: np.ndarray) -> np.ndarray:
    """|w_k^H h_i|^2 as a (K, K) array indexed [detector k, user i]."""
    return np.abs(W.conj().T @ h.T) ** 2


def model_rates(cfg: SystemConfig, channels: ChannelSet, e, W: np.ndarray, p,
                order: Optional[SicOrder] = None, l=None,
                eve_gain: Optional[np.ndarray] = None) -> RateReport:
    """SINRs and secrecy rates under perfect SIC.

    ``eve_gain`` overrides ||g_k||^2 (used for the worst-case Eve).
    ``order`` defaults to the gain-sorted order of the current channels.
    """
    p = np.asarray(p, float)
    h, g = effective_channels(channels, _as_e(e))
    if W.shape != (channels.N_a, channels.K) or p.shape != (channels.K,):
        raise ValueError("dimension mismatch between W, p and channels")
    if order is None:
        order = sic_order(h)
    A = detector_gains(W, h)
    pos = order.position
    later = pos[None, :] > pos[:, None]          # later[k, j]: j decoded after k
    interf = np.sum(np.where(later, A * p[None, :], 0.0), axis=1)
    noise = cfg.sigma_a2 * np.sum(np.abs(W) ** 2, axis=0)
    gamma = p * np.diag(A) / (interf + noise)
    ge = np.sum(np.abs(g) ** 2, axis=1) if eve_gain is None else np.asarray(eve_gain, float)
    gamma_e = p * ge / cfg.sigma_e2
    Rs = np.maximum(0.0, np.log2(1.0 + gamma) - np.log2(1.0 + gamma_e))
    r = np.zeros(channels.K) if l is None else required_rate(cfg, l)
    return RateReport(gamma, gamma_e, Rs, r, Rs - r)


def secrecy_margins(cfg, channels, e, W, p, order, l, eve_gain=None) -> np.ndarray:
    """Unclamped log2(1+gamma) - log2(1+gamma_e) - r for every user."""
    rr = model_rates(cfg, channels, e, W, p, order, l, eve_gain)
    return np.log2(1 + rr.gamma) - np.log2(1 + rr.gamma_e) - rr.r


def worst_case_eve_gain(csi: EveCsi, e, k: Optional[int] = None):
    """max ||h_e,k + G_k e||^2 over the error balls.

    Triangle inequality gives ||t_k|| + eps_e + eps_g ||e||, attained by
    perturbations aligned with t_k, so the bound is exact.
    """
    e = _as_e(e)
    t = csi.nominal_eve_channel(e)
    out = (np.linalg.norm(t, axis=1) + csi.eps_e + csi.eps_g * np.linalg.norm(e)) ** 2
    return out if k is None else float(out[k])


def sample_ball(rng: np.random.Generator, shape, radius: float, n: int,
                boundary_fraction: float = 0.5) -> np.ndarray:
    """n complex arrays of the given shape, uniform in the Frobenius ball.

    A fraction of the samples is pushed onto the sphere, where violations live.
    """
    dim = int(np.prod(shape))
    z = rng.standard_normal((n, dim)) + 1j * rng.standard_normal((n, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    rad = rng.random(n) ** (1.0 / (2 * dim))
    nb = int(round(boundary_fraction * n))
    rad[:nb] = 1.0
    return (radius * rad[:, None] * z).reshape((n,) + tuple(shape))


def sampled_eve_gains(csi: EveCsi, e, k: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """||g_k||^2 for n admissible perturbations (dh, dG) of user k's Eve channel."""
    e = _as_e(e)
    Ne, M = csi.G_cascade_nominal.shape[1:]
    dh = sample_ball(rng, (Ne,), csi.eps_e[k], n)
    dG = sample_ball(rng, (Ne, M), csi.eps_g[k], n)
    g = csi.h_e_nominal[k][None] + dh + np.einsum("nm,m->n", csi.G_cascade_nominal[k], e)[None] \
        + np.einsum("snm,m->sn", dG, e)
    return np.sum(np.abs(g) ** 2, axis=1)


@dataclass(frozen=True)
class Evaluation:
    rates: RateReport
    energy: EnergyReport
    feasible: bool
    min_margin: float


def evaluate_solution(cfg: SystemConfig, channels: ChannelSet, solution: Solution,
                      mode: str = "perfect", csi: Optional[EveCsi] = None,
                      tol: float = FEAS_TOL) -> Evaluation:
    """Rates, energies and a feasibility verdict for a complete solution.

    Robust mode replaces Eve's gain by the worst case over the CSI error balls.
    """
    eve_gain = None
    if mode == "robust":
        if csi is None:
            raise ValueError("robust evaluation needs EveCsi")
        eve_gain = worst_case_eve_gain(csi, solution.e)
    elif mode != "perfect":
        raise ValueError(f"unknown mode {mode!r}")
    rates = model_rates(cfg, channels, solution.e, solution.W, solution.p,
                        solution.order, solution.l, eve_gain)
    energy = energies(cfg, solution)
    L, P = cfg.L_vec, cfg.P_vec
    l, p = np.asarray(solution.l), np.asarray(solution.p)
    bounds_ok = bool(np.all(l >= -tol * np.maximum(L, 1)) and np.all(l <= L * (1 + 1e-9) + tol)
                     and np.all(p >= -1e-12) and np.all(p <= P * (1 + 1e-9) + 1e-15))
    mm = float(np.min(rates.margin)) if rates.margin.size else 0.0
    return Evaluation(rates, energy, bool(bounds_ok and mm >= -tol), mm)


def robust_audit(cfg: SystemConfig, channels: ChannelSet, solution: Solution, csi: EveCsi,
                 n_samples: int = 1000, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Worst sampled secrecy margin per user over random admissible Eve errors."""
    rng = rng if rng is not None else np.random.default_rng(0)
    rr = model_rates(cfg, channels, solution.e, solution.W, solution.p,
                     solution.order, solution.l)
    out = np.empty(channels.K)
    for k in range(channels.K):
        ge = np.max(sampled_eve_gains(csi, solution.e, k, n_samples, rng))
        gamma_e = solution.p[k] * ge / cfg.sigma_e2
        Rs = max(0.0, np.log2(1 + rr.gamma[k]) - np.log2(1 + gamma_e))
        out[k] = Rs - rr.r[k]
    return out
