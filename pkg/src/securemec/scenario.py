"""Geometry, path loss, Rayleigh channel draws and RIS-composed channels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .config import Geometry, SystemConfig

# stream identifiers; the integer codes are part of the reproducibility contract
LINKS = {
    "geometry": 0,
    "ua": 1,        # user -> AP
    "ui": 2,        # user -> RIS
    "ue": 3,        # user -> Eve
    "ia": 4,        # RIS -> AP
    "ie": 5,        # RIS -> Eve
    "theta0": 6,
    "randomization": 7,
    "audit": 8,
}


class RngStreams:
    """Counter-based random streams keyed by (seed, realization, link, index).

    Every stream is an independent Philox generator, so draws for one link or
    one user never depend on how many draws other links made.
    """

    def __init__(self, seed: int, realization: int = 0):
        self.seed = int(seed)
        self.realization = int(realization)

    def get(self, link: str, index: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed, self.realization, LINKS[link], int(index)])
        return np.random.Generator(np.random.Philox(ss))


RngLike = Union[RngStreams, np.random.Generator]


def _stream(rng: RngLike, link: str, index: int) -> np.random.Generator:
    if isinstance(rng, RngStreams):
        return rng.get(link, index)
    return rng


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """CN(0, 1) samples: independent real/imag parts with variance 1/2."""
    z = rng.standard_normal(tuple(np.atleast_1d(size)) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def path_gain(d, alpha: float, L0: float):
    """Large-scale power gain L0 * d^-alpha, distance clamped at d0 = 1 m."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = L0 * np.maximum(d, 1.0) ** (-float(alpha))
    return float(out) if out.ndim == 0 else out


def sample_geometry(cfg: SystemConfig, geo: Geometry, rng: RngLike) -> np.ndarray:
    """K user positions drawn uniformly over the disk around ``user_center``.

    With an :class:`RngStreams` each user has its own stream, so the first K
    users are identical across K.
    """
    pos = np.empty((cfg.K, 2))
    c = np.asarray(geo.user_center, dtype=float)
    for k in range(cfg.K):
        g = _stream(rng, "geometry", k)
        u, v = g.random(2)
        r = geo.user_radius * np.sqrt(u)
        phi = 2.0 * np.pi * v
        pos[k] = c + r * np.array([np.cos(phi), np.sin(phi)])
    return pos


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ChannelSet:
    """One realization of every channel.

    Shapes: h_a (K, N_a), h_r (K, M), h_e (K, N_e), H (N_a, M), G (N_e, M),
    G_cascade (K, N_e, M) with G_cascade[k] = G @ diag(h_r[k]).
    """

    h_a: np.ndarray
    h_r: np.ndarray
    h_e: np.ndarray
    H: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        K = self.h_a.shape[0]
        M = self.H.shape[1]
        if self.h_r.shape != (K, M) or self.h_e.shape[0] != K:
            raise ValueError("inconsistent user dimensions")
        if self.G.shape[1] != M or self.H.shape[0] != self.h_a.shape[1]:
            raise ValueError("inconsistent RIS dimensions")
        if self.G.shape[0] != self.h_e.shape[1]:
            raise ValueError("inconsistent Eve dimensions")
        for name in ("h_a", "h_r", "h_e", "H", "G"):
            object.__setattr__(self, name, _freeze(np.asarray(getattr(self, name), dtype=complex)))
        object.__setattr__(self, "G_cascade", _freeze(self.G[None, :, :] * self.h_r[:, None, :]))

    @property
    def K(self) -> int:
        return self.h_a.shape[0]

    @property
    def M(self) -> int:
        return self.H.shape[1]

    @property
    def N_a(self) -> int:
        return self.h_a.shape[1]

    @property
    def N_e(self) -> int:
        return self.h_e.shape[1]

    def without_ris(self) -> "ChannelSet":
        """Same direct links, reflected links zeroed."""
        return ChannelSet(self.h_a, np.zeros_like(self.h_r), self.h_e,
                          np.zeros_like(self.H), np.zeros_like(self.G))

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for name in ("h_a", "h_r", "h_e", "H", "G"):
            h.update(getattr(self, name).tobytes())
        return h.hexdigest()


def _dist(a, b) -> np.ndarray:
    return np.linalg.norm(np.asarray(a, float) - np.asarray(b, float), axis=-1)


def sample_channels(cfg: SystemConfig, geo: Geometry, user_positions: np.ndarray,
                    rng: RngLike) -> ChannelSet:
    """Rayleigh fading scaled by the path gain of each link.

    RIS-side draws are made per element (columns of H and G, entries of h_r
    per user), so a larger M extends a smaller-M realization.
    """
    K, M, Na, Ne = cfg.K, cfg.M, cfg.N_a, cfg.N_e
    L0 = geo.L0
    h_a = np.empty((K, Na), complex)
    h_r = np.empty((K, M), complex)
    h_e = np.empty((K, Ne), complex)
    for k in range(K):
        u = user_positions[k]
        h_a[k] = np.sqrt(path_gain(_dist(u, geo.ap_pos), geo.alpha_ua, L0)) * \
            complex_normal(_stream(rng, "ua", k), Na)
        h_r[k] = np.sqrt(path_gain(_dist(u, geo.ris_pos), geo.alpha_ui, L0)) * \
            complex_normal(_stream(rng, "ui", k), M)
        h_e[k] = np.sqrt(path_gain(_dist(u, geo.eve_pos), geo.alpha_ue, L0)) * \
            complex_normal(_stream(rng, "ue", k), Ne)
    H = np.empty((Na, M), complex)
    G = np.empty((Ne, M), complex)
    ga = np.sqrt(path_gain(_dist(geo.ris_pos, geo.ap_pos), geo.alpha_ia, L0))
    ge = np.sqrt(path_gain(_dist(geo.ris_pos, geo.eve_pos), geo.alpha_ie, L0))
    for m in range(M):
        H[:, m] = ga * complex_normal(_stream(rng, "ia", m), Na)
        G[:, m] = ge * complex_normal(_stream(rng, "ie", m), Ne)
    return ChannelSet(h_a, h_r, h_e, H, G)


@dataclass(frozen=True)
class PhaseVector:
    """RIS reflection coefficients e_m = exp(j theta_m), theta in [0, 2pi)."""

    theta: np.ndarray

    def __post_init__(self):
        th = np.mod(np.asarray(self.theta, dtype=float), 2.0 * np.pi)
        th = np.where(th >= 2.0 * np.pi, 0.0, th)   # mod of a tiny negative rounds up to 2 pi
        object.__setattr__(self, "theta", _freeze(th))

    @property
    def e(self) -> np.ndarray:
        return np.exp(1j * self.theta)

    @classmethod
    def from_complex(cls, e: np.ndarray) -> "PhaseVector":
        return cls(np.angle(np.asarray(e, dtype=complex)))

    @classmethod
    def random(cls, M: int, rng: np.random.Generator) -> "PhaseVector":
        return cls(rng.uniform(0.0, 2.0 * np.pi, M))


def effective_channels(cs: ChannelSet, e) -> tuple[np.ndarray, np.ndarray]:
    """Equivalent channels h_k = h_a,k + H diag(e) h_r,k and g_k likewise.

    ``e`` may be a PhaseVector or any complex vector (e = 0 removes the RIS).
    Returns (h, g) with shapes (K, N_a) and (K, N_e).
    """
    if isinstance(e, PhaseVector):
        e = e.e
    e = np.asarray(e, dtype=complex)
    if e.shape != (cs.M,):
        raise ValueError(f"phase vector has shape {e.shape}, expected ({cs.M},)")
    x = cs.h_r * e[None, :]
    return cs.h_a + x @ cs.H.T, cs.h_e + x @ cs.G.T


@dataclass(frozen=True)
class SicOrder:
    """Decoding order: perm[0] is decoded first (strongest equivalent channel)."""

    perm: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.perm, dtype=int)
        if sorted(p.tolist()) != list(range(p.size)):
            raise ValueError(f"not a permutation: {p}")
        object.__setattr__(self, "perm", _freeze(p))

    @property
    def position(self) -> np.ndarray:
        """position[k] = rank of user k in the decoding order."""
        pos = np.empty_like(self.perm)
        pos[self.perm] = np.arange(self.perm.size)
        return pos

    def later(self, k: int) -> np.ndarray:
        """Users decoded after user k (the residual interferers of k)."""
        return self.perm[self.position[k] + 1:]

    @classmethod
    def identity(cls, K: int) -> "SicOrder":
        return cls(np.arange(K))


def sic_order(h) -> SicOrder:
    """Sort users by descending ||h_k||; ties keep ascending user index."""
    h = np.atleast_2d(h)
    # scale rows first so tiny gains do not underflow to a tie when squared
    m = np.max(np.abs(h), axis=1, initial=0.0)
    safe = np.where(m > 0, m, 1.0)
    gains = m * np.linalg.norm(h / safe[:, None], axis=1)
    return SicOrder(np.argsort(-gains, kind="stable"))
