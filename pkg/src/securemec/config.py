"""System, geometry and algorithm parameters.

All quantities are stored in linear SI units (Watts, seconds, Hz, bits).
dB/dBm conversions happen once, when a config is built from user input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 10.0 * np.log10(watt) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class Geometry:
    """2-D node placement and path-loss exponents."""

    ap_pos: Tuple[float, float] = (0.0, 0.0)
    ris_pos: Tuple[float, float] = (0.0, 10.0)
    eve_pos: Tuple[float, float] = (0.0, -10.0)
    user_center: Tuple[float, float] = (70.0, 0.0)
    user_radius: float = 5.0
    alpha_ua: float = 4.0   # user -> AP
    alpha_ue: float = 4.0   # user -> Eve
    alpha_ui: float = 2.0   # user -> RIS
    alpha_ia: float = 2.2   # RIS -> AP
    alpha_ie: float = 2.5   # RIS -> Eve
    L0: float = 1e-3        # linear gain at the 1 m reference distance (-30 dB)

    def __post_init__(self):
        if not self.user_radius >= 0.0:
            raise ValueError(f"user_radius must be >= 0, got {self.user_radius}")
        for name in ("alpha_ua", "alpha_ue", "alpha_ui", "alpha_ia", "alpha_ie"):
            a = getattr(self, name)
            if not 1.0 <= a <= 6.0:
                raise ValueError(f"{name} must lie in [1, 6], got {a}")
        if not self.L0 > 0.0:
            raise ValueError(f"L0 must be > 0, got {self.L0}")


@dataclass(frozen=True)
class SystemConfig:
    """Network, task and algorithm scalars.

    ``L`` may be a scalar (same task size for every user) or a length-K tuple.
    ``P_max`` is not given numerically in the source model; 0.1 W is our default.
    """

    K: int = 3
    M: int = 5
    N_a: int = 5
    N_e: int = 3
    B: float = 1e6              # Hz
    T: float = 0.1              # s
    L: float | Tuple[float, ...] = 3e5   # bits per user
    C: float = 1000.0           # CPU cycles per bit
    varsigma: float = 1e-28     # effective switched capacitance
    P_max: float = 0.1          # W, per-user budget (non-paper default)
    sigma_a2: float = 1e-12     # W (-90 dBm)
    sigma_e2: float = 1e-12     # W (-90 dBm)
    # algorithm
    eps: float = 1e-3           # relative energy tolerance of the outer loop
    eps1: float = 1e-5          # PCC penalty-sum tolerance
    max_iter: int = 50
    sca_inner: int = 30         # SCA re-linearizations inside one allocation block
    sca_inner_tol: float = 1e-5
    solver_tol: float = 1e-7
    rand_count: int = 100
    lambda0: float = 10.0
    lambda_max: float = 1e3
    lambda_growth: float = 5.0
    pcc_inner: int = 1          # PCC re-linearizations inside one phase block
    # bounded CSI error radii for Eve's channels, relative to the nominal norms
    eps_e: float = 0.01
    eps_g: float = 0.01
    eps_g_inflation: float = 1.05
    robust_lmi: str = "structured"   # or "identity": Z1 = I in the sign-definiteness LMI

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        for name in ("M", "N_a", "N_e"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.N_a < 1 or self.N_e < 1:
            raise ValueError("N_a and N_e must be >= 1")
        for name in ("B", "T", "C", "varsigma", "sigma_a2", "sigma_e2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not self.P_max >= 0:
            raise ValueError(f"P_max must be >= 0, got {self.P_max}")
        if np.any(self.L_vec < 0):
            raise ValueError("task sizes L must be >= 0")
        if min(self.max_iter, self.sca_inner, self.pcc_inner, self.rand_count) < 1:
            raise ValueError("iteration and sample counts must be >= 1")
        if self.eps_e < 0 or self.eps_g < 0:
            raise ValueError("CSI error radii must be >= 0")
        if self.robust_lmi not in ("structured", "identity"):
            raise ValueError(f"robust_lmi must be 'structured' or 'identity', got {self.robust_lmi!r}")

    @property
    def L_vec(self) -> np.ndarray:
        L = np.atleast_1d(np.asarray(self.L, dtype=float))
        if L.size == 1:
            return np.full(self.K, float(L[0]))
        if L.size != self.K:
            raise ValueError(f"L has {L.size} entries but K = {self.K}")
        return L.copy()

    @property
    def P_vec(self) -> np.ndarray:
        return np.full(self.K, float(self.P_max))

    @property
    def local_coeff(self) -> np.ndarray:
        """Per-bit-cubed local energy coefficient varsigma * C^3 / T^2."""
        return np.full(self.K, self.varsigma * self.C ** 3 / self.T ** 2)
