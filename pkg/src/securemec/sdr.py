"""Rank-one recovery from lifted (SDR) solutions by Gaussian randomization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .linalg import hermitian_eig
from .scenario import complex_normal

__all__ = ["Randomized", "randomize_vector", "randomize_unit_modulus", "unit_modulus_candidates",
           "phase_blends", "extract_phases", "select_candidate", "eigen_gap"]

RANK_ONE_GAP = 1e-6
MARGIN_TOL = 1e-6


@dataclass(frozen=True)
class Randomized:
    vector: np.ndarray
    score: float
    degraded: bool = False   # every candidate violated the caller's margin
    gap: float = 0.0         # lambda_2 / lambda_1 of the lifted matrix


def eigen_gap(X: np.ndarray) -> float:
    lam, _ = hermitian_eig(X)
    if lam.size < 2 or lam[0] <= 0:
        return 0.0
    return float(max(lam[1], 0.0) / lam[0])


def select_candidate(cands: Sequence[np.ndarray], quality, margin, gap) -> Randomized:
    scores = np.array([quality(c) for c in cands], float)
    scores = np.where(np.isfinite(scores), scores, -np.inf)
    if margin is not None:
        margins = np.array([margin(c) for c in cands], float)
        margins = np.where(np.isfinite(margins), margins, -np.inf)
        ok = margins >= -MARGIN_TOL
        if not np.any(ok):
            i = int(np.argmax(margins))
            return Randomized(cands[i], float(scores[i]), True, gap)
        scores = np.where(ok, scores, -np.inf)
    i = int(np.argmax(scores))
    return Randomized(cands[i], float(scores[i]), False, gap)


def randomize_vector(X: np.ndarray, quality: Callable[[np.ndarray], float], count: int,
                     rng: np.random.Generator,
                     margin: Optional[Callable[[np.ndarray], float]] = None,
                     extra: Sequence[np.ndarray] = ()) -> Randomized:
    """Best unit-norm w among Gaussian draws w ~ CN(0, X) and the principal eigenvector.

    A numerically rank-one X returns its principal eigenvector directly.
    ``margin`` (optional) discards candidates violating the caller's constraint.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    lam, Q = hermitian_eig(X)
    lam = np.maximum(lam, 0.0)
    gap = float(lam[1] / lam[0]) if lam.size > 1 and lam[0] > 0 else 0.0
    principal = Q[:, 0].copy()
    if gap <= RANK_ONE_GAP:
        return select_candidate([principal] + [np.asarray(v, complex) for v in extra], quality, margin, gap)
    F = Q * np.sqrt(lam)[None, :]
    z = complex_normal(rng, (count, lam.size))
    W = z @ F.T
    nrm = np.linalg.norm(W, axis=1, keepdims=True)
    W = W / np.where(nrm > 0, nrm, 1.0)
    cands = [principal] + list(W) + [np.asarray(v, complex) for v in extra]
    return select_candidate(cands, quality, margin, gap)


def unit_modulus_candidates(E: np.ndarray, count: int, rng: np.random.Generator):
    """exp(j arg(x)) for x ~ CN(0, E), led by the projected principal eigenvector.

    Returns (candidates, eigen-gap). A numerically rank-one E yields only the
    principal projection.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    lam, Q = hermitian_eig(E)
    lam = np.maximum(lam, 0.0)
    gap = float(lam[1] / lam[0]) if lam.size > 1 and lam[0] > 0 else 0.0
    cands = [np.exp(1j * np.angle(Q[:, 0]))]
    if gap > RANK_ONE_GAP:
        F = Q * np.sqrt(lam)[None, :]
        z = complex_normal(rng, (count, lam.size))
        cands += list(np.exp(1j * np.angle(z @ F.T)))
    return cands, gap


def randomize_unit_modulus(E: np.ndarray, quality: Callable[[np.ndarray], float], count: int,
                           rng: np.random.Generator,
                           margin: Optional[Callable[[np.ndarray], float]] = None,
                           extra: Sequence[np.ndarray] = ()) -> Randomized:
    """Best unit-modulus vector exp(j arg(x)) with x ~ CN(0, E).

    The entrywise projection of the principal eigenvector is always a candidate;
    callers may add their own (e.g. the incumbent) through ``extra``.
    """
    cands, gap = unit_modulus_candidates(E, count, rng)
    cands += [np.asarray(v, complex) for v in extra]
    return select_candidate(cands, quality, margin, gap)


def phase_blends(start: np.ndarray, target: np.ndarray, levels: int = 8) -> list:
    """Unit-modulus points on the shortest per-entry phase path from start toward target.

    Fractions 1/2, 1/4, ..., 2^-levels of the way; global phases of both
    ends are aligned on the last entry first.
    """
    start = np.asarray(start, complex)
    target = np.asarray(target, complex)
    target = target * np.exp(1j * (np.angle(start[-1]) - np.angle(target[-1])))
    d = np.angle(target / start)
    return [start * np.exp(1j * d * 0.5 ** j) for j in range(1, levels + 1)]


def extract_phases(ebar: np.ndarray) -> np.ndarray:
    """theta_m = arg(ebar_m / ebar_last) in [0, 2pi); the last entry carries the global phase."""
    ebar = np.asarray(ebar, complex)
    if np.any(np.abs(ebar) == 0):
        raise ValueError("phase extraction needs nonzero entries")
    th = np.mod(np.angle(ebar[:-1] / ebar[-1]), 2.0 * np.pi)
    return np.where(th >= 2.0 * np.pi, 0.0, th)
