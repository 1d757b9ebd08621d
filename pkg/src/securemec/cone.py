"""Log-barrier interior-point solver for small dense convex programs.

A :class:`ConeProgram` is a real vector variable with

* a smooth convex objective (or a linear one),
* smooth convex constraints f(x) <= 0 (vector valued),
* linear inequalities G x <= h and equalities A x = b,
* linear matrix inequalities F0 + sum_j x_j F_j >= 0 over complex Hermitian
  matrices; a PSD variable block is an LMI whose map is a HermitianBasis.

Infeasible starts go through a phase-I problem (minimize the largest
violation s).  Equalities are eliminated through a null-space basis.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .linalg import HermitianBasis


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class Objective:
    """Smooth convex objective. ``full`` returns (f, grad, hess); hess may be None."""

    value: Callable[[np.ndarray], float]
    full: Callable[[np.ndarray], tuple]


@dataclass
class SmoothConstraint:
    """Vector of convex functions, each required to be <= 0.

    ``value(x)`` returns shape (q,) and may return inf/nan outside the domain.
    ``full(x)`` returns (values (q,), jacobian (q, n), hessians (q, n, n), a
    ``LowRank`` for rank-one row Hessians, or None).
    ``margin`` marks the rows that max-margin feasibility relaxes.
    """

    value: Callable[[np.ndarray], np.ndarray]
    full: Callable[[np.ndarray], tuple]
    margin: bool = True
    name: str = ""


@dataclass
class LowRank:
    """Row Hessians d_k u_k u_k^T given by the factor U (q, n) and weights d (q,)."""

    U: np.ndarray
    d: np.ndarray

    def dense(self) -> np.ndarray:
        return self.d[:, None, None] * self.U[:, :, None] * self.U[:, None, :]


@dataclass
class LMI:
    """F0 + sum_j x[idx[j]] F[j] >= 0, or F0 + basis.to_matrix(x[idx]) >= 0."""

    F0: np.ndarray
    idx: np.ndarray
    F: Optional[np.ndarray] = None
    basis: Optional[HermitianBasis] = None
    domain: bool = False   # variable PSD block: never relaxed by phase I
    margin: bool = False
    name: str = ""

    @property
    def order(self) -> int:
        return self.F0.shape[0]

    def matrix(self, x: np.ndarray) -> np.ndarray:
        if self.basis is not None:
            return self.F0 + self.basis.to_matrix(x[self.idx])
        return self.F0 + np.tensordot(x[self.idx], self.F, axes=1)


@dataclass
class ConeProgram:
    n: int
    objective: Optional[Objective] = None
    c: Optional[np.ndarray] = None
    smooth: list = field(default_factory=list)
    G: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    G_margin: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    lmis: list = field(default_factory=list)
    x0: Optional[np.ndarray] = None
    blocks: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.G is None:
            self.G = np.zeros((0, self.n))
            self.h = np.zeros(0)
        self.G = np.atleast_2d(np.asarray(self.G, float)).reshape(-1, self.n)
        self.h = np.asarray(self.h, float).reshape(-1)
        if self.G_margin is None:
            self.G_margin = np.zeros(self.G.shape[0], bool)
        if self.A is None:
            self.A = np.zeros((0, self.n))
            self.b = np.zeros(0)
        self.A = np.atleast_2d(np.asarray(self.A, float)).reshape(-1, self.n)
        self.b = np.asarray(self.b, float).reshape(-1)

    def objective_value(self, x: np.ndarray) -> float:
        if self.objective is not None:
            return float(self.objective.value(x))
        if self.c is not None:
            return float(self.c @ x)
        return 0.0

    def violation(self, x: np.ndarray) -> float:
        v = 0.0
        for sc in self.smooth:
            val = np.asarray(sc.value(x), float)
            if val.size:
                v = max(v, float(np.max(np.where(np.isfinite(val), val, np.inf))))
        if self.G.shape[0]:
            v = max(v, float(np.max(self.G @ x - self.h)))
        if self.A.shape[0]:
            v = max(v, float(np.max(np.abs(self.A @ x - self.b))))
        for lmi in self.lmis:
            F = lmi.matrix(x)
            lam = np.linalg.eigvalsh(0.5 * (F + F.conj().T))
            v = max(v, float(-lam[0]))
        return max(v, 0.0)

    def block(self, x: np.ndarray, name: str) -> np.ndarray:
        return x[self.blocks[name]]


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray
    objective: float
    violation: float
    iterations: int
    gap: float = math.inf
    margin: Optional[float] = None
    history: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == Status.OPTIMAL


class ProgramBuilder:
    """Incremental layout of variable blocks and constraints."""

    def __init__(self):
        self.n = 0
        self.blocks: dict[str, slice] = {}
        self._G: list[tuple[dict, float, bool]] = []
        self._A: list[tuple[dict, float]] = []
        self.smooth: list[SmoothConstraint] = []
        self.lmis: list[LMI] = []
        self.bases: dict[str, HermitianBasis] = {}

    def var(self, name: str, size: int) -> slice:
        sl = slice(self.n, self.n + size)
        self.blocks[name] = sl
        self.n += size
        return sl

    def nonneg(self, name: str, size: int) -> slice:
        sl = self.var(name, size)
        for i in range(sl.start, sl.stop):
            self.le({i: -1.0}, 0.0)
        return sl

    def bounded(self, name: str, lo, hi) -> slice:
        lo, hi = np.atleast_1d(lo).astype(float), np.atleast_1d(hi).astype(float)
        sl = self.var(name, lo.size)
        for j, i in enumerate(range(sl.start, sl.stop)):
            self.le({i: -1.0}, -lo[j])
            self.le({i: 1.0}, hi[j])
        return sl

    def hermitian_psd(self, name: str, order: int, fixed_diag: bool = False,
                      diag_value: float = 1.0) -> tuple[slice, HermitianBasis]:
        """PSD variable block. With ``fixed_diag`` the diagonal is pinned to diag_value."""
        basis = HermitianBasis(order, fixed_diag=fixed_diag)
        sl = self.var(name, basis.size)
        F0 = (diag_value * np.eye(order) if fixed_diag else np.zeros((order, order))).astype(complex)
        self.lmis.append(LMI(F0, np.arange(sl.start, sl.stop), basis=basis, domain=True, name=name))
        self.bases[name] = basis
        return sl, basis

    def le(self, coeffs: dict, rhs: float, margin: bool = False):
        self._G.append((coeffs, float(rhs), margin))

    def le_row(self, row: np.ndarray, rhs: float, margin: bool = False):
        self._G.append(({i: v for i, v in enumerate(row) if v != 0.0}, float(rhs), margin))

    def eq(self, coeffs: dict, rhs: float):
        self._A.append((coeffs, float(rhs)))

    def add_smooth(self, sc: SmoothConstraint):
        self.smooth.append(sc)

    def add_lmi(self, lmi: LMI):
        self.lmis.append(lmi)

    def build(self, objective: Optional[Objective] = None, c=None, x0=None) -> ConeProgram:
        n = self.n
        G = np.zeros((len(self._G), n))
        h = np.zeros(len(self._G))
        gm = np.zeros(len(self._G), bool)
        for r, (co, rhs, mg) in enumerate(self._G):
            for i, v in co.items():
                G[r, i] += v
            h[r] = rhs
            gm[r] = mg
        A = np.zeros((len(self._A), n))
        b = np.zeros(len(self._A))
        for r, (co, rhs) in enumerate(self._A):
            for i, v in co.items():
                A[r, i] += v
            b[r] = rhs
        return ConeProgram(n, objective, None if c is None else np.asarray(c, float),
                           list(self.smooth), G, h, gm, A, b, list(self.lmis),
                           None if x0 is None else np.asarray(x0, float), dict(self.blocks))


# ----------------------------------------------------------------------------
# barrier machinery


class _Barrier:
    """Barrier function over y = [x] or y = [x, s] with s-coupled constraints.

    Coupling coefficients: smooth f_i(x) + a_i s <= 0, linear G x + a s <= h,
    LMI F(x) + a s I >= 0.  The objective is the program's objective, or
    ``s_obj * s`` when ``s_obj`` is set.
    """

    def __init__(self, prog: ConeProgram, aug: Optional[dict] = None):
        self.prog = prog
        self.n = prog.n
        self.aug = aug is not None
        self.nvar = self.n + (1 if self.aug else 0)
        aug = aug or {}
        self.s_obj = aug.get("s_obj")
        self.a_smooth = aug.get("smooth", [None] * len(prog.smooth))
        a_G = aug.get("G", np.zeros(prog.G.shape[0]))
        self.a_lmi = aug.get("lmi", [0.0] * len(prog.lmis))
        G, h = prog.G, prog.h
        if self.aug:
            G = np.hstack([G, np.asarray(a_G, float)[:, None]])
            extra = aug.get("extra_rows")
            if extra is not None:
                G = np.vstack([G, extra[0]])
                h = np.concatenate([h, extra[1]])
        self.G, self.h = G, h
        self.lmis = prog.lmis
        self._lmi_F = []
        for lmi, a in zip(self.lmis, self.a_lmi):
            if lmi.basis is None and self.aug and a != 0.0:
                Fx = np.concatenate([lmi.F, a * np.eye(lmi.order, dtype=complex)[None]], axis=0)
                idx = np.concatenate([lmi.idx, [self.n]])
                self._lmi_F.append((idx, Fx))
            elif lmi.basis is None:
                self._lmi_F.append((lmi.idx, lmi.F))
            else:
                self._lmi_F.append(None)
        self.m = G.shape[0] + sum(l.order for l in self.lmis)

    def set_rows(self, x0):
        self.m = 0
        for sc in self.prog.smooth:
            self.m += np.atleast_1d(sc.value(x0)).size
        self.m += self.G.shape[0] + sum(l.order for l in self.lmis)

    def max_linear_step(self, y, dy, frac: float = 0.99) -> float:
        """Largest step <= 1 keeping a fraction of every linear slack."""
        if not self.G.shape[0]:
            return 1.0
        Gd = self.G @ dy
        pos = Gd > 0
        if not np.any(pos):
            return 1.0
        r = self.h - self.G @ y
        return float(min(1.0, frac * np.min(r[pos] / Gd[pos])))

    def objective(self, y, order):
        if self.s_obj is not None:
            if order == 0:
                return self.s_obj * y[self.n]
            g = np.zeros(self.nvar)
            g[self.n] = self.s_obj
            return self.s_obj * y[self.n], g, None
        p = self.prog
        x = y[: self.n]
        if p.objective is not None:
            if order == 0:
                return float(p.objective.value(x))
            f, g, H = p.objective.full(x)
            gg = np.zeros(self.nvar)
            gg[: self.n] = g
            if H is not None and self.aug:
                HH = np.zeros((self.nvar, self.nvar))
                HH[: self.n, : self.n] = H
                H = HH
            return float(f), gg, H
        c = p.c if p.c is not None else np.zeros(self.n)
        if order == 0:
            return float(c @ x)
        gg = np.zeros(self.nvar)
        gg[: self.n] = c
        return float(c @ x), gg, None

    def lmi_matrix(self, j, y):
        lmi = self.lmis[j]
        a = self.a_lmi[j]
        F = lmi.matrix(y[: self.n])
        if self.aug and a != 0.0:
            F = F + a * y[self.n] * np.eye(lmi.order)
        return F

    def value(self, y, t):
        """Barrier value; +inf outside the strict interior."""
        f0 = self.objective(y, 0)
        if not np.isfinite(f0):
            return math.inf
        val = t * f0
        x = y[: self.n]
        s = y[self.n] if self.aug else 0.0
        for sc, a in zip(self.prog.smooth, self.a_smooth):
            v = np.atleast_1d(np.asarray(sc.value(x), float))
            if a is not None:
                v = v + a * s
            if not np.all(v < 0):       # also catches nan
                return math.inf
            val -= np.sum(np.log(-v))
        if self.G.shape[0]:
            r = self.h - self.G @ y
            if not np.all(r > 0):
                return math.inf
            val -= np.sum(np.log(r))
        for j in range(len(self.lmis)):
            F = self.lmi_matrix(j, y)
            try:
                L = np.linalg.cholesky(F)
            except np.linalg.LinAlgError:
                return math.inf
            d = np.real(np.diag(L))
            if not np.all(d > 0):
                return math.inf
            val -= 2.0 * np.sum(np.log(d))
        return float(val) if np.isfinite(val) else math.inf

    def derivs(self, y, t):
        nv = self.nvar
        f0, g0, H0 = self.objective(y, 2)
        g = t * g0
        H = np.zeros((nv, nv)) if H0 is None else t * H0
        x = y[: self.n]
        s = y[self.n] if self.aug else 0.0
        for sc, a in zip(self.prog.smooth, self.a_smooth):
            v, J, Hs = sc.full(x)
            v = np.atleast_1d(np.asarray(v, float))
            J = np.atleast_2d(J)
            if self.aug:
                J = np.hstack([J, (np.zeros(v.size) if a is None else np.broadcast_to(a, v.shape))[:, None]])
                if a is not None:
                    v = v + a * s
            w = -1.0 / v
            g += J.T @ w
            H += (J.T * w ** 2) @ J
            if isinstance(Hs, LowRank):
                H[: self.n, : self.n] += (Hs.U.T * (w * Hs.d)) @ Hs.U
            elif Hs is not None:
                H[: self.n, : self.n] += np.tensordot(w, np.asarray(Hs), axes=1)
        if self.G.shape[0]:
            r = self.h - self.G @ y
            g += self.G.T @ (1.0 / r)
            H += (self.G.T * (1.0 / r ** 2)) @ self.G
        for j, lmi in enumerate(self.lmis):
            F = self.lmi_matrix(j, y)
            L = np.linalg.cholesky(F)
            Linv = sla.solve_triangular(L, np.eye(lmi.order), lower=True)
            if lmi.basis is not None:
                Finv = Linv.conj().T @ Linv
                idx = lmi.idx
                g[idx] -= lmi.basis.inner(Finv)
                H[np.ix_(idx, idx)] += lmi.basis.quad(Finv)
                a = self.a_lmi[j]
                if self.aug and a != 0.0:
                    F2 = Finv @ Finv
                    g[self.n] -= a * np.real(np.trace(Finv))
                    cross = a * lmi.basis.inner(F2)
                    H[idx, self.n] += cross
                    H[self.n, idx] += cross
                    H[self.n, self.n] += a * a * np.real(np.vdot(Finv, Finv))
            else:
                idx, Fs = self._lmi_F[j]
                Gm = Linv[None] @ Fs @ Linv.conj().T[None]
                Gf = Gm.reshape(len(idx), -1)
                g[idx] -= np.real(np.einsum("jaa->j", Gm))
                H[np.ix_(idx, idx)] += np.real(Gf @ Gf.conj().T)
        return g, H


def _nullspace(A: np.ndarray, n: int):
    if A.shape[0] == 0:
        return np.eye(n)
    return sla.null_space(A)


def _newton_solve(Hr, gr):
    try:
        c = sla.cho_factor(Hr, check_finite=False)
        return sla.cho_solve(c, -gr, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        pass
    reg = 1e-10 * max(1.0, float(np.max(np.abs(np.diag(Hr)))))
    try:
        c = sla.cho_factor(Hr + reg * np.eye(Hr.shape[0]), check_finite=False)
        return sla.cho_solve(c, -gr, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        return None


@dataclass
class _RunOut:
    y: np.ndarray
    status: Status
    iterations: int
    gap: float
    history: list


def _barrier_method(bar: _Barrier, y0: np.ndarray, N: np.ndarray, tol: float,
                    stop: Optional[Callable[[np.ndarray], bool]] = None,
                    mu: float = 10.0, max_newton: int = 600, max_center: int = 60,
                    rel_gap: bool = True, center_tol: float = 1e-9) -> _RunOut:
    y = y0.copy()
    bar.set_rows(y0[: bar.n])
    m = max(bar.m, 1)
    if not np.isfinite(bar.value(y, 1.0)):
        return _RunOut(y, Status.NUMERICAL_FAILURE, 0, math.inf, [])
    f0 = bar.objective(y, 0)
    t = m / max(abs(f0), 1e-2)
    t = min(max(t, 1e-3), 1e6)
    iters = 0
    history = []
    # no equality rows: the null-space basis is the identity, skip the products
    ident = N.shape[0] == N.shape[1] and np.array_equal(N, np.eye(N.shape[0]))
    while True:
        # centering
        val = None
        for _ in range(max_center):
            g, H = bar.derivs(y, t)
            gr = g if ident else N.T @ g
            Hr = H if ident else N.T @ H @ N
            dz = _newton_solve(Hr, gr)
            if dz is None or not np.all(np.isfinite(dz)):
                return _RunOut(y, Status.NUMERICAL_FAILURE, iters, m / t, history)
            lam2 = float(-gr @ dz)
            iters += 1
            if lam2 / 2.0 <= center_tol or lam2 < 0:
                break
            dy = dz if ident else N @ dz
            if val is None:
                val = bar.value(y, t)
            slope = float(g @ dy)
            step = bar.max_linear_step(y, dy)
            while True:
                v = bar.value(y + step * dy, t)
                if v <= val + 0.01 * step * slope:
                    break
                step *= 0.5
                if step < 1e-14:
                    break
            if step < 1e-14:
                break
            y = y + step * dy
            val = v
            if iters >= max_newton:
                return _RunOut(y, Status.MAX_ITERATIONS, iters, m / t, history)
        fval = bar.objective(y, 0)
        history.append(float(fval))
        if stop is not None and stop(y):
            return _RunOut(y, Status.OPTIMAL, iters, m / t, history)
        gap = m / t
        scale = (1.0 + abs(fval)) if rel_gap else 1.0
        if gap <= tol * scale:
            return _RunOut(y, Status.OPTIMAL, iters, gap, history)
        if iters >= max_newton:
            return _RunOut(y, Status.MAX_ITERATIONS, iters, gap, history)
        t *= mu


def _phase1(prog: ConeProgram, x0: np.ndarray, N: np.ndarray, tol: float):
    """Find a strictly feasible point, or report the smallest achievable violation."""
    x = x0
    viol_smooth, a_smooth = [], []
    for sc in prog.smooth:
        v = np.atleast_1d(np.asarray(sc.value(x), float))
        bad = ~(v < 0)
        a_smooth.append(np.where(bad, -1.0, 0.0))
        viol_smooth.append(np.where(np.isfinite(v), v, np.inf)[bad])
    r = prog.G @ x - prog.h
    a_G = np.where(r >= 0, -1.0, 0.0)
    a_lmi, viol_lmi = [], []
    for lmi in prog.lmis:
        F = lmi.matrix(x)
        lam = np.linalg.eigvalsh(0.5 * (F + F.conj().T))[0]
        if lam > 0:
            a_lmi.append(0.0)
        else:
            if lmi.domain:
                raise ValueError(f"start point is outside the PSD block {lmi.name!r}")
            a_lmi.append(1.0)
            viol_lmi.append(-lam)
    viols = [float(np.max(v)) for v in viol_smooth if v.size] + \
        ([float(np.max(r[r >= 0]))] if np.any(r >= 0) else []) + viol_lmi
    if any(not np.isfinite(v) for v in viols):
        raise ValueError("phase I start point is outside the domain of a constraint")
    vmax = max(viols)
    s0 = vmax + max(1.0, abs(vmax))
    floor = -max(1.0, abs(s0))
    extra = (np.concatenate([np.zeros(prog.n), [-1.0]])[None, :], np.array([-floor]))
    # a large ball around the start keeps the phase-I barrier bounded below
    R2 = (1e4 * max(1.0, float(np.linalg.norm(x)))) ** 2
    x_c = x.copy()
    ball = SmoothConstraint(
        lambda z: np.array([np.sum((z - x_c) ** 2) - R2]),
        lambda z: (np.array([np.sum((z - x_c) ** 2) - R2]), 2.0 * (z - x_c)[None, :],
                   2.0 * np.eye(z.size)[None]), margin=False, name="phase1-ball")
    prog1 = ConeProgram(prog.n, None, None, list(prog.smooth) + [ball], prog.G, prog.h,
                        prog.G_margin, prog.A, prog.b, prog.lmis)
    bar = _Barrier(prog1, {"s_obj": 1.0, "smooth": a_smooth + [None], "G": a_G, "lmi": a_lmi,
                           "extra_rows": extra})
    y0 = np.concatenate([x, [s0]])
    Na = sla.block_diag(N, np.ones((1, 1)))
    out = _barrier_method(bar, y0, Na, tol=min(tol, 1e-9), stop=lambda y: y[-1] < 0.0, rel_gap=False)
    return out.y[: prog.n], float(out.y[-1]), out


def solve_cone_program(prog: ConeProgram, warm_start: Optional[np.ndarray] = None,
                       tol: float = 1e-7, max_newton: int = 600) -> SolveResult:
    """Phase I (if needed) followed by the barrier path-following method."""
    x0 = warm_start if warm_start is not None else prog.x0
    x0 = np.zeros(prog.n) if x0 is None else np.asarray(x0, float).copy()
    N = _nullspace(prog.A, prog.n)
    if prog.A.shape[0]:
        x0 = x0 - np.linalg.lstsq(prog.A, prog.A @ x0 - prog.b, rcond=None)[0]
    iters = 0
    bar = _Barrier(prog)
    if not np.isfinite(bar.value(x0, 0.0)):
        try:
            x1, s, out1 = _phase1(prog, x0, N, tol)
        except ValueError:
            return SolveResult(Status.NUMERICAL_FAILURE, x0, prog.objective_value(x0),
                               prog.violation(x0), 0)
        iters += out1.iterations
        if not s < 0 or not np.isfinite(bar.value(x1, 0.0)):
            st = Status.INFEASIBLE if out1.status in (Status.OPTIMAL, Status.MAX_ITERATIONS) \
                else out1.status
            return SolveResult(st, x1, prog.objective_value(x1), prog.violation(x1), iters,
                               margin=-s)
        x0 = x1
    if N.shape[1] == 0:
        return SolveResult(Status.OPTIMAL, x0, prog.objective_value(x0), prog.violation(x0), iters, 0.0)
    out = _barrier_method(bar, x0, N, tol, max_newton=max_newton)
    x = out.y
    return SolveResult(out.status, x, prog.objective_value(x), prog.violation(x),
                       iters + out.iterations, out.gap, history=out.history)


def max_margin_feasibility(prog: ConeProgram, warm_start: Optional[np.ndarray] = None,
                           tol: float = 1e-7, s_max: Optional[float] = None) -> SolveResult:
    """Maximize s subject to every margin-flagged constraint holding with slack s.

    Smooth rows become f(x) + s <= 0, flagged linear rows G x + s <= h, flagged
    LMIs F(x) - s I >= 0.  ``result.margin`` is the optimal s; s >= 0
    certifies feasibility of the original constraints.
    """
    x0 = warm_start if warm_start is not None else prog.x0
    x0 = np.zeros(prog.n) if x0 is None else np.asarray(x0, float).copy()
    N = _nullspace(prog.A, prog.n)
    if prog.A.shape[0]:
        x0 = x0 - np.linalg.lstsq(prog.A, prog.A @ x0 - prog.b, rcond=None)[0]
    a_smooth = [np.full(np.atleast_1d(sc.value(x0)).size, 1.0 if sc.margin else 0.0)
                for sc in prog.smooth]
    a_G = np.where(prog.G_margin, 1.0, 0.0)
    a_lmi = [-1.0 if lmi.margin else 0.0 for lmi in prog.lmis]
    # starting slack: the smallest margin at x0, minus one
    margins = []
    for sc, a in zip(prog.smooth, a_smooth):
        v = np.atleast_1d(np.asarray(sc.value(x0), float))
        if np.any(a > 0):
            margins.append(float(np.min(-v[a > 0])))
    if prog.G.shape[0] and np.any(prog.G_margin):
        margins.append(float(np.min((prog.h - prog.G @ x0)[prog.G_margin])))
    for lmi in prog.lmis:
        if lmi.margin:
            F = lmi.matrix(x0)
            margins.append(float(np.linalg.eigvalsh(0.5 * (F + F.conj().T))[0]))
    if not margins or not all(np.isfinite(margins)):
        raise ValueError("max-margin problem needs finite margin constraints at the start point")
    s0 = min(margins) - max(1.0, 0.1 * abs(min(margins)))
    extra = None
    if s_max is not None:
        extra = (np.concatenate([np.zeros(prog.n), [1.0]])[None, :], np.array([float(s_max)]))
        s0 = min(s0, s_max - 1.0)
    bar = _Barrier(prog, {"s_obj": -1.0, "smooth": a_smooth, "G": a_G, "lmi": a_lmi,
                          "extra_rows": extra})
    y0 = np.concatenate([x0, [s0]])
    if not np.isfinite(bar.value(y0, 1.0)):
        return SolveResult(Status.NUMERICAL_FAILURE, x0, 0.0, prog.violation(x0), 0, margin=s0)
    Na = sla.block_diag(N, np.ones((1, 1)))
    out = _barrier_method(bar, y0, Na, tol)
    x, s = out.y[: prog.n], float(out.y[-1])
    return SolveResult(out.status, x, -s, prog.violation(x) if s >= 0 else 0.0,
                       out.iterations, out.gap, margin=s, history=out.history)
