"""Dense Hermitian helpers shared by the solver and the SDR tools."""

from __future__ import annotations

import numpy as np


def hermitize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().T)


def hermitian_eig(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and the matching orthonormal eigenvectors."""
    A = np.asarray(A)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    lam, Q = np.linalg.eigh(hermitize(A))
    return lam[::-1].copy(), Q[:, ::-1].copy()


def psd_sqrt_factor(X: np.ndarray) -> np.ndarray:
    """Q diag(sqrt(max(lam, 0))) so that X ~ F F^H."""
    lam, Q = hermitian_eig(X)
    return Q * np.sqrt(np.maximum(lam, 0.0))[None, :]


class HermitianBasis:
    """Real parameterization of n x n Hermitian matrices.

    Parameters are ordered as the diagonal (unless ``fixed_diag``), then one
    (real, imag) pair per strict upper-triangular entry in row-major order.
    With ``fixed_diag`` the diagonal is not a parameter and ``to_matrix``
    produces a zero-diagonal matrix.
    """

    def __init__(self, n: int, fixed_diag: bool = False):
        self.n = n
        self.fixed_diag = fixed_diag
        iu, ju = np.triu_indices(n, 1)
        self.iu, self.ju = iu, ju
        nd = 0 if fixed_diag else n
        self.size = nd + 2 * iu.size
        # each basis element is a sum of at most two elementary matrices
        # coef * E[p, q]; diagonal elements use a zero second term
        p1, q1, c1, p2, q2, c2 = [], [], [], [], [], []
        if not fixed_diag:
            for a in range(n):
                p1.append(a); q1.append(a); c1.append(1.0)
                p2.append(a); q2.append(a); c2.append(0.0)
        for a, b in zip(iu, ju):
            p1.append(a); q1.append(b); c1.append(1.0)
            p2.append(b); q2.append(a); c2.append(1.0)
        for a, b in zip(iu, ju):
            p1.append(a); q1.append(b); c1.append(1j)
            p2.append(b); q2.append(a); c2.append(-1j)
        # re/im of each pair are interleaved in the public ordering
        order = self._public_order(nd, iu.size)
        self.p1, self.q1 = np.array(p1, int)[order], np.array(q1, int)[order]
        self.p2, self.q2 = np.array(p2, int)[order], np.array(q2, int)[order]
        self.c1 = np.array(c1, complex)[order]
        self.c2 = np.array(c2, complex)[order]

    @staticmethod
    def _public_order(nd: int, npair: int) -> np.ndarray:
        idx = list(range(nd))
        for j in range(npair):
            idx += [nd + j, nd + npair + j]
        return np.array(idx, int)

    def to_matrix(self, v: np.ndarray) -> np.ndarray:
        n = self.n
        X = np.zeros((n, n), complex)
        nd = 0 if self.fixed_diag else n
        if nd:
            X[np.arange(n), np.arange(n)] = v[:n]
        z = v[nd::2] + 1j * v[nd + 1::2]
        X[self.iu, self.ju] = z
        X[self.ju, self.iu] = z.conj()
        return X

    def from_matrix(self, X: np.ndarray) -> np.ndarray:
        nd = 0 if self.fixed_diag else self.n
        v = np.empty(self.size)
        if nd:
            v[:nd] = np.real(np.diag(X))
        z = X[self.iu, self.ju]
        v[nd::2] = z.real
        v[nd + 1::2] = z.imag
        return v

    def inner(self, C: np.ndarray) -> np.ndarray:
        """Tr(C B_j) for every basis element (C Hermitian -> real vector)."""
        val = self.c1 * C[self.q1, self.p1] + self.c2 * C[self.q2, self.p2]
        return val.real

    def _quad_plan(self):
        # flat gather indices and coefficients for the four (term, term) blocks
        if getattr(self, "_plan", None) is None:
            n = self.n
            terms = ((self.p1, self.q1, self.c1), (self.p2, self.q2, self.c2))
            plan = []
            for pa, qa, ca in terms:
                for pb, qb, cb in terms:
                    coef = ca[:, None] * cb[None, :]
                    if not np.any(coef):
                        continue
                    plan.append((pa[:, None] + n * qb[None, :], qa[:, None] * n + pb[None, :], coef))
            self._plan = plan
        return self._plan

    def _quad_hermitian(self, P: np.ndarray) -> np.ndarray:
        """quad(P, P) for Hermitian P from two products per pair of entries.

        With B = al E_ab + conj(al) E_ba and B' = ga E_cd + conj(ga) E_dc,
        Tr(P B P B') = 2 Re(al conj(ga) X + al ga Y), X = P[c,a] P[b,d],
        Y = P[d,a] P[b,c]; diagonal elements follow from the same identity.
        """
        a, b = self.iu, self.ju
        nd = 0 if self.fixed_diag else self.n
        X = P[np.ix_(a, a)].T * P[np.ix_(b, b)]
        Pba = P[np.ix_(b, a)]
        Y = Pba.T * Pba
        npair = a.size
        off = np.empty((2 * npair, 2 * npair))
        off[0::2, 0::2] = 2.0 * (X.real + Y.real)
        off[0::2, 1::2] = 2.0 * (X.imag - Y.imag)
        off[1::2, 0::2] = -2.0 * (X.imag + Y.imag)
        off[1::2, 1::2] = 2.0 * (X.real - Y.real)
        if not nd:
            return off
        H = np.empty((self.size, self.size))
        H[nd:, nd:] = off
        H[:nd, :nd] = np.abs(P) ** 2
        # diagonal E_ee against pair (c, d): 2 Re(ga Z), Z = P[d, e] P[e, c]
        Z = P[b, :].T * P[:, a]
        H[:nd, nd::2] = 2.0 * Z.real
        H[:nd, nd + 1::2] = -2.0 * Z.imag
        H[nd:, :nd] = H[:nd, nd:].T
        return H

    def quad(self, P: np.ndarray, Q: np.ndarray | None = None) -> np.ndarray:
        """Re Tr(P B_i Q B_j) for all pairs (the Hessian of -logdet when P = Q = F^-1)."""
        if Q is None:
            return self._quad_hermitian(P)
        Pf, Qf = np.ascontiguousarray(P).ravel(), np.ascontiguousarray(Q).ravel()
        H = np.zeros((self.size, self.size))
        for iP, iQ, coef in self._quad_plan():
            # Tr(P E_{pa qa} Q E_{pb qb}) = P[qb, pa] * Q[qa, pb]
            H += (Pf[iP] * Qf[iQ] * coef).real
        return H
