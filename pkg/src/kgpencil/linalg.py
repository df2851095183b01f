"""Dense and tridiagonal symmetric linear-algebra kernels.

Everything here works on :class:`SymMatrix`, which is either a full
symmetric matrix (built from its lower triangle) or a symmetric tridiagonal
matrix stored as two diagonals. The tridiagonal kernels are compiled with
numba because the radial pipeline calls them thousands of times on grids
with several thousand points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit
from scipy.linalg import solve_triangular

__all__ = [
    "LinAlgError",
    "ConvergenceError",
    "StagnationError",
    "SingularMatrixError",
    "NotSPDError",
    "SymMatrix",
    "Inertia",
    "LDLFactorization",
    "tridiag_eigen",
    "householder_tridiagonalize",
    "sym_eigen",
    "ldlt_inertia",
    "solve_with_factor",
    "inverse_iteration",
    "largest_sym_eigenvalue",
    "sym_sqrt_and_invsqrt",
    "count_below",
    "extreme_eigenvalue",
]

ZERO_PIVOT_RTOL = 1e-14
SWEEP_CAP = 50
_BK_ALPHA = (1.0 + math.sqrt(17.0)) / 8.0
_BUNCH_ALPHA = (math.sqrt(5.0) - 1.0) / 2.0


class LinAlgError(Exception):
    pass


class ConvergenceError(LinAlgError):
    pass


class StagnationError(ConvergenceError):
    pass


class SingularMatrixError(LinAlgError):
    pass


class NotSPDError(LinAlgError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class SymMatrix:
    """Real symmetric matrix, either ``"full"`` or ``"tridiagonal"``.

    Full matrices are symmetrized from the lower triangle on construction,
    so symmetry holds exactly. Tridiagonal matrices keep only the diagonal
    ``d`` and the off-diagonal ``e`` (``e[i]`` couples rows ``i`` and
    ``i + 1``). Instances are immutable.
    """

    __slots__ = ("kind", "d", "e", "a")

    def __init__(self, kind: str, *, d=None, e=None, a=None):
        if kind == "tridiagonal":
            d = np.atleast_1d(np.asarray(d, dtype=float))
            e = np.zeros(0) if e is None else np.atleast_1d(np.asarray(e, dtype=float))
            if d.ndim != 1 or d.size < 1:
                raise ValueError("tridiagonal matrix needs a nonempty diagonal")
            if e.size != d.size - 1:
                raise ValueError(f"off-diagonal length {e.size} != {d.size - 1}")
            object.__setattr__(self, "d", _frozen(d))
            object.__setattr__(self, "e", _frozen(e))
            object.__setattr__(self, "a", None)
        elif kind == "full":
            a = np.asarray(a, dtype=float)
            if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
                raise ValueError("full matrix must be square and nonempty")
            low = np.tril(a)
            object.__setattr__(self, "a", _frozen(low + np.tril(low, -1).T))
            object.__setattr__(self, "d", None)
            object.__setattr__(self, "e", None)
        else:
            raise ValueError(f"unknown kind {kind!r}")
        object.__setattr__(self, "kind", kind)

    def __setattr__(self, name, value):
        raise AttributeError("SymMatrix is immutable")

    # constructors -----------------------------------------------------
    @classmethod
    def from_dense(cls, a) -> "SymMatrix":
        return cls("full", a=a)

    @classmethod
    def tridiagonal(cls, d, e) -> "SymMatrix":
        return cls("tridiagonal", d=d, e=e)

    @classmethod
    def diagonal(cls, d) -> "SymMatrix":
        d = np.atleast_1d(np.asarray(d, dtype=float))
        return cls("tridiagonal", d=d, e=np.zeros(d.size - 1))

    @classmethod
    def identity(cls, n: int) -> "SymMatrix":
        return cls.diagonal(np.ones(n))

    # queries ------------------------------------------------------------
    @property
    def n(self) -> int:
        return self.d.size if self.kind == "tridiagonal" else self.a.shape[0]

    @property
    def is_diagonal(self) -> bool:
        if self.kind == "tridiagonal":
            return not np.any(self.e)
        return not np.any(self.a - np.diag(np.diag(self.a)))

    def diag(self) -> np.ndarray:
        return self.d.copy() if self.kind == "tridiagonal" else np.diag(self.a).copy()

    def to_dense(self) -> np.ndarray:
        if self.kind == "full":
            return self.a.copy()
        out = np.diag(self.d)
        if self.e.size:
            idx = np.arange(self.e.size)
            out[idx + 1, idx] = self.e
            out[idx, idx + 1] = self.e
        return out

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "full":
            return self.a @ x
        y = self.d * x if x.ndim == 1 else self.d[:, None] * x
        if self.e.size:
            e = self.e if x.ndim == 1 else self.e[:, None]
            y[:-1] += e * x[1:]
            y[1:] += e * x[:-1]
        return y

    def quad(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.matvec(x))

    def norm_inf(self) -> float:
        if self.kind == "full":
            return float(np.max(np.sum(np.abs(self.a), axis=1)))
        row = np.abs(self.d).copy()
        row[:-1] += np.abs(self.e)
        row[1:] += np.abs(self.e)
        return float(np.max(row))

    def max_abs(self) -> float:
        if self.kind == "full":
            return float(np.max(np.abs(self.a)))
        m = float(np.max(np.abs(self.d)))
        return max(m, float(np.max(np.abs(self.e)))) if self.e.size else m

    # arithmetic ---------------------------------------------------------
    def _combine(self, other: "SymMatrix", alpha: float, beta: float) -> "SymMatrix":
        if self.n != other.n:
            raise ValueError(f"dimension mismatch {self.n} != {other.n}")
        if self.kind == other.kind == "tridiagonal":
            return SymMatrix.tridiagonal(alpha * self.d + beta * other.d, alpha * self.e + beta * other.e)
        return SymMatrix.from_dense(alpha * self.to_dense() + beta * other.to_dense())

    def __add__(self, other: "SymMatrix") -> "SymMatrix":
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other: "SymMatrix") -> "SymMatrix":
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, s: float) -> "SymMatrix":
        s = float(s)
        if self.kind == "tridiagonal":
            return SymMatrix.tridiagonal(s * self.d, s * self.e)
        return SymMatrix.from_dense(s * self.a)

    __rmul__ = __mul__

    def __neg__(self) -> "SymMatrix":
        return self * -1.0

    def shift(self, s: float) -> "SymMatrix":
        """Return ``self - s * I``."""
        if self.kind == "tridiagonal":
            return SymMatrix.tridiagonal(self.d - s, self.e)
        return SymMatrix.from_dense(self.a - s * np.eye(self.n))

    def square(self) -> "SymMatrix":
        """Return ``self @ self``; stays tridiagonal only for diagonal input."""
        if self.kind == "tridiagonal" and self.is_diagonal:
            return SymMatrix.diagonal(self.d**2)
        a = self.to_dense()
        return SymMatrix.from_dense(a @ a)

    def __repr__(self) -> str:
        return f"SymMatrix(kind={self.kind!r}, n={self.n})"


@dataclass(frozen=True)
class Inertia:
    n_neg: int
    n_zero: int
    n_pos: int

    def __post_init__(self):
        if min(self.n_neg, self.n_zero, self.n_pos) < 0:
            raise ValueError("inertia counts must be nonnegative")

    @property
    def n(self) -> int:
        return self.n_neg + self.n_zero + self.n_pos

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.n_neg, self.n_zero, self.n_pos)


# ---------------------------------------------------------------------------
# tridiagonal eigensolver


@njit(cache=True)
def _tql_implicit(d, e, z, want_vectors, cap):
    # d, e modified in place; e[i] couples i and i+1, e[n-1] must be 0
    n = d.size
    eps = 2.220446049250313e-16
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            if it == cap:
                return l
            it += 1
            # Wilkinson shift from the leading 2x2 block
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if want_vectors:
                    for k in range(z.shape[0]):
                        f = z[k, i + 1]
                        z[k, i + 1] = s * z[k, i] + c * f
                        z[k, i] = c * z[k, i] - s * f
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1


def tridiag_eigen(d, e, vectors: bool = False):
    """Eigenvalues (ascending) of the symmetric tridiagonal ``(d, e)``.

    Implicit QL with Wilkinson shifts. With ``vectors=True`` returns
    ``(w, Z)`` with orthonormal eigenvector columns; otherwise just ``w``.
    Raises :class:`ConvergenceError` after ``SWEEP_CAP`` sweeps on one
    eigenvalue.
    """
    d = np.array(d, dtype=float, ndmin=1)
    e = np.array(e, dtype=float, ndmin=1) if np.size(e) else np.zeros(0)
    n = d.size
    if e.size != n - 1:
        raise ValueError(f"off-diagonal length {e.size} != {n - 1}")
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(e))):
        raise ValueError("non-finite matrix entries")
    ework = np.zeros(n)
    ework[: n - 1] = e
    z = np.eye(n) if vectors else np.zeros((0, 0))
    fail = _tql_implicit(d, ework, z, vectors, SWEEP_CAP)
    if fail >= 0:
        raise ConvergenceError(f"QL iteration did not converge for eigenvalue {fail}")
    order = np.argsort(d, kind="stable")
    if vectors:
        return d[order], z[:, order]
    return d[order]


def householder_tridiagonalize(a):
    """Reduce a dense symmetric matrix to tridiagonal form.

    Returns ``(d, e, Q)`` with ``Q.T @ a @ Q`` tridiagonal.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    q = np.eye(n)
    for k in range(n - 2):
        x = a[k + 1 :, k]
        nx = np.linalg.norm(x)
        if nx == 0.0:
            continue
        alpha = -math.copysign(nx, x[0])
        v = x.copy()
        v[0] -= alpha
        nv = np.linalg.norm(v)
        if nv == 0.0:
            continue
        v /= nv
        a[k + 1 :, k:] -= 2.0 * np.outer(v, v @ a[k + 1 :, k:])
        a[k:, k + 1 :] -= 2.0 * np.outer(a[k:, k + 1 :] @ v, v)
        q[:, k + 1 :] -= 2.0 * np.outer(q[:, k + 1 :] @ v, v)
    return np.diag(a).copy(), np.diag(a, -1).copy(), q


@njit(cache=True)
def _sturm_count(d, e, s, pivmin):
    q = d[0] - s
    if abs(q) < pivmin:
        q = -pivmin
    c = 1 if q < 0.0 else 0
    for i in range(1, d.size):
        q = d[i] - s - e[i - 1] * e[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0.0:
            c += 1
    return c


def count_below(A: SymMatrix, s: float) -> int:
    """Number of eigenvalues of ``A`` strictly below ``s`` (to rounding)."""
    if A.kind == "tridiagonal":
        e = A.e if A.e.size else np.zeros(0)
        pivmin = np.finfo(float).tiny * max(1.0, float(np.max(e * e)) if e.size else 1.0)
        return int(_sturm_count(A.d, e, float(s), pivmin))
    return ldlt_inertia(A.shift(s)).inertia.n_neg


def extreme_eigenvalue(A: SymMatrix, which: str = "min") -> float:
    """Smallest (``"min"``) or largest (``"max"``) eigenvalue of ``A``.

    Tridiagonal matrices use Sturm bisection to an absolute accuracy of
    ``2 eps ||A||_inf``; full matrices go through :func:`sym_eigen`.
    """
    if which not in ("min", "max"):
        raise ValueError("which must be 'min' or 'max'")
    if A.kind == "full":
        w = sym_eigen(A)
        return float(w[0] if which == "min" else w[-1])
    if which == "max":
        return -extreme_eigenvalue(-A, "min")
    r = np.zeros(A.n)
    if A.e.size:
        r[:-1] += np.abs(A.e)
        r[1:] += np.abs(A.e)
    lo, hi = float(np.min(A.d - r)), float(np.max(A.d + r))
    tol = 2.0 * np.finfo(float).eps * max(A.norm_inf(), np.finfo(float).tiny)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if count_below(A, mid) >= 1:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def sym_eigen(A: SymMatrix, vectors: bool = False):
    """All eigenvalues (and optionally vectors) of a :class:`SymMatrix`."""
    if A.kind == "tridiagonal":
        return tridiag_eigen(A.d, A.e, vectors)
    d, e, q = householder_tridiagonalize(A.a)
    if not vectors:
        return tridiag_eigen(d, e)
    w, z = tridiag_eigen(d, e, True)
    return w, q @ z


# ---------------------------------------------------------------------------
# LDL^T with symmetric pivoting


@njit(cache=True)
def _tri_ldl(d, e, sigma, alpha, thr):
    # Bunch's pivoting for tridiagonal matrices: no row exchanges needed.
    n = d.size
    bsize = np.zeros(n, dtype=np.int64)
    da = np.zeros(n)  # 1x1 pivot, or (0,0) of a 2x2 block
    db = np.zeros(n)  # (1,0) of a 2x2 block
    dc = np.zeros(n)  # (1,1) of a 2x2 block
    l1 = np.zeros(n)  # L[k+1, k] after a 1x1 pivot at k
    l2a = np.zeros(n)  # L[k+2, k] after a 2x2 pivot at k
    l2b = np.zeros(n)  # L[k+2, k+1]
    n_neg = 0
    n_zero = 0
    logdet = 0.0
    sign = 1.0
    a = d[0]
    k = 0
    while k < n:
        b = e[k] if k < n - 1 else 0.0
        if k == n - 1 or abs(a) * sigma >= alpha * b * b:
            bsize[k] = 1
            da[k] = a
            if abs(a) <= thr:
                n_zero += 1
                sign = 0.0
            else:
                logdet += math.log(abs(a))
                if a < 0.0:
                    n_neg += 1
                    sign = -sign
            if k < n - 1:
                if a != 0.0:
                    l1[k] = b / a
                    a = d[k + 1] - b * l1[k]
                else:
                    a = d[k + 1]
            k += 1
        else:
            c2 = d[k + 1]
            bsize[k] = 2
            da[k] = a
            db[k] = b
            dc[k] = c2
            det = a * c2 - b * b
            tr = a + c2
            disc = math.sqrt(0.25 * (a - c2) ** 2 + b * b)
            lam1 = 0.5 * tr - disc
            lam2 = 0.5 * tr + disc
            for lam in (lam1, lam2):
                if abs(lam) <= thr:
                    n_zero += 1
                elif lam < 0.0:
                    n_neg += 1
            if abs(lam1) <= thr or abs(lam2) <= thr:
                sign = 0.0
            else:
                logdet += math.log(abs(det))
                if det < 0.0:
                    sign = -sign
            if k + 2 < n:
                c = e[k + 1]
                l2a[k] = -c * b / det
                l2b[k] = c * a / det
                a = d[k + 2] - c * c * a / det
            k += 2
    return bsize, da, db, dc, l1, l2a, l2b, n_neg, n_zero, logdet, sign


@njit(cache=True)
def _tri_ldl_solve(bsize, da, db, dc, l1, l2a, l2b, rhs):
    n = rhs.size
    y = rhs.copy()
    # forward: L y = b
    k = 0
    while k < n:
        if bsize[k] == 1:
            if k + 1 < n:
                y[k + 1] -= l1[k] * y[k]
            k += 1
        else:
            if k + 2 < n:
                y[k + 2] -= l2a[k] * y[k] + l2b[k] * y[k + 1]
            k += 2
    # block diagonal
    k = 0
    while k < n:
        if bsize[k] == 1:
            y[k] = y[k] / da[k]
            k += 1
        else:
            det = da[k] * dc[k] - db[k] * db[k]
            y0 = (dc[k] * y[k] - db[k] * y[k + 1]) / det
            y1 = (da[k] * y[k + 1] - db[k] * y[k]) / det
            y[k] = y0
            y[k + 1] = y1
            k += 2
    # backward: L^T x = y
    k = n - 1
    while k >= 0:
        # find the block that ends at k
        if k >= 1 and bsize[k] == 0:
            s = k - 1  # 2x2 block starting at s
            if s + 2 < n:
                y[s] -= l2a[s] * y[s + 2]
                y[s + 1] -= l2b[s] * y[s + 2]
            k -= 2
        else:
            if k + 1 < n:
                y[k] -= l1[k] * y[k + 1]
            k -= 1
    return y


@njit(cache=True)
def _dense_bk(a, thr, alpha):
    # Bunch-Kaufman on a copy of ``a``; bsize[k] is 1 or 2 at the start of a
    # pivot block and 0 for the second row of a 2x2 block.
    a = a.copy()
    n = a.shape[0]
    perm = np.arange(n)
    L = np.eye(n)
    bsize = np.zeros(n, dtype=np.int64)
    k = 0
    while k < n:
        size, p = 1, k
        if k < n - 1:
            imax, colmax = k + 1, 0.0
            for i in range(k + 1, n):
                if abs(a[i, k]) > colmax:
                    imax, colmax = i, abs(a[i, k])
            akk = abs(a[k, k])
            if not (max(akk, colmax) <= thr or akk >= alpha * colmax):
                rowmax = 0.0
                for j in range(k, n):
                    if j != imax and abs(a[j, imax]) > rowmax:
                        rowmax = abs(a[j, imax])
                if akk * rowmax >= alpha * colmax * colmax:
                    pass
                elif abs(a[imax, imax]) >= alpha * rowmax:
                    p = imax
                else:
                    size, p = 2, imax
        t = k if size == 1 else k + 1
        if p != t:
            for j in range(n):
                a[t, j], a[p, j] = a[p, j], a[t, j]
            for i in range(n):
                a[i, t], a[i, p] = a[i, p], a[i, t]
            perm[t], perm[p] = perm[p], perm[t]
            for j in range(k):
                L[t, j], L[p, j] = L[p, j], L[t, j]
        bsize[k] = size
        if size == 1:
            dkk = a[k, k]
            if abs(dkk) > thr:
                for i in range(k + 1, n):
                    L[i, k] = a[i, k] / dkk
                for i in range(k + 1, n):
                    for j in range(k + 1, n):
                        a[i, j] -= L[i, k] * a[j, k]
        else:
            d11, d21, d22 = a[k, k], a[k + 1, k], a[k + 1, k + 1]
            det = d11 * d22 - d21 * d21
            for i in range(k + 2, n):
                w1, w2 = a[i, k], a[i, k + 1]
                L[i, k] = (w1 * d22 - w2 * d21) / det
                L[i, k + 1] = (w2 * d11 - w1 * d21) / det
            for i in range(k + 2, n):
                for j in range(k + 2, n):
                    a[i, j] -= L[i, k] * a[j, k] + L[i, k + 1] * a[j, k + 1]
        k += size
    D = np.zeros((n, n))
    k = 0
    while k < n:
        D[k, k] = a[k, k]
        if bsize[k] == 2:
            off = 0.5 * (a[k + 1, k] + a[k, k + 1])
            D[k + 1, k] = off
            D[k, k + 1] = off
            D[k + 1, k + 1] = a[k + 1, k + 1]
        k += bsize[k]
    return perm, L, D, bsize


def _dense_bunch_kaufman(a: np.ndarray, thr: float):
    perm, L, D, bsize = _dense_bk(np.ascontiguousarray(a, dtype=float), float(thr), _BK_ALPHA)
    blocks = [(int(k), int(bsize[k])) for k in np.flatnonzero(bsize)]
    return perm, L, D, blocks


@dataclass(frozen=True)
class LDLFactorization:
    """Result of :func:`ldlt_inertia`; reusable for solves."""

    matrix: SymMatrix
    inertia: Inertia
    logabsdet: float
    det_sign: float
    threshold: float
    _data: tuple

    @property
    def singular(self) -> bool:
        return self.inertia.n_zero > 0

    def solve(self, b, refine: bool = True) -> np.ndarray:
        return solve_with_factor(self, b, refine=refine)


def ldlt_inertia(A: SymMatrix, zero_tol: float | None = None) -> LDLFactorization:
    """Symmetric-pivoted LDL^T factorization and the inertia of ``A``.

    Pivot blocks whose magnitude is below ``zero_tol`` (default
    ``1e-14 * ||A||_inf``) count as zero eigenvalues.
    """
    scale = A.norm_inf()
    thr = ZERO_PIVOT_RTOL * scale if zero_tol is None else zero_tol
    if A.kind == "tridiagonal":
        e = A.e if A.e.size else np.zeros(0)
        sigma = A.max_abs()
        out = _tri_ldl(A.d, e, sigma, _BUNCH_ALPHA, thr)
        n_neg, n_zero, logdet, sign = out[7], out[8], out[9], out[10]
        inertia = Inertia(int(n_neg), int(n_zero), A.n - int(n_neg) - int(n_zero))
        if n_zero:
            logdet, sign = -math.inf, 0.0
        return LDLFactorization(A, inertia, float(logdet), float(sign), thr, ("tri",) + tuple(out[:7]))

    perm, L, D, blocks = _dense_bunch_kaufman(A.a, thr)
    n_neg = n_zero = 0
    logdet, sign = 0.0, 1.0
    for s, size in blocks:
        blk = D[s : s + size, s : s + size]
        ev = np.linalg.eigvalsh(blk) if size == 2 else blk[0]
        for lam in np.atleast_1d(ev):
            if abs(lam) <= thr:
                n_zero += 1
            elif lam < 0:
                n_neg += 1
        det = float(np.linalg.det(blk)) if size == 2 else float(blk[0, 0])
        if det == 0.0 or any(abs(x) <= thr for x in np.atleast_1d(ev)):
            sign = 0.0
        else:
            logdet += math.log(abs(det))
            sign *= math.copysign(1.0, det)
    if n_zero:
        logdet, sign = -math.inf, 0.0
    inertia = Inertia(n_neg, n_zero, A.n - n_neg - n_zero)
    return LDLFactorization(A, inertia, logdet, sign, thr, ("full", perm, L, D, tuple(blocks)))


def _raw_solve(f: LDLFactorization, b: np.ndarray) -> np.ndarray:
    if f._data[0] == "tri":
        bsize, da, db, dc, l1, l2a, l2b = f._data[1:]
        return _tri_ldl_solve(bsize, da, db, dc, l1, l2a, l2b, b)
    _, perm, L, D, blocks = f._data
    y = _unit_lower_solve(L, b[perm])
    z = np.empty_like(y)
    for s, size in blocks:
        z[s : s + size] = np.linalg.solve(D[s : s + size, s : s + size], y[s : s + size])
    x = _unit_lower_solve(L, z, transpose=True)
    out = np.empty_like(x)
    out[perm] = x
    return out


def _unit_lower_solve(L: np.ndarray, b: np.ndarray, transpose: bool = False) -> np.ndarray:
    if transpose:
        return solve_triangular(L.T, b, lower=False, unit_diagonal=True)
    return solve_triangular(L, b, lower=True, unit_diagonal=True)


def solve_with_factor(handle: LDLFactorization, b, refine: bool = True) -> np.ndarray:
    """Solve ``A x = b`` with a factorization from :func:`ldlt_inertia`.

    One step of iterative refinement is applied by default.
    """
    if handle.singular:
        raise SingularMatrixError("factorization has a zero pivot block")
    b = np.asarray(b, dtype=float)
    if b.shape != (handle.matrix.n,):
        raise ValueError(f"right-hand side must have shape ({handle.matrix.n},)")
    x = _raw_solve(handle, b)
    if refine:
        r = b - handle.matrix.matvec(x)
        x = x + _raw_solve(handle, r)
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("solve produced non-finite values")
    return x


# ---------------------------------------------------------------------------
# iterative eigen-solvers


def inverse_iteration(A: SymMatrix, shift: float, start, tol: float = 1e-12, max_iter: int = 50):
    """Shifted inverse iteration; returns ``(x, mu)`` with ``||x|| = 1``.

    ``mu`` is the Rayleigh quotient of the final iterate; convergence means
    ``||A x - mu x|| <= tol * ||A||_inf``. Raises :class:`StagnationError`
    when that is not reached in ``max_iter`` steps (e.g. a shift exactly
    between two eigenvalues).
    """
    scale = max(A.norm_inf(), np.finfo(float).tiny)
    x = np.asarray(start, dtype=float).copy()
    nx = np.linalg.norm(x)
    if nx == 0.0:
        raise ValueError("start vector must be nonzero")
    x /= nx

    def converged(v):
        av = A.matvec(v)
        mu = float(v @ av)
        return np.linalg.norm(av - mu * v) <= tol * scale, mu

    ok, mu = converged(x)
    if ok:
        return x, mu
    s = float(shift)
    f = ldlt_inertia(A.shift(s))
    jitter = 0
    while f.singular:
        # shift sits on an eigenvalue to working precision
        jitter += 1
        s = float(shift) + jitter * 64.0 * np.finfo(float).eps * scale
        f = ldlt_inertia(A.shift(s))
    for _ in range(max_iter):
        y = _raw_solve(f, x)
        ny = np.linalg.norm(y)
        if not np.isfinite(ny) or ny == 0.0:
            raise StagnationError("inverse iteration produced a degenerate iterate")
        x = y / ny
        ok, mu = converged(x)
        if ok:
            return x, mu
    raise StagnationError(f"inverse iteration did not converge in {max_iter} steps")


def largest_sym_eigenvalue(
    apply: Callable[[np.ndarray], np.ndarray],
    n: int,
    tol: float = 1e-12,
    max_iter: int | None = None,
    seed: int = 42,
) -> float:
    """Largest eigenvalue of a symmetric positive-semidefinite action.

    Lanczos with full reorthogonalization; the Ritz value is accepted once
    its residual bound drops below ``tol`` relative.
    """
    max_iter = min(n, 300) if max_iter is None else max_iter
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    Q = np.zeros((n, max_iter + 1))
    Q[:, 0] = q
    alphas: list[float] = []
    betas: list[float] = []
    theta = 0.0
    for j in range(max_iter):
        w = np.asarray(apply(Q[:, j]), dtype=float)
        alpha = float(Q[:, j] @ w)
        w = w - Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
        w = w - Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
        beta = float(np.linalg.norm(w))
        alphas.append(alpha)
        ev, vec = tridiag_eigen(np.array(alphas), np.array(betas), vectors=True)
        theta = float(ev[-1])
        bound = beta * abs(vec[-1, -1])
        if bound <= tol * max(abs(theta), np.finfo(float).tiny) or j + 1 == n or beta == 0.0:
            return theta
        betas.append(beta)
        Q[:, j + 1] = w / beta
    raise ConvergenceError(f"Lanczos did not converge in {max_iter} steps (last estimate {theta})")


def sym_sqrt_and_invsqrt(A: SymMatrix):
    """Return dense ``(A^{1/2}, A^{-1/2})`` of an SPD matrix."""
    w, z = sym_eigen(A, vectors=True)
    scale = A.norm_inf()
    if w[0] <= 1e-12 * scale:
        raise NotSPDError(f"matrix is not SPD (lambda_min = {w[0]:.3e})")
    r = np.sqrt(w)
    return (z * r) @ z.T, (z / r) @ z.T
