"""The Klein-Gordon quadratic pencil ``T(lam) = (H0 - V^2) + 2 lam V - lam^2 I``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .linalg import SymMatrix, ldlt_inertia, sym_sqrt_and_invsqrt

__all__ = [
    "NotStronglyDampedAt",
    "KGPencil",
    "RootPair",
    "t_of_lambda",
    "t_prime",
    "t_form",
    "t_form_operator",
    "root_functionals",
    "shift_identity_residual",
    "build_l",
    "factorization_residual",
    "read_matrix_file",
    "write_matrix_file",
    "load_synthetic_pencil",
]

DISCRIMINANT_RTOL = 1e-14


class NotStronglyDampedAt(ValueError):
    """The quadratic ``lam -> (T(lam)x, x)`` has no two distinct real roots.

    ``vector`` is the offending vector and serves as a counterexample.
    """

    def __init__(self, vector, discriminant: float):
        self.vector = np.asarray(vector, dtype=float)
        self.discriminant = float(discriminant)
        super().__init__(f"discriminant {discriminant:.6e} is not positive")


@dataclass(eq=False)
class KGPencil:
    """Symmetric matrix triple ``(H0, V, m)``.

    ``provenance`` is ``"radial"`` for pencils built from a radial sector and
    ``"synthetic"`` otherwise; ``meta`` carries free-form bookkeeping such
    as the angular momentum or the grid.
    """

    H0: SymMatrix
    V: SymMatrix
    m: float
    provenance: str = "synthetic"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.H0.n != self.V.n:
            raise ValueError(f"H0 is {self.H0.n}x{self.H0.n} but V is {self.V.n}x{self.V.n}")
        if not self.m > 0:
            raise ValueError("mass must be positive")
        self.m = float(self.m)
        tol = 1e-10 * self.H0.norm_inf()
        if ldlt_inertia(self.H0.shift(self.m**2 - tol)).inertia.n_neg:
            raise ValueError("H0 violates the lower bound H0 >= m^2")

    @property
    def n(self) -> int:
        return self.H0.n

    @cached_property
    def C(self) -> SymMatrix:
        """Constant coefficient ``H0 - V^2``."""
        return self.H0 - self.V.square()

    @cached_property
    def _sqrt_pair(self):
        return sym_sqrt_and_invsqrt(self.H0)

    @property
    def h0_sqrt(self) -> np.ndarray:
        return self._sqrt_pair[0]

    @property
    def h0_invsqrt(self) -> np.ndarray:
        return self._sqrt_pair[1]

    @cached_property
    def v_norm(self) -> float:
        """Spectral norm of V (exact for diagonal V, else the inf-norm bound)."""
        if self.V.is_diagonal:
            return float(np.max(np.abs(self.V.diag())))
        return self.V.norm_inf()

    @cached_property
    def lambda_cap(self) -> float:
        # every root p+-(x) satisfies |p| <= ||V|| + sqrt(||H0||)
        return 10.0 * (self.v_norm + math.sqrt(self.H0.norm_inf()))

    @cached_property
    def is_irreducible_tridiagonal(self) -> bool:
        """True when every ``T(lam)`` is tridiagonal with no zero off-diagonal."""
        if self.H0.kind != "tridiagonal" or not self.V.is_diagonal:
            return False
        return self.n == 1 or bool(np.all(self.H0.e != 0.0))

    def scale(self, lam: float) -> float:
        """Size of the terms of ``T(lam)``, free of cancellation at eigenvalues."""
        lam = abs(float(lam))
        return max(self.C.norm_inf() + 2 * lam * self.V.norm_inf() + lam * lam, np.finfo(float).tiny)

    def shifted(self, c: float) -> "KGPencil":
        """Pencil with ``V + c``; its spectrum is this one's shifted by ``c``."""
        return KGPencil(self.H0, self.V.shift(-c), self.m, self.provenance, dict(self.meta, shift=c))


@dataclass(frozen=True)
class RootPair:
    p_minus: float
    p_plus: float
    discriminant: float
    mu: float
    c: float


def t_of_lambda(p: KGPencil, lam: float) -> SymMatrix:
    lam = float(lam)
    return p.C + p.V * (2.0 * lam) - SymMatrix.identity(p.n) * (lam * lam)


def t_prime(p: KGPencil, lam: float) -> SymMatrix:
    """Derivative ``T'(lam) = 2 (V - lam I)``."""
    return p.V.shift(lam) * 2.0


def t_form_operator(p: KGPencil, lam: float, x) -> float:
    """``x^T T(lam) x`` through the assembled matrix."""
    return t_of_lambda(p, lam).quad(x)


def t_form(p: KGPencil, lam: float, x) -> float:
    """``||H0^{1/2} x||^2 - ||(V - lam) x||^2`` without assembling ``T(lam)``."""
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise ValueError("form is evaluated at a nonzero vector")
    y = p.V.matvec(x) - lam * x
    return p.H0.quad(x) - float(y @ y)


def root_functionals(p: KGPencil, x) -> RootPair:
    """The two real zeros of ``lam -> (T(lam)x, x)``.

    With ``mu = (Vx, x)/|x|^2`` and ``c = ((H0 - V^2)x, x)/|x|^2`` the roots
    are ``mu -+ sqrt(mu^2 + c)``. Raises :class:`NotStronglyDampedAt` if the
    discriminant is not safely positive.
    """
    x = np.asarray(x, dtype=float)
    nx2 = float(x @ x)
    if nx2 == 0.0:
        raise ValueError("root functionals need a nonzero vector")
    vx = p.V.matvec(x)
    mu = float(x @ vx) / nx2
    c = (p.H0.quad(x) - float(vx @ vx)) / nx2
    disc = mu * mu + c
    if disc <= DISCRIMINANT_RTOL * max(mu * mu, abs(c)):
        raise NotStronglyDampedAt(x, disc)
    # larger-magnitude root first; the other from the product -c
    q = mu + math.copysign(math.sqrt(disc), mu)
    other = -c / q
    lo, hi = (other, q) if q > 0 else (q, other)
    return RootPair(lo, hi, disc, mu, c)


def shift_identity_residual(p: KGPencil, lam: float, mu: float) -> float:
    """``||T(lam) - [T(mu) + 2(lam-mu)(V-mu) - (lam-mu)^2]||_inf``."""
    d = lam - mu
    rhs = t_of_lambda(p, mu) + p.V.shift(mu) * (2.0 * d) - SymMatrix.identity(p.n) * (d * d)
    return (t_of_lambda(p, lam) - rhs).norm_inf()


def build_l(p: KGPencil, lam: float) -> SymMatrix:
    """``L(lam) = I - G^T G`` with ``G = (V - lam) H0^{-1/2}``."""
    g = p.V.shift(lam).to_dense() @ p.h0_invsqrt
    return SymMatrix.from_dense(np.eye(p.n) - g.T @ g)


def factorization_residual(p: KGPencil, lam: float) -> float:
    """Relative residual ``||T - H0^{1/2} L H0^{1/2}|| / ||T||``."""
    T = t_of_lambda(p, lam)
    L = build_l(p, lam).to_dense()
    diff = T.to_dense() - p.h0_sqrt @ L @ p.h0_sqrt
    return float(np.max(np.sum(np.abs(diff), axis=1))) / max(T.norm_inf(), np.finfo(float).tiny)


# ---------------------------------------------------------------------------
# matrix files: dimension header, then the lower triangle row by row


def write_matrix_file(path, A: SymMatrix) -> None:
    a = A.to_dense()
    n = a.shape[0]
    lines = [str(n)]
    for i in range(n):
        lines.append(" ".join(format(v, ".17g") for v in a[i, : i + 1]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_file(path) -> SymMatrix:
    tokens: list[str] = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens:
        raise ValueError(f"{path}: empty matrix file")
    try:
        n = int(tokens[0])
        vals = [float(t) for t in tokens[1:]]
    except ValueError as exc:
        raise ValueError(f"{path}: malformed matrix file ({exc})") from None
    if n < 1 or len(vals) != n * (n + 1) // 2:
        raise ValueError(f"{path}: expected {n * (n + 1) // 2} entries for n={n}, got {len(vals)}")
    a = np.zeros((n, n))
    a[np.tril_indices(n)] = vals
    A = SymMatrix.from_dense(a)
    return SymMatrix.tridiagonal(A.diag(), np.diag(A.a, -1)) if _is_tridiagonal(A.a) else A


def _is_tridiagonal(a: np.ndarray) -> bool:
    return not np.any(np.tril(a, -2))


def load_synthetic_pencil(h0_path, v_path, m: float) -> KGPencil:
    return KGPencil(read_matrix_file(h0_path), read_matrix_file(v_path), m, "synthetic")
