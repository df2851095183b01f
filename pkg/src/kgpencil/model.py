"""Radial discretization of ``H0 = -Delta + m^2`` and of scalar potentials.

Each angular-momentum sector ``l`` reduces to the 1D operator
``-u'' + l(l+1)/r^2 u + m^2 u`` on ``(0, r_max)`` with Dirichlet ends. On a
graded grid the three-point stencil is not symmetric in the plain
Euclidean product; it is symmetric with respect to the nodal weights
``w_i = (h_i + h_{i+1})/2`` and we work with the similar matrix
``W^{1/2} A W^{-1/2}``, so eigenvectors are ``sqrt(w_i) u(r_i)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .linalg import SymMatrix, ldlt_inertia
from .pencil import KGPencil

__all__ = [
    "DiscretizationError",
    "RadialGrid",
    "Potential",
    "Zero",
    "Coulomb",
    "Gaussian",
    "BoundedTable",
    "Shifted",
    "RadialProblem",
    "radial_stencil",
    "build_h0",
    "build_v",
    "build_pencil",
    "NajmanBounds",
    "najman_q_bounds",
    "discrete_positivity_resolvent",
]

MIN_POINTS = 8


class DiscretizationError(ValueError):
    pass


@dataclass(frozen=True)
class RadialGrid:
    """Nodes ``r_i = r_max (i/(n+1))^grading`` for ``i = 1..n``."""

    r_max: float
    n: int
    grading: float = 1.0
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    spacings: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")
        if self.n < 1:
            raise ValueError("grid needs at least one interior point")
        if self.grading < 1:
            raise ValueError("grading exponent must be >= 1")
        full = self.r_max * (np.arange(self.n + 2) / (self.n + 1)) ** self.grading
        h = np.diff(full)  # h[i] = r_{i+1} - r_i, n + 1 entries
        for name, val in (("nodes", full[1:-1]), ("spacings", h), ("weights", 0.5 * (h[:-1] + h[1:]))):
            val = np.array(val)
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        if not np.all(np.diff(full) > 0):
            raise DiscretizationError("grid nodes are not strictly increasing")


# ---------------------------------------------------------------------------
# potentials V(r) = e q(r)


class Potential:
    """Radial potential; subclasses implement :meth:`__call__`.

    ``coulomb_coefficient`` is ``kappa`` in ``V(r) ~ -kappa/r`` near the
    origin (zero for bounded potentials), ``regular_at_zero`` is the finite
    part of ``V`` at ``r -> 0`` and ``at_infinity`` the limit for large ``r``.
    """

    kind = "abstract"
    coulomb_coefficient = 0.0

    def __call__(self, r):
        raise NotImplementedError

    @property
    def regular_at_zero(self) -> float:
        return float(self(np.array([0.0]))[0])

    @property
    def at_infinity(self) -> float:
        return 0.0

    @property
    def sign_hint(self) -> str:
        """One of ``"negative"``, ``"positive"``, ``"indefinite"``, ``"zero"``."""
        return "indefinite"

    def check_sign(self, r) -> None:
        v = self(np.asarray(r, dtype=float))
        hint = self.sign_hint
        if (hint == "negative" and np.any(v > 0)) or (hint == "positive" and np.any(v < 0)) or (
            hint == "zero" and np.any(v != 0)
        ):
            raise ValueError(f"{self.kind} potential samples contradict sign hint {hint!r}")


@dataclass(frozen=True)
class Zero(Potential):
    kind = "zero"

    def __call__(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    @property
    def sign_hint(self) -> str:
        return "zero"


@dataclass(frozen=True)
class Coulomb(Potential):
    """``V(r) = -ze2 / r``."""

    ze2: float
    kind = "coulomb"

    def __post_init__(self):
        if not self.ze2 > 0:
            raise ValueError("Coulomb coupling must be positive")

    @property
    def coulomb_coefficient(self) -> float:
        return self.ze2

    def __call__(self, r):
        return -self.ze2 / np.asarray(r, dtype=float)

    @property
    def regular_at_zero(self) -> float:
        return 0.0

    @property
    def sign_hint(self) -> str:
        return "negative"


@dataclass(frozen=True)
class Gaussian(Potential):
    """``V(r) = -depth * exp(-(r/width)^2)``; ``depth > 0`` is attractive."""

    depth: float
    width: float
    kind = "gaussian"

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("Gaussian width must be positive")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return -self.depth * np.exp(-((r / self.width) ** 2))

    @property
    def sign_hint(self) -> str:
        if self.depth == 0:
            return "zero"
        return "negative" if self.depth > 0 else "positive"


@dataclass(frozen=True, eq=False)
class BoundedTable(Potential):
    """Tabulated ``(r, v)`` samples, linear in between, constant outside."""

    r: np.ndarray
    v: np.ndarray
    kind = "bounded_table"

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 1:
            raise ValueError("table needs matching 1D r and v columns")
        if np.any(np.diff(r) <= 0):
            raise ValueError("table r column must be strictly increasing")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v))):
            raise ValueError("table contains non-finite values")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_csv(cls, path) -> "BoundedTable":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except (ValueError, IndexError):
                    if rows:
                        raise ValueError(f"{path}: malformed row {row!r}") from None
                    # header line
        if not rows:
            raise ValueError(f"{path}: no samples")
        r, v = zip(*rows)
        return cls(np.array(r), np.array(v))

    def __call__(self, r):
        return np.interp(np.asarray(r, dtype=float), self.r, self.v)

    @property
    def at_infinity(self) -> float:
        return float(self.v[-1])

    @property
    def sign_hint(self) -> str:
        if np.all(self.v == 0):
            return "zero"
        if np.all(self.v <= 0):
            return "negative"
        if np.all(self.v >= 0):
            return "positive"
        return "indefinite"


@dataclass(frozen=True)
class Shifted(Potential):
    """``base(r) + c``; the pencil spectrum moves by ``c``."""

    base: Potential
    c: float
    kind = "shifted"

    def __call__(self, r):
        return self.base(r) + self.c

    @property
    def coulomb_coefficient(self) -> float:
        return self.base.coulomb_coefficient

    @property
    def regular_at_zero(self) -> float:
        return self.base.regular_at_zero + self.c

    @property
    def at_infinity(self) -> float:
        return self.base.at_infinity + self.c

    @property
    def sign_hint(self) -> str:
        hint = self.base.sign_hint
        if self.c == 0:
            return hint
        if hint in ("negative", "zero") and self.c < 0:
            return "negative"
        if hint in ("positive", "zero") and self.c > 0:
            return "positive"
        return "indefinite"


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadialProblem:
    grid: RadialGrid
    potential: Potential
    l: int = 0
    m: float = 1.0

    def __post_init__(self):
        if int(self.l) != self.l or self.l < 0:
            raise ValueError("angular momentum must be a nonnegative integer")
        if not self.m > 0:
            raise ValueError("mass must be positive")


def radial_stencil(grid: RadialGrid, l: int, m: float) -> SymMatrix:
    """Symmetrized three-point stencil of ``-d^2/dr^2 + l(l+1)/r^2 + m^2``."""
    h, w, r = grid.spacings, grid.weights, grid.nodes
    d = (1.0 / h[:-1] + 1.0 / h[1:]) / w + l * (l + 1) / r**2 + m * m
    e = -1.0 / (h[1:-1] * np.sqrt(w[:-1] * w[1:]))
    return SymMatrix.tridiagonal(d, e)


def build_h0(problem: RadialProblem) -> SymMatrix:
    """Tridiagonal ``H0`` for one sector; checks ``lambda_min(H0) >= m^2``."""
    if problem.grid.n < MIN_POINTS:
        raise DiscretizationError(f"grid too coarse: n={problem.grid.n} < {MIN_POINTS}")
    H0 = radial_stencil(problem.grid, problem.l, problem.m)
    m2 = problem.m**2
    if ldlt_inertia(H0.shift(m2 - 1e-12 * H0.norm_inf())).inertia.n_neg:
        raise DiscretizationError("discrete H0 has an eigenvalue below m^2")
    return H0


def build_v(problem: RadialProblem) -> SymMatrix:
    v = problem.potential(problem.grid.nodes)
    if not np.all(np.isfinite(v)):
        raise ValueError("potential is not finite on the grid")
    return SymMatrix.diagonal(v)


def build_pencil(problem: RadialProblem) -> KGPencil:
    problem.potential.check_sign(problem.grid.nodes)
    return KGPencil(
        build_h0(problem),
        build_v(problem),
        problem.m,
        "radial",
        {"l": problem.l, "grid": problem.grid, "potential": problem.potential},
    )


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NajmanBounds:
    q_minus: float
    q_plus: float
    applicable: bool
    reason: str = ""


def najman_q_bounds(potential: Potential, gamma: float, m: float, grid: RadialGrid, n: int = 3) -> NajmanBounds:
    """Pointwise Hardy-type bounds ``q_-`` and ``q_+``.

    ``q_- = sup V(r) - sqrt(m^2 + gamma^2/r^2)`` and
    ``q_+ = inf V(r) + sqrt(m^2 + gamma^2/r^2)``, taken over the grid nodes
    together with the analytic limits at ``r -> 0`` and ``r -> infinity``.
    """
    hardy = (n - 2) / 2
    if not 0 <= gamma < hardy:
        raise ValueError(f"gamma must satisfy 0 <= gamma < {hardy}")
    r = grid.nodes
    v = potential(r)
    root = np.sqrt(m * m + (gamma / r) ** 2)
    lower = [float(np.max(v - root)), potential.at_infinity - m]
    upper = [float(np.min(v + root)), potential.at_infinity + m]

    # r -> 0: V ~ -kappa/r + v0 and sqrt(m^2 + gamma^2/r^2) ~ gamma/r
    kappa, v0 = potential.coulomb_coefficient, potential.regular_at_zero
    if kappa == 0 and gamma == 0:
        lower.append(v0 - m)
        upper.append(v0 + m)
    elif kappa == gamma:
        upper.append(v0)
    elif kappa > gamma:
        upper.append(-math.inf)
    # lower limit at 0 is -inf whenever kappa + gamma > 0: no constraint on the sup

    q_minus, q_plus = max(lower), min(upper)
    if q_minus < q_plus:
        return NajmanBounds(q_minus, q_plus, True)
    return NajmanBounds(q_minus, q_plus, False, "criterion inapplicable: q_- >= q_+")


# ---------------------------------------------------------------------------


@njit(cache=True)
def _tridiag_inverse_min(d, e):
    # Entries of the inverse of an SPD tridiagonal matrix via leading and
    # trailing minor ratios (all in log space); returns (all_positive, log_min).
    n = d.size
    lt = np.zeros(n + 1)  # log theta_i, theta_0 = 1
    piv = d[0]
    if piv <= 0.0:
        return False, -np.inf, False
    lt[1] = math.log(piv)
    for i in range(1, n):
        piv = d[i] - e[i - 1] ** 2 / piv
        if piv <= 0.0:
            return False, -np.inf, False
        lt[i + 1] = lt[i] + math.log(piv)
    lp = np.zeros(n + 2)  # log phi_j (trailing minors), phi_{n+1} = 1
    piv = d[n - 1]
    lp[n] = math.log(piv)
    for j in range(n - 2, -1, -1):
        piv = d[j] - e[j] ** 2 / piv
        lp[j + 1] = lp[j + 2] + math.log(piv)
    positive = True
    for k in range(n - 1):
        if not e[k] < 0.0:
            positive = False
    # (A^-1)_{ij} = theta_{i-1} phi_{j+1} prod_{k=i}^{j-1} (-e_k) / theta_n, i <= j (1-based)
    s = np.zeros(n)  # s[j] = sum_{k<j} log|e_k|
    for k in range(1, n):
        ak = abs(e[k - 1])
        s[k] = s[k - 1] + (math.log(ak) if ak > 0 else -np.inf)
    best = np.inf
    run = np.inf
    for j in range(n):
        val = lt[j] - s[j]  # candidate with i = j
        if val < run:
            run = val
        cand = run + s[j] + lp[j + 2] - lt[n]
        if cand < best:
            best = cand
    return positive, best, True


def discrete_positivity_resolvent(H0: SymMatrix, c: float):
    """Whether ``(H0 + c)^{-1}`` is entrywise strictly positive.

    Returns ``(positive, min_entry)``. Tridiagonal input uses the closed
    form of the inverse of a tridiagonal matrix, so it scales to large grids.
    """
    A = H0.shift(-c)
    if A.kind == "tridiagonal":
        if A.n == 1:
            if A.d[0] == 0:
                raise ValueError("H0 + c is singular")
            return bool(1.0 / A.d[0] > 0), float(1.0 / A.d[0])
        positive, log_min, spd = _tridiag_inverse_min(A.d, A.e)
        if spd:
            return bool(positive and np.isfinite(log_min)), float(math.exp(log_min)) if positive else _dense_min(A)
    return _dense_positivity(A)


def _dense_min(A: SymMatrix) -> float:
    return float(np.min(_dense_inverse(A)))


def _dense_inverse(A: SymMatrix) -> np.ndarray:
    f = ldlt_inertia(A)
    if f.singular:
        raise ValueError("H0 + c is singular")
    eye = np.eye(A.n)
    return np.column_stack([f.solve(eye[:, j]) for j in range(A.n)])


def _dense_positivity(A: SymMatrix):
    inv = _dense_inverse(A)
    mn = float(np.min(inv))
    return bool(mn > 0), mn
