"""Closed-form Klein-Gordon Coulomb levels and radial eigenfunctions in R^3."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "CoulombParams",
    "CoulombLevel",
    "coulomb_eigenvalue",
    "kummer_1f1",
    "coulomb_radial_function",
    "ground_state",
]


@dataclass(frozen=True)
class CoulombParams:
    ze2: float
    m: float = 1.0

    def __post_init__(self):
        if not 0 < self.ze2 < 0.5:
            raise ValueError(f"Coulomb coupling must satisfy 0 < Ze^2 < 1/2, got {self.ze2}")
        if not self.m > 0:
            raise ValueError("mass must be positive")


@dataclass(frozen=True)
class CoulombLevel:
    k: int
    l: int
    lam: float
    mu: float
    beta: float

    @property
    def multiplicity(self) -> int:
        return 2 * self.l + 1


def coulomb_eigenvalue(params: CoulombParams, k: int, l: int) -> CoulombLevel:
    """Bound-state energy for principal number ``k`` and angular momentum ``l``."""
    if k < 1 or not 0 <= l <= k - 1:
        raise ValueError(f"invalid quantum numbers (k={k}, l={l})")
    z2 = params.ze2**2
    mu = math.sqrt((l + 0.5) ** 2 - z2)
    lam = params.m / math.sqrt(1.0 + z2 / (k - l - 0.5 + mu) ** 2)
    beta = 2.0 * math.sqrt(params.m**2 - lam**2)
    return CoulombLevel(k, l, lam, mu, beta)


def kummer_1f1(a: float, b: float, z, rtol: float = 1e-12, max_terms: int = 100_000):
    """Confluent hypergeometric function ``1F1(a; b; z)``.

    A nonpositive integer ``a`` gives a polynomial that is summed exactly.
    Otherwise the power series is summed until the term ratio drops below
    ``rtol``; arguments where the series loses more than four digits to
    cancellation (or overflows) raise ``OverflowError``.
    """
    if b <= 0 and float(b).is_integer():
        raise ValueError("b must not be a nonpositive integer")
    z = np.asarray(z, dtype=float)
    terminating = a <= 0 and float(a).is_integer()
    n_terms = int(-a) + 1 if terminating else max_terms
    term = np.ones_like(z)
    total = np.ones_like(z)
    biggest = np.ones_like(z)
    for j in range(n_terms - 1 if terminating else max_terms):
        term = term * (a + j) / (b + j) * z / (j + 1)
        total = total + term
        if terminating:
            continue
        biggest = np.maximum(biggest, np.abs(term))
        if not np.all(np.isfinite(total)):
            raise OverflowError("1F1 series overflowed")
        if np.all(np.abs(term) <= rtol * np.abs(total)):
            break
    else:
        if not terminating:
            raise OverflowError(f"1F1 series did not converge in {max_terms} terms")
    if not terminating and np.any(biggest > 1e4 * np.abs(total)):
        raise OverflowError("1F1 series lost too much precision to cancellation")
    return total if total.ndim else float(total)


def _reduced_unnormalized(params: CoulombParams, level: CoulombLevel, r) -> np.ndarray:
    # u(r) = r R(r) with R ~ (beta r)^(mu - 1/2) exp(-beta r / 2) 1F1(l+1-k, 2mu+1; beta r)
    r = np.asarray(r, dtype=float)
    x = level.beta * r
    poly = kummer_1f1(level.l + 1 - level.k, 2 * level.mu + 1, x)
    return r * np.power(x, level.mu - 0.5, where=x > 0, out=np.zeros_like(x)) * np.exp(-0.5 * x) * poly


def coulomb_radial_function(params: CoulombParams, level: CoulombLevel, r, weights=None) -> np.ndarray:
    """Reduced radial function ``u(r) = r R(r)`` sampled at ``r``.

    Normalized so that ``sum(weights * u^2) = 1`` (unit weights if none are
    given) with a positive leading lobe.
    """
    u = _reduced_unnormalized(params, level, r)
    w = np.ones_like(u) if weights is None else np.asarray(weights, dtype=float)
    norm = math.sqrt(float(np.sum(w * u * u)))
    if norm == 0.0:
        raise ValueError("radial function vanishes on the supplied grid")
    return u / norm


def ground_state(params: CoulombParams) -> tuple[float, Callable[[np.ndarray], np.ndarray]]:
    """``(lambda_10, u)`` where ``u(r)`` is the unnormalized reduced ground state."""
    level = coulomb_eigenvalue(params, 1, 0)
    return level.lam, lambda r: _reduced_unnormalized(params, level, r)
