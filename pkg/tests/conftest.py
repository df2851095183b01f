import numpy as np
import pytest

from kgpencil.linalg import SymMatrix
from kgpencil.model import Coulomb, RadialGrid, RadialProblem, build_pencil
from kgpencil.pencil import KGPencil

# (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda t: t[0]):
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def P2():
    return KGPencil(SymMatrix.diagonal([1.0, 4.0]), SymMatrix.diagonal([0.3, 0.5]), 1.0)


def random_spd_at_least(rng, n, floor, spread=2.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ np.diag(floor + rng.exponential(spread, n)) @ q.T


def random_damped_pencil(rng, n, m=None, v_scale=None, sign="indefinite"):
    """``H0 = V^2 + B`` with ``B >= max(m^2, .) + 0.1``, so ``T(0) = B`` is positive definite."""
    m = float(rng.uniform(0.5, 2.0)) if m is None else m
    a = rng.standard_normal((n, n))
    if sign == "indefinite":
        v = 0.5 * (a + a.T)
    else:
        v = a @ a.T / n
        v = v if sign == "positive" else -v
    v *= rng.uniform(0.1, 2.0) if v_scale is None else v_scale
    b = random_spd_at_least(rng, n, m * m + 0.1)
    return KGPencil(SymMatrix.from_dense(v @ v + b), SymMatrix.from_dense(v), m)


def random_pencil_with_snorm(rng, n, target, sign="indefinite"):
    """Pencil with ``H0 >= m^2`` and ``||V H0^{-1/2}|| = target`` exactly.

    Sign-definite ``V`` is kept close to a multiple of the identity so that
    ``(Vx, x)^2`` nearly matches ``|Vx|^2`` and the pencil stays strongly damped
    for targets up to 2.
    """
    m = float(rng.uniform(0.5, 2.0))
    h0 = random_spd_at_least(rng, n, m * m, spread=m * m)
    a = rng.standard_normal((n, n))
    if sign == "indefinite":
        v = 0.5 * (a + a.T)
    else:
        v = np.eye(n) + 0.1 * a @ a.T / n
        v = v if sign == "positive" else -v
    w, u = np.linalg.eigh(h0)
    s = np.linalg.norm(v @ (u @ np.diag(w**-0.5) @ u.T), 2)
    v *= target / s
    return KGPencil(SymMatrix.from_dense(h0), SymMatrix.from_dense(v), m)


_coulomb_cache: dict = {}


def coulomb_pencil(n, l=0, ze2=0.3, r_max=60.0, grading=2.0, m=1.0):
    key = (n, l, ze2, r_max, grading, m)
    if key not in _coulomb_cache:
        grid = RadialGrid(r_max, n, grading)
        _coulomb_cache[key] = build_pencil(RadialProblem(grid, Coulomb(ze2), l, m))
    return _coulomb_cache[key]
