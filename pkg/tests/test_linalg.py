import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgpencil.linalg import (
    Inertia,
    NotSPDError,
    SingularMatrixError,
    StagnationError,
    SymMatrix,
    count_below,
    extreme_eigenvalue,
    householder_tridiagonalize,
    inverse_iteration,
    largest_sym_eigenvalue,
    ldlt_inertia,
    solve_with_factor,
    sym_eigen,
    sym_sqrt_and_invsqrt,
    tridiag_eigen,
)
from kgpencil.pencil import KGPencil, t_of_lambda


def laplacian(n, h=1.0):
    return np.full(n, 2 / h**2), np.full(n - 1, -1 / h**2)


# --- SymMatrix --------------------------------------------------------------


def test_from_dense_uses_lower_triangle():
    a = np.array([[1.0, 99.0], [2.0, 3.0]])
    assert np.array_equal(SymMatrix.from_dense(a).to_dense(), [[1, 2], [2, 3]])


def test_tridiagonal_matvec_and_quad():
    A = SymMatrix.tridiagonal([1.0, 2.0, 3.0], [0.5, -1.0])
    x = np.array([1.0, -2.0, 0.5])
    assert np.allclose(A.matvec(x), A.to_dense() @ x)
    assert A.quad(x) == pytest.approx(x @ A.to_dense() @ x)


def test_arithmetic_keeps_tridiagonal_kind():
    A = SymMatrix.tridiagonal([1.0, 2.0], [3.0])
    B = SymMatrix.diagonal([1.0, 1.0])
    assert (A - B).kind == "tridiagonal"
    assert np.allclose((2.0 * A + B).to_dense(), 2 * A.to_dense() + np.eye(2))
    assert np.allclose(A.square().to_dense(), A.to_dense() @ A.to_dense())


def test_symmatrix_is_immutable():
    A = SymMatrix.diagonal([1.0, 2.0])
    with pytest.raises(AttributeError):
        A.kind = "full"


def test_inertia_rejects_negative_counts():
    with pytest.raises(ValueError):
        Inertia(-1, 0, 2)


# --- tridiag_eigen -----------------------------------------------------------


def test_two_by_two():
    assert np.allclose(tridiag_eigen([2.0, 2.0], [-1.0]), [1.0, 3.0])


def test_constant_diagonal():
    assert np.allclose(tridiag_eigen(np.full(7, 3.5), np.zeros(6)), 3.5)


def test_dirichlet_laplacian_closed_form():
    n, h = 20, 0.1
    d, e = laplacian(n, h)
    k = np.arange(1, n + 1)
    exact = 4 / h**2 * np.sin(k * np.pi / (2 * (n + 1))) ** 2
    assert np.allclose(tridiag_eigen(d, e), exact, rtol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 5, 40, 200])
def test_tridiag_vectors_orthonormal_with_small_residual(n):
    rng = np.random.default_rng(n)
    d, e = rng.standard_normal(n), rng.standard_normal(n - 1)
    w, z = tridiag_eigen(d, e, vectors=True)
    A = SymMatrix.tridiagonal(d, e)
    assert np.all(np.diff(w) >= 0)
    assert np.abs(z.T @ z - np.eye(n)).max() <= 1e-12 * n
    assert np.abs(A.to_dense() @ z - z * w).max() <= 1e-10 * A.norm_inf()


def test_tridiag_rejects_bad_lengths():
    with pytest.raises(ValueError):
        tridiag_eigen([1.0, 2.0], [1.0, 2.0])


def test_householder_then_ql_matches_numpy():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((9, 9))
    a = a + a.T
    d, e, _ = householder_tridiagonalize(a)
    assert np.allclose(tridiag_eigen(d, e), np.linalg.eigvalsh(a), atol=1e-12)
    assert np.allclose(sym_eigen(SymMatrix.from_dense(a)), np.linalg.eigvalsh(a), atol=1e-12)


# --- inertia -----------------------------------------------------------------


@pytest.mark.parametrize(
    "a, expected",
    [
        (np.diag([1.0, -2.0, 0.0]), (1, 1, 1)),
        (np.array([[0.0, 1.0], [1.0, 0.0]]), (1, 0, 1)),
        (np.eye(4), (0, 0, 4)),
    ],
)
def test_inertia_examples(a, expected):
    f = ldlt_inertia(SymMatrix.from_dense(a))
    assert f.inertia.as_tuple() == expected


def test_singular_det_sign_is_zero():
    assert ldlt_inertia(SymMatrix.diagonal([1.0, -2.0, 0.0])).det_sign == 0


def test_t_of_lambda_inertia_for_diagonal_pencil():
    p = KGPencil(SymMatrix.diagonal([1.0, 4.0]), SymMatrix.diagonal([0.3, 0.5]), 1.0)
    assert ldlt_inertia(t_of_lambda(p, 2.0)).inertia.n_neg == 1


def test_logabsdet_matches_numpy():
    rng = np.random.default_rng(11)
    a = rng.standard_normal((8, 8))
    a = a + a.T
    f = ldlt_inertia(SymMatrix.from_dense(a))
    sign, logdet = np.linalg.slogdet(a)
    assert f.det_sign == sign
    assert f.logabsdet == pytest.approx(logdet, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 30), seed=st.integers(0, 2**31 - 1))
def test_sylvester_congruence(n, seed):
    rng = np.random.default_rng(seed)
    w = rng.choice([-1.0, 0.0, 1.0], size=n) * rng.uniform(0.5, 2.0, n)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = q @ np.diag(w) @ q.T
    g = rng.standard_normal((n, n)) + 3 * np.eye(n)
    expected = (int((w < 0).sum()), int((w == 0).sum()), int((w > 0).sum()))
    assert ldlt_inertia(SymMatrix.from_dense(a), zero_tol=1e-9).inertia.as_tuple() == expected
    assert ldlt_inertia(SymMatrix.from_dense(g.T @ a @ g), zero_tol=1e-8).inertia.as_tuple() == expected


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 60), seed=st.integers(0, 2**31 - 1))
def test_count_below_matches_inertia(n, seed):
    rng = np.random.default_rng(seed)
    d, e = rng.standard_normal(n), rng.standard_normal(n - 1)
    w = tridiag_eigen(d, e)
    A = SymMatrix.tridiagonal(d, e)
    s = float(rng.uniform(w[0] - 1, w[-1] + 1))
    if np.min(np.abs(w - s)) < 1e-10:
        return
    expected = int((w < s).sum())
    assert ldlt_inertia(A.shift(s)).inertia.n_neg == expected
    assert count_below(A, s) == expected


@pytest.mark.parametrize("which", ["min", "max"])
def test_extreme_eigenvalue(which):
    d, e = laplacian(30)
    w = tridiag_eigen(d, e)
    got = extreme_eigenvalue(SymMatrix.tridiagonal(d, e), which)
    assert got == pytest.approx(w[0] if which == "min" else w[-1], rel=1e-13)


# --- solves ------------------------------------------------------------------


def test_identity_solve():
    b = np.array([1.0, -2.0, 3.0])
    assert np.allclose(solve_with_factor(ldlt_inertia(SymMatrix.identity(3)), b), b)


def test_diagonal_solve():
    x = ldlt_inertia(SymMatrix.diagonal([2.0, 4.0])).solve([1.0, 1.0])
    assert np.allclose(x, [0.5, 0.25])


@pytest.mark.parametrize("kind", ["spd", "indefinite", "tridiagonal"])
def test_solve_residual(kind):
    rng = np.random.default_rng(10)
    if kind == "tridiagonal":
        A = SymMatrix.tridiagonal(rng.standard_normal(50), rng.standard_normal(49))
    else:
        a = rng.standard_normal((10, 10))
        a = a @ a.T + np.eye(10) if kind == "spd" else a + a.T
        A = SymMatrix.from_dense(a)
    b = rng.standard_normal(A.n)
    x = ldlt_inertia(A).solve(b)
    assert np.linalg.norm(A.matvec(x) - b) <= 1e-10 * A.norm_inf() * np.linalg.norm(x)


def test_singular_solve_raises():
    with pytest.raises(SingularMatrixError):
        ldlt_inertia(SymMatrix.diagonal([1.0, 0.0])).solve([1.0, 1.0])


# --- inverse iteration -------------------------------------------------------


def test_inverse_iteration_diagonal():
    x, mu = inverse_iteration(SymMatrix.diagonal([1.0, 5.0]), 0.9, [1.0, 1.0])
    assert mu == pytest.approx(1.0)
    assert abs(x[0]) == pytest.approx(1.0)


def test_inverse_iteration_laplacian_sine_vector():
    n = 10
    d, e = laplacian(n)
    lam1 = tridiag_eigen(d, e)[0]
    x, mu = inverse_iteration(SymMatrix.tridiagonal(d, e), lam1 + 1e-3, np.ones(n))
    s = np.sin(np.arange(1, n + 1) * np.pi / (n + 1))
    s /= np.linalg.norm(s)
    assert abs(x @ s) == pytest.approx(1.0, abs=1e-12)
    assert mu == pytest.approx(lam1, abs=1e-10)


def test_inverse_iteration_tie_stagnates():
    # shift exactly midway, start vector balanced between both eigenvectors
    with pytest.raises(StagnationError):
        inverse_iteration(SymMatrix.diagonal([1.0, 3.0]), 2.0, [1.0, 1.0], max_iter=20)


@pytest.mark.parametrize("k", [0, 3, 7])
def test_inverse_iteration_rayleigh_matches_eigensolver(k):
    rng = np.random.default_rng(k)
    d, e = rng.standard_normal(12), rng.standard_normal(11)
    w = tridiag_eigen(d, e)
    _, mu = inverse_iteration(SymMatrix.tridiagonal(d, e), w[k] + 1e-6, rng.standard_normal(12))
    assert mu == pytest.approx(w[k], abs=1e-10)


# --- Lanczos and square roots --------------------------------------------------


def test_largest_eigenvalue_diagonal():
    assert largest_sym_eigenvalue(lambda x: np.array([0.09, 0.0625]) * x, 2) == pytest.approx(0.09, rel=1e-12)


def test_largest_eigenvalue_rank_one():
    v = np.array([1.0, 1.0, 1.0])
    assert largest_sym_eigenvalue(lambda x: v * (v @ x), 3) == pytest.approx(3.0, rel=1e-12)


def test_largest_eigenvalue_of_sts_for_diagonal_pencil():
    s = np.array([0.3, 0.5 / 2.0])
    assert largest_sym_eigenvalue(lambda x: s * s * x, 2) == pytest.approx(0.09, rel=1e-12)


def test_sqrt_diagonal():
    r, ri = sym_sqrt_and_invsqrt(SymMatrix.diagonal([4.0, 9.0]))
    assert np.allclose(r, np.diag([2.0, 3.0]))
    assert np.allclose(ri, np.diag([0.5, 1 / 3]))


def test_sqrt_identity():
    r, ri = sym_sqrt_and_invsqrt(SymMatrix.identity(3))
    assert np.allclose(r, np.eye(3)) and np.allclose(ri, np.eye(3))


def test_sqrt_two_by_two():
    r, _ = sym_sqrt_and_invsqrt(SymMatrix.from_dense([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(np.linalg.eigvalsh(r), [1.0, math.sqrt(3)])


def test_sqrt_rejects_indefinite():
    with pytest.raises(NotSPDError):
        sym_sqrt_and_invsqrt(SymMatrix.diagonal([1.0, -1.0]))


@pytest.mark.parametrize("seed", range(20))
def test_sqrt_round_trip(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 51))
    a = rng.standard_normal((n, n))
    A = SymMatrix.from_dense(a @ a.T + 0.1 * np.eye(n))
    r, ri = sym_sqrt_and_invsqrt(A)
    assert np.abs(r @ r - A.to_dense()).max() <= 1e-10 * A.norm_inf()
    assert np.abs(r @ ri - np.eye(n)).max() <= 1e-10
