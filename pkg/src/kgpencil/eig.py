"""Real eigenvalues of a strongly damped pencil by inertia slicing.

For ``lam >= nu_+`` the number of negative eigenvalues of ``T(lam)`` equals
the number of eigenvalues in ``[nu_+, lam)``; for ``lam <= nu_-`` it equals
the number in ``(lam, nu_-]``. Bisection on these counts isolates every
eigenvalue together with its multiplicity, and Rayleigh-functional
iteration polishes the eigenpairs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.optimize

from .linalg import SingularMatrixError, SymMatrix, ldlt_inertia
from .model import discrete_positivity_resolvent
from .pencil import KGPencil, NotStronglyDampedAt, root_functionals, t_of_lambda

__all__ = [
    "CountingLawError",
    "SliceCount",
    "EigenvalueRecord",
    "SemisimplicityCertificate",
    "ExtremalCertificate",
    "count_below",
    "eigenvalues_in",
    "all_eigenvalues",
    "refine_eigenpair",
    "semisimplicity_certificate",
    "extremal_certificates",
    "positivity_flag",
    "det_scan_oracle",
    "write_eigenvalue_csv",
    "write_eigenvector_csv",
]

SIDES = ("minus_zone", "plus_zone")
JITTER = 1e-10
MARGIN_RTOL = 1e-6
POSITIVITY_RTOL = 1e-12
STEP_RTOL = 1e-13


class CountingLawError(AssertionError):
    """Negative-inertia counts moved the wrong way across a bracket."""


@dataclass(frozen=True)
class SliceCount:
    lam: float
    n_neg: int
    jittered: bool = False


@dataclass
class EigenvalueRecord:
    lam: float
    side: str
    multiplicity: int
    eigenvectors: np.ndarray  # columns, orthonormal
    residuals: list = field(default_factory=list)
    semisimple_margin: float = math.nan
    positivity: str = "not_applicable"
    iterations: int = 0

    @property
    def residual(self) -> float:
        return max(self.residuals) if self.residuals else math.nan

    @property
    def vector(self) -> np.ndarray:
        return self.eigenvectors[:, 0]


def _lam_scale(p: KGPencil, lam: float) -> float:
    return max(p.m, abs(lam))


def count_below(p: KGPencil, lam: float, max_jitter: int = 8) -> SliceCount:
    """Negative inertia of ``T(lam)``.

    If ``T(lam)`` is singular to working precision, ``lam`` is moved up by
    ``1e-10 * max(m, |lam|)`` (repeatedly if needed) and the shifted point is
    reported.
    """
    lam = float(lam)
    step = JITTER * _lam_scale(p, lam)
    for k in range(max_jitter + 1):
        inertia = ldlt_inertia(t_of_lambda(p, lam + k * step)).inertia
        if inertia.n_zero == 0:
            return SliceCount(lam + k * step, inertia.n_neg, k > 0)
    raise SingularMatrixError(f"T(lambda) stays singular near lambda={lam}")


def _check_side(side: str) -> None:
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}, got {side!r}")


def _normalize_sign(x: np.ndarray) -> np.ndarray:
    # largest-magnitude component positive; argmax picks the lowest index on ties
    k = int(np.argmax(np.abs(x)))
    return -x if x[k] < 0 else x


def positivity_flag(p: KGPencil, x: np.ndarray) -> str:
    """``strictly_positive`` / ``sign_changing``; ``not_applicable`` off the irreducible radial case."""
    if p.provenance != "radial" or not p.is_irreducible_tridiagonal:
        return "not_applicable"
    y = _normalize_sign(np.asarray(x, dtype=float))
    return "strictly_positive" if y.min() > POSITIVITY_RTOL * y.max() else "sign_changing"


def _inverse_step(p: KGPencil, lam: float, x: np.ndarray) -> np.ndarray:
    T = t_of_lambda(p, lam)
    eps = np.finfo(float).eps * p.scale(lam)
    for k in range(12):
        # a zero pivot means lam is an eigenvalue to working precision
        f = ldlt_inertia(T.shift(64 * eps * 4.0**k) if k else T)
        if not f.singular:
            y = f.solve(x, refine=False)
            if np.all(np.isfinite(y)) and np.any(y):
                return y / np.linalg.norm(y)
    raise SingularMatrixError("could not take an inverse-iteration step")


def _root(p: KGPencil, x: np.ndarray, side: str) -> float:
    rp = root_functionals(p, x)
    return rp.p_plus if side == "plus_zone" else rp.p_minus


def _residual(p: KGPencil, lam: float, x: np.ndarray) -> float:
    return float(np.linalg.norm(t_of_lambda(p, lam).matvec(x)) / np.linalg.norm(x))


def _bisect_bracket(p: KGPencil, lo: float, hi: float, side: str) -> float:
    # shrink [lo, hi] around a single inertia jump down to adjacent doubles
    c_lo = count_below(p, lo).n_neg
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        if count_below(p, mid).n_neg == c_lo:
            lo = mid
        else:
            hi = mid


def refine_eigenpair(
    p: KGPencil,
    lam_hat: float,
    x_hat,
    side: str,
    bracket: tuple[float, float] | None = None,
    tol: float = 1e-10,
    max_iter: int = 40,
    min_iter: int = 0,
) -> EigenvalueRecord:
    """Rayleigh-functional iteration ``lam <- p_side(x)``, ``x <- T(lam)^{-1} x``.

    Stops once ``||T(lam)x|| <= tol * scale`` and the last update of ``lam``
    was below ``1e-13 * max(m, |lam|)``, after at least ``min_iter`` steps. If the iterate leaves ``bracket``, the residual stops
    decreasing over the last five steps, or the root functional breaks down,
    the eigenvalue is recomputed by inertia bisection inside ``bracket`` and
    the vector by inverse iteration.
    """
    _check_side(side)
    x = np.asarray(x_hat, dtype=float)
    x = x / np.linalg.norm(x)
    lam = float(lam_hat)
    res = _residual(p, lam, x)
    history = [res]
    it = 0
    fallback = False
    step = math.inf if min_iter else 0.0
    while it < min_iter or res > tol * p.scale(lam) or step > STEP_RTOL * _lam_scale(p, lam):
        if it == max_iter:
            fallback = True
            break
        it += 1
        try:
            x = _inverse_step(p, lam, x)
            lam_new = _root(p, x, side)
        except (SingularMatrixError, NotStronglyDampedAt):
            fallback = True
            break
        if bracket is not None and not bracket[0] <= lam_new <= bracket[1]:
            fallback = True
            break
        step = abs(lam_new - lam)
        lam = lam_new
        res = _residual(p, lam, x)
        history.append(res)
        if len(history) >= 6 and not all(b <= a for a, b in zip(history[-6:-1], history[-5:])):
            fallback = True
            break
    if fallback:
        if bracket is None:
            raise ValueError("refinement oscillated and no bracket was given for the fallback")
        lam = _bisect_bracket(p, bracket[0], bracket[1], side)
        x = np.asarray(x_hat, dtype=float)
        for _ in range(3):
            x = _inverse_step(p, lam, x)
        res = _residual(p, lam, x)
    x = _normalize_sign(x)
    rec = EigenvalueRecord(lam, side, 1, x[:, None], [res], iterations=it)
    rec.positivity = positivity_flag(p, x)
    rec.semisimple_margin = semisimplicity_certificate(rec, p).margin
    return rec


def _cluster_basis(p: KGPencil, lam: float, k: int, rng, sweeps: int = 4) -> np.ndarray:
    X = rng.standard_normal((p.n, k))
    for _ in range(sweeps):
        X = np.column_stack([_inverse_step(p, lam, X[:, j]) for j in range(k)])
        X, _ = np.linalg.qr(X)
    return np.column_stack([_normalize_sign(X[:, j]) for j in range(k)])


def eigenvalues_in(
    p: KGPencil,
    a: float,
    b: float,
    side: str,
    tol: float = 1e-9,
    vectors: bool = True,
    seed: int = 42,
    isolate: float = 1e-4,
) -> list[EigenvalueRecord]:
    """Every eigenvalue in ``[a, b]``, which must lie on one side of the gap.

    Brackets are bisected until each holds one inertia jump and is no wider
    than ``tol * max(m, |lam|)``; the jump size is the multiplicity. A jump
    of one is released early, at relative width ``isolate``, and polished by
    :func:`refine_eigenpair` inside its bracket. Clusters get an orthonormal
    kernel basis by block inverse iteration.
    """
    _check_side(side)
    if not a < b:
        raise ValueError("need a < b")
    sgn = 1 if side == "plus_zone" else -1
    # closed interval: pad so an eigenvalue sitting exactly on an end is kept
    a = a - 2 * tol * _lam_scale(p, a)
    b = b + 2 * tol * _lam_scale(p, b)
    ca, cb = count_below(p, a), count_below(p, b)
    if sgn * (cb.n_neg - ca.n_neg) < 0:
        raise CountingLawError(f"n_neg goes {ca.n_neg} -> {cb.n_neg} on [{a}, {b}] ({side})")

    clusters = []
    stack = [(ca.lam, ca.n_neg, cb.lam, cb.n_neg)]
    while stack:
        lo, nlo, hi, nhi = stack.pop()
        k = sgn * (nhi - nlo)
        if k < 0:
            raise CountingLawError(f"n_neg goes {nlo} -> {nhi} on [{lo}, {hi}] ({side})")
        if k == 0:
            continue
        mid = 0.5 * (lo + hi)
        width = (hi - lo) / _lam_scale(p, mid)
        if width <= tol or (k == 1 and vectors and width <= isolate) or mid <= lo or mid >= hi:
            clusters.append((lo, hi, k))
            continue
        cm = count_below(p, mid)
        stack.append((cm.lam, cm.n_neg, hi, nhi))
        stack.append((lo, nlo, cm.lam, cm.n_neg))
    clusters.sort()

    rng = np.random.default_rng(seed)
    records = []
    for lo, hi, k in clusters:
        lam = 0.5 * (lo + hi)
        if not vectors:
            records.append(EigenvalueRecord(lam, side, k, np.zeros((p.n, 0))))
            continue
        if k == 1:
            x0 = _inverse_step(p, lam, rng.standard_normal(p.n))
            x0 = _inverse_step(p, lam, x0)
            rec = refine_eigenpair(p, lam, x0, side, bracket=(lo, hi), min_iter=1)
        else:
            X = _cluster_basis(p, lam, k, rng)
            # the root functional is exact on the kernel; use it to sharpen lam
            lam = float(np.mean([_root(p, X[:, j], side) for j in range(k)]))
            X = _cluster_basis(p, lam, k, rng, sweeps=1) if lo <= lam <= hi else X
            lam = float(np.mean([_root(p, X[:, j], side) for j in range(k)]))
            rec = EigenvalueRecord(lam, side, k, X, [_residual(p, lam, X[:, j]) for j in range(k)])
            rec.positivity = "not_applicable"
            rec.semisimple_margin = semisimplicity_certificate(rec, p).margin
        rec.multiplicity = k
        records.append(rec)
    return records


def clamp_to_zones(records: list[EigenvalueRecord], nu_minus: float, nu_plus: float) -> list[EigenvalueRecord]:
    """Snap records that rounding left a few ulps inside ``(nu_minus, nu_plus)``.

    Plus-zone eigenvalues are ``>= nu_plus`` and minus-zone ones ``<= nu_minus``
    exactly, so projecting onto that constraint never increases the error.
    Anything deeper than ``slack`` inside the gap is left alone so it shows up.
    """
    out = []
    for r in records:
        slack = 16 * np.finfo(float).eps * max(1.0, abs(r.lam))
        if r.side == "plus_zone" and nu_plus - slack <= r.lam < nu_plus:
            r = replace(r, lam=nu_plus)
        elif r.side == "minus_zone" and nu_minus < r.lam <= nu_minus + slack:
            r = replace(r, lam=nu_minus)
        out.append(r)
    return out


def all_eigenvalues(p: KGPencil, nu_minus: float, nu_plus: float, **kw) -> list[EigenvalueRecord]:
    """Both zones swept out to ``lambda_cap``; ``2N`` eigenvalues counting multiplicity."""
    cap = p.lambda_cap
    recs = eigenvalues_in(p, -cap, nu_minus, "minus_zone", **kw) + eigenvalues_in(p, nu_plus, cap, "plus_zone", **kw)
    return clamp_to_zones(recs, nu_minus, nu_plus)


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class SemisimplicityCertificate:
    margin: float
    threshold: float
    passed: bool
    cross_check: float  # |margin - 2 sqrt(mu^2 + c)| relative to max(1, margin)
    flag: str = ""


def semisimplicity_certificate(rec: EigenvalueRecord, p: KGPencil) -> SemisimplicityCertificate:
    """``min |2((V - lam)x, x)| / |x|^2`` over the kernel basis.

    At a genuine eigenpair this equals the root spacing ``2 sqrt(mu^2 + c)``
    of ``x``'s scalar quadratic, which is recomputed as a cross-check.
    """
    margins, checks = [], []
    for j in range(rec.eigenvectors.shape[1]):
        x = rec.eigenvectors[:, j]
        nx2 = float(x @ x)
        margins.append(abs(2.0 * p.V.shift(rec.lam).quad(x)) / nx2)
        try:
            spacing = 2.0 * math.sqrt(root_functionals(p, x).discriminant)
        except NotStronglyDampedAt:
            spacing = 0.0
        checks.append(abs(margins[-1] - spacing) / max(1.0, margins[-1]))
    margin = min(margins) if margins else math.nan
    threshold = MARGIN_RTOL * max(1.0, abs(rec.lam))
    passed = bool(margin >= threshold)
    flag = "" if passed else "near-defective (damping nearly violated)"
    return SemisimplicityCertificate(margin, threshold, passed, max(checks, default=math.nan), flag)


@dataclass(frozen=True)
class ExtremalCertificate:
    which: str  # "nu_minus" or "nu_plus"
    lam: float
    simplicity: bool
    positivity: str
    resolvent_positive: bool | None

    def as_dict(self) -> dict:
        return {
            "which": self.which,
            "lambda": self.lam,
            "simplicity": self.simplicity,
            "positivity": self.positivity,
            "resolvent_positive": self.resolvent_positive,
        }


def extremal_certificates(records, nu_minus: float, nu_plus: float, p: KGPencil, rtol: float = 1e-8, c: float = 1.0):
    """Simplicity and one-signedness at eigenvalues that coincide with ``nu_-`` or ``nu_+``.

    Positivity is only asserted for radial pencils with irreducible
    tridiagonal structure; ``resolvent_positive`` reports whether
    ``(H0 + c)^{-1}`` is entrywise positive there.
    """
    out = []
    radial = p.provenance == "radial" and p.is_irreducible_tridiagonal
    for which, nu in (("nu_minus", nu_minus), ("nu_plus", nu_plus)):
        for rec in records:
            if abs(rec.lam - nu) <= rtol * max(1.0, abs(nu)):
                pos = positivity_flag(p, rec.vector) if rec.multiplicity == 1 else rec.positivity
                hyp = discrete_positivity_resolvent(p.H0, c)[0] if radial else None
                out.append(ExtremalCertificate(which, rec.lam, rec.multiplicity == 1, pos, hyp))
                break
    return out


# ---------------------------------------------------------------------------
# brute-force oracle on LAPACK kernels


def _oracle_inertia(T: np.ndarray) -> tuple[int, int, float]:
    """``(n_neg, n_zero, det)`` from LAPACK ``dsytrf``."""
    lu, ipiv, _ = scipy.linalg.lapack.dsytrf(T, lower=1)
    tiny = 1e-14 * max(np.abs(T).sum(axis=1).max(), np.finfo(float).tiny)
    n_neg = n_zero = 0
    det = 1.0
    k, n = 0, T.shape[0]
    while k < n:
        if ipiv[k] > 0:
            w = [lu[k, k]]
            det *= lu[k, k]
            k += 1
        else:
            blk = np.array([[lu[k, k], lu[k + 1, k]], [lu[k + 1, k], lu[k + 1, k + 1]]])
            w = np.linalg.eigvalsh(blk)
            det *= w[0] * w[1]
            k += 2
        n_neg += sum(1 for x in w if x < -tiny)
        n_zero += sum(1 for x in w if abs(x) <= tiny)
    return n_neg, n_zero, det


def det_scan_oracle(p: KGPencil, grid, refine_tol: float = 1e-13) -> list[float]:
    """Eigenvalues (with repetition) from sign changes of ``det T`` and jumps of ``n_neg``.

    Uses LAPACK's Bunch-Kaufman factorization only, independent of this
    package's kernels. A bracket where ``det T`` changes sign across a jump
    of one is closed by Brent's method; other brackets are bisected down to
    ``refine_tol`` relative width.
    """
    C, V = p.C.to_dense(), p.V.to_dense()
    eye = np.eye(p.n)

    def T(lam):
        return C + 2 * lam * V - lam * lam * eye

    def nneg(lam):
        n_neg, n_zero, _ = _oracle_inertia(T(lam))
        if n_zero:
            return nneg(lam + 1e-11 * max(1.0, abs(lam)))
        return n_neg

    def det(lam):
        return _oracle_inertia(T(lam))[2]

    lams = np.asarray(sorted(float(t) for t in grid))
    counts = [nneg(t) for t in lams]
    found = []

    def split(lo, nlo, hi, nhi):
        if nlo == nhi:
            return
        if abs(nhi - nlo) == 1:
            dlo, dhi = det(lo), det(hi)
            if dlo * dhi < 0:
                found.append(scipy.optimize.brentq(det, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))
                return
        mid = 0.5 * (lo + hi)
        if hi - lo <= refine_tol * max(1.0, abs(mid)) or mid in (lo, hi):
            found.extend([mid] * abs(nhi - nlo))
            return
        nm = nneg(mid)
        split(lo, nlo, mid, nm)
        split(mid, nm, hi, nhi)

    for i in range(len(lams) - 1):
        split(lams[i], counts[i], lams[i + 1], counts[i + 1])
    return sorted(found)


# ---------------------------------------------------------------------------
# output


EIG_COLUMNS = ["sector", "lambda", "side", "multiplicity", "residual", "semisimple_margin", "positive_flag"]


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_eigenvalue_csv(path, rows) -> None:
    """``rows`` are ``(sector_l, EigenvalueRecord)``; multiplicity includes the ``2l+1`` angular factor."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EIG_COLUMNS)
        for l, rec in rows:
            mult = rec.multiplicity * (2 * l + 1 if l is not None else 1)
            w.writerow(
                [
                    "" if l is None else l,
                    _fmt(rec.lam),
                    rec.side,
                    mult,
                    _fmt(rec.residual),
                    _fmt(rec.semisimple_margin),
                    rec.positivity,
                ]
            )


def write_eigenvector_csv(path, records) -> None:
    """Long format ``record, column, component, value`` keyed by record index."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record", "column", "component", "value"])
        for i, rec in enumerate(records):
            X = rec.eigenvectors
            for j in range(X.shape[1]):
                for k in range(X.shape[0]):
                    w.writerow([i, j, k, _fmt(X[k, j])])


def pencil_from_dense(h0: np.ndarray, v: np.ndarray, m: float) -> KGPencil:
    """Convenience constructor for tests and scripts."""
    return KGPencil(SymMatrix.from_dense(h0), SymMatrix.from_dense(v), m)
