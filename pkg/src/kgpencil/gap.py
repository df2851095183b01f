"""Strong-damping certificates, the spectral gap ``(nu_-, nu_+)`` and a-priori bounds.

In finite dimensions ``g(lam) = lambda_min(T(lam))`` is concave (a pointwise
minimum of the concave quadratics ``lam -> x^T T(lam) x``), positive exactly
on the gap, and its two zeros are the gap endpoints. Everything below is
built on that function and on inertia tests of ``T(lam)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from . import jsonfmt
from .linalg import (
    SymMatrix,
    extreme_eigenvalue,
    largest_sym_eigenvalue,
    ldlt_inertia,
    sym_eigen,
)
from .pencil import KGPencil, NotStronglyDampedAt, root_functionals, t_of_lambda

__all__ = [
    "BracketError",
    "DampingCertificate",
    "FormBoundConstants",
    "GapInterval",
    "GapReport",
    "RollnikResult",
    "g_of_lambda",
    "is_positive_definite",
    "certify_strong_damping",
    "compute_nu",
    "s_norm",
    "form_bound_constants",
    "v_sign",
    "apriori_intervals",
    "g_profile",
    "angular_kernel",
    "rollnik_norm",
    "rollnik_monte_carlo",
    "analyze_gap",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class BracketError(RuntimeError):
    pass


def g_of_lambda(p: KGPencil, lam: float) -> float:
    """Smallest eigenvalue of ``T(lam)``."""
    return extreme_eigenvalue(t_of_lambda(p, lam), "min")


def is_positive_definite(p: KGPencil, lam: float) -> bool:
    inertia = ldlt_inertia(t_of_lambda(p, lam)).inertia
    return inertia.n_neg == 0 and inertia.n_zero == 0


# ---------------------------------------------------------------------------
# damping


@dataclass(frozen=True)
class DampingCertificate:
    """Three-valued damping check.

    ``status`` is ``"certified"`` (``T(lambda0)`` is positive definite),
    ``"counterexample"`` (``vector`` has a nonpositive discriminant) or
    ``"inconclusive"``.
    """

    status: str
    lambda0: float | None = None
    g0: float | None = None
    vector: np.ndarray | None = None
    discriminant: float | None = None

    @property
    def certified(self) -> bool:
        return self.status == "certified"


def _golden_max(f, lo: float, hi: float, tol: float, max_iter: int = 200):
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def certify_strong_damping(
    p: KGPencil,
    hint: float = 0.0,
    intervals=None,
    n_samples: int = 200,
    seed: int = 42,
) -> DampingCertificate:
    """Look for ``lambda0`` with ``T(lambda0)`` positive definite.

    Tries ``hint``, then the midpoints of any applicable a-priori
    intervals, then maximizes the concave ``g`` by golden-section search.
    If none is positive, sampled vectors are screened for a nonpositive
    discriminant of their root quadratic.
    """
    candidates = [float(hint)]
    for iv in intervals or ():
        if iv.applicable and math.isfinite(iv.lo) and math.isfinite(iv.hi):
            candidates.append(0.5 * (iv.lo + iv.hi))
    for lam in candidates:
        if is_positive_definite(p, lam):
            return DampingCertificate("certified", lam, g_of_lambda(p, lam))

    cap = p.lambda_cap
    lam_star, g_star = _golden_max(lambda t: g_of_lambda(p, t), -cap, cap, 1e-12 * cap)
    if g_star > 0 and is_positive_definite(p, lam_star):
        return DampingCertificate("certified", lam_star, g_star)

    rng = np.random.default_rng(seed)
    trial = [np.linalg.eigh(t_of_lambda(p, lam_star).to_dense())[1][:, 0]] if p.n <= 2000 else []
    eye = np.eye(p.n) if p.n <= 64 else None
    if eye is not None:
        trial.extend(eye)
        for i in range(p.n):
            for j in range(i + 1, p.n):
                trial.append((eye[i] + eye[j]) / math.sqrt(2.0))
                trial.append((eye[i] - eye[j]) / math.sqrt(2.0))
    trial.extend(rng.standard_normal((n_samples, p.n)))
    for x in trial:
        try:
            root_functionals(p, x)
        except NotStronglyDampedAt as exc:
            return DampingCertificate("counterexample", vector=exc.vector, discriminant=exc.discriminant)
    return DampingCertificate("inconclusive", lam_star, g_star)


def compute_nu(p: KGPencil, lambda0: float, tol: float = 1e-8) -> tuple[float, float]:
    """Gap endpoints ``(nu_-, nu_+)`` around a certified ``lambda0``.

    Expands outward from ``lambda0`` until ``T`` loses definiteness, then
    bisects the definiteness test down to adjacent floating-point numbers.
    """
    if not is_positive_definite(p, lambda0):
        raise ValueError(f"T({lambda0}) is not positive definite")
    cap = p.lambda_cap
    ends = []
    for direction in (-1.0, 1.0):
        inside = float(lambda0)
        step = max(tol, 1e-3 * max(1.0, abs(lambda0)))
        while True:
            outside = lambda0 + direction * step
            if abs(outside) > cap:
                raise BracketError(f"no gap endpoint within |lambda| <= {cap:.6g}")
            if not is_positive_definite(p, outside):
                break
            inside = outside
            step *= 2.0
        while True:
            mid = 0.5 * (inside + outside)
            if mid == inside or mid == outside:
                break
            if is_positive_definite(p, mid):
                inside = mid
            else:
                outside = mid
        ends.append(0.5 * (inside + outside))
    nu_minus, nu_plus = ends
    scale = max(p.scale(nu_minus), p.scale(nu_plus))
    g_lo, g_hi = g_of_lambda(p, nu_minus), g_of_lambda(p, nu_plus)
    if abs(g_lo) > tol * scale or abs(g_hi) > tol * scale:
        raise BracketError(f"g at the gap ends is ({g_lo:.3e}, {g_hi:.3e}), not zero")
    mid = 0.5 * (nu_minus + nu_plus)
    if g_of_lambda(p, mid) < 0.5 * (g_lo + g_hi) - 1e-10 * scale:
        raise AssertionError("g failed the concavity check on the gap")
    return nu_minus, nu_plus


# ---------------------------------------------------------------------------
# form bounds


@dataclass(frozen=True)
class FormBoundConstants:
    """Certified form-bound pairs and ``s_norm = ||V H0^{-1/2}||``.

    ``pareto`` holds ``(a, b)`` with ``||Vx||^2 <= a|x|^2 + b||H0^{1/2}x||^2``;
    ``primed`` holds ``(a', b')`` with ``||Vx|| <= a'|x| + b'||H0^{1/2}x||``.
    """

    pareto: tuple
    primed: tuple
    s_norm: float

    def delta1(self, m: float) -> float:
        return min((a + b * m for a, b in self.primed if b < 1), default=math.inf)

    def delta2(self, m: float) -> float:
        return min((math.sqrt(a) + math.sqrt(b) * m for a, b in self.pareto if b < 1), default=math.inf)

    def delta3(self, m: float) -> float:
        return min((math.sqrt(a + b * m * m) for a, b in self.pareto if b < 1), default=math.inf)


def s_norm(p: KGPencil) -> float:
    """``||V H0^{-1/2}||``.

    Dense pencils: Lanczos on ``S^T S`` with ``S = V H0^{-1/2}``. Tridiagonal
    pencils with diagonal ``V``: bisection for the smallest ``theta`` with
    ``theta H0 - V^2`` positive semidefinite, which needs only inertia.
    """
    if p.H0.kind == "tridiagonal" and p.V.is_diagonal:
        v2 = p.V.square()
        hi = max(p.v_norm**2 / p.m**2, 1e-300)
        if ldlt_inertia(p.H0 * hi - v2).inertia.n_neg:
            hi *= 2.0
        lo = 0.0
        while hi - lo > 4 * np.finfo(float).eps * hi:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if ldlt_inertia(p.H0 * mid - v2).inertia.n_neg:
                lo = mid
            else:
                hi = mid
        return math.sqrt(hi) if p.v_norm > 0 else 0.0
    S = p.V.to_dense() @ p.h0_invsqrt
    if not np.any(S):
        return 0.0
    return math.sqrt(max(largest_sym_eigenvalue(lambda x: S.T @ (S @ x), p.n, tol=1e-13), 0.0))


def _lambda_max(A: SymMatrix) -> float:
    return extreme_eigenvalue(A, "max")


def form_bound_constants(p: KGPencil, b_grid=None) -> FormBoundConstants:
    """Optimal ``a(b) = max(0, lambda_max(V^2 - b H0))`` on a grid of ``b``.

    ``b = s_norm^2`` is always added, which makes the best ``delta_3``
    equal to ``s_norm * m``.
    """
    s = s_norm(p)
    bs = set(np.linspace(0.0, 0.99, 34).tolist() if b_grid is None else [float(b) for b in b_grid])
    if s * s < 1:
        bs.add(s * s)
    if any(not 0 <= b < 1 for b in bs):
        raise ValueError("form-bound parameters b must lie in [0, 1)")
    v2 = p.V.square()
    scale = max(v2.norm_inf(), p.H0.norm_inf())
    pareto = []
    for b in sorted(bs):
        a = max(0.0, _lambda_max(v2 - p.H0 * b))
        if b == s * s:
            # rounding noise around zero at the optimum
            a = 0.0 if a <= 1e-12 * scale else a
        pareto.append((a, b))
    primed = [(math.sqrt(a), math.sqrt(b)) for a, b in pareto]
    if s < 1:
        primed.append((0.0, s))
    bound = min(math.sqrt(a / p.m**2 + b) for a, b in pareto)
    if s > bound + 1e-8:
        raise AssertionError(f"s_norm {s} exceeds the form-bound estimate {bound}")
    return FormBoundConstants(tuple(pareto), tuple(primed), s)


def v_sign(p: KGPencil) -> str:
    """``"positive"`` (V >= 0), ``"negative"``, ``"zero"`` or ``"indefinite"``."""
    w = p.V.diag() if p.V.is_diagonal else sym_eigen(p.V)
    if not np.any(w):
        return "zero"
    if np.all(w >= 0):
        return "positive"
    if np.all(w <= 0):
        return "negative"
    return "indefinite"


# ---------------------------------------------------------------------------
# a-priori intervals


@dataclass(frozen=True)
class GapInterval:
    """An interval certified to be free of spectrum (``applicable`` only)."""

    label: str
    lo: float
    hi: float
    applicable: bool
    reason: str = ""
    # None until checked against computed nu_+-; False means the bound is violated
    verified: bool | None = None

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "lo": self.lo,
            "hi": self.hi,
            "applicable": self.applicable,
            "reason": self.reason,
            "verified": self.verified,
        }

    def checked(self, nu_minus: float, nu_plus: float, tol: float = 1e-8) -> "GapInterval":
        """Copy with ``verified`` set: does ``(lo, hi)`` sit inside ``[nu_minus, nu_plus]``?"""
        if not self.applicable:
            return self
        slack = tol * max(1.0, abs(nu_minus), abs(nu_plus))
        ok = self.lo >= nu_minus - slack and self.hi <= nu_plus + slack
        return replace(self, verified=bool(ok))


def _na(label: str, reason: str) -> GapInterval:
    return GapInterval(label, math.nan, math.nan, False, reason)


def apriori_intervals(consts: FormBoundConstants, m: float, sign: str, najman=None, rollnik=None) -> list[GapInterval]:
    """Spectrum-free intervals implied by the operator norm and the form bounds.

    ``sign`` is the output of :func:`v_sign`. ``najman`` (a
    :class:`~kgpencil.model.NajmanBounds`) and ``rollnik`` (a
    :class:`RollnikResult`) are optional extra criteria.
    """
    s = consts.s_norm
    nonneg = sign in ("positive", "zero")
    nonpos = sign in ("negative", "zero")
    out = []
    if s < 1:
        out.append(GapInterval("snorm-symmetric", -m + s * m, m - s * m, True))
    else:
        out.append(_na("snorm-symmetric", "s_norm >= 1"))
    if not nonneg:
        out.append(_na("snorm-nonneg", "V is not nonnegative"))
    elif s >= 2:
        out.append(_na("snorm-nonneg", "s_norm >= 2"))
    else:
        out.append(GapInterval("snorm-nonneg", -m + s * m, m, True))
    if not nonpos:
        out.append(_na("snorm-nonpos", "V is not nonpositive"))
    elif s >= 2:
        out.append(_na("snorm-nonpos", "s_norm >= 2"))
    else:
        out.append(GapInterval("snorm-nonpos", -m, m - s * m, True))

    for i, delta in enumerate((consts.delta1(m), consts.delta2(m), consts.delta3(m)), start=1):
        label = f"delta{i}"
        if sign == "zero" or (sign == "indefinite"):
            if delta < m:
                out.append(GapInterval(label, -m + delta, m - delta, True))
            else:
                out.append(_na(label, f"delta{i} >= m"))
        elif delta >= 2 * m:
            out.append(_na(label, f"delta{i} >= 2m"))
        elif nonneg:
            out.append(GapInterval(label, -m + delta, m, True))
        else:
            out.append(GapInterval(label, -m, m - delta, True))

    if najman is None:
        out.append(_na("pointwise-hardy", "not evaluated"))
    elif najman.applicable:
        out.append(GapInterval("pointwise-hardy", najman.q_minus, najman.q_plus, True))
    else:
        out.append(_na("pointwise-hardy", najman.reason))

    d1 = consts.delta1(m)
    if d1 < m:
        out.append(GapInterval("lower-profile", -(m - d1), m - d1, True))
    else:
        out.append(_na("lower-profile", "a' + b' m >= m"))

    if rollnik is None:
        out.append(_na("rollnik", "not evaluated"))
    elif rollnik.applicable and rollnik.norm < 4 * math.pi:
        t = math.sqrt(rollnik.norm / (4 * math.pi))
        out.append(GapInterval("rollnik", -m + t * m, m - t * m, True))
    else:
        out.append(_na("rollnik", rollnik.reason or "Rollnik norm >= 4 pi"))
    return out


def g_profile(p: KGPencil, lams) -> list[tuple[float, float]]:
    return [(float(t), g_of_lambda(p, t)) for t in lams]


# ---------------------------------------------------------------------------
# Rollnik norm of a radial W = V^2


def angular_kernel(r, s):
    """Average of ``1/|x - y|^2`` over directions with ``|x| = r``, ``|y| = s``."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    return np.log(np.abs((r + s) / (r - s))) / (2.0 * r * s)


@dataclass(frozen=True)
class RollnikResult:
    """``norm`` is ``||W||_R``, the square root of the double integral."""

    norm: float
    integral: float
    applicable: bool
    reason: str = ""

    def gap(self, m: float):
        if not self.applicable or self.norm >= 4 * math.pi:
            return None
        t = math.sqrt(self.norm / (4 * math.pi))
        return (-m + t * m, m - t * m)


def _radial_cutoff(w, start: float = 1.0) -> float:
    peak = max(abs(float(w(x))) * x * x for x in np.geomspace(1e-6, 1e3, 400))
    r = start
    while r < 1e6 and abs(float(w(r))) * r * r > 1e-17 * peak:
        r *= 1.5
    return r


def rollnik_norm(potential, r_cut: float | None = None, epsabs: float = 1e-13) -> RollnikResult:
    """Rollnik norm of ``W = V^2`` for a radial potential ``V``.

    Angular integration reduces the 6D integral to
    ``8 pi^2 int int W(r) W(s) r s log|(r+s)/(r-s)| dr ds``, evaluated by
    adaptive quadrature with the logarithmic singularity at ``s = r``
    passed as a breakpoint.
    """
    if getattr(potential, "coulomb_coefficient", 0.0) > 0:
        return RollnikResult(math.inf, math.inf, False, "V^2 ~ 1/r^4 at the origin: Rollnik integral diverges")

    def w(r):
        return float(np.asarray(potential(np.array([r])))[0]) ** 2

    # r^2 W(r) must stay bounded near the origin
    near = [w(t) * t * t for t in (1e-3, 1e-6, 1e-9)]
    if near[2] > 10 * near[0] + 1e-300 and near[2] > near[1]:
        return RollnikResult(math.inf, math.inf, False, "V^2 too singular at the origin")

    R = _radial_cutoff(w) if r_cut is None else float(r_cut)

    def inner(r):
        f = lambda s: w(s) * s * math.log(abs((r + s) / (r - s))) if s != r else 0.0  # noqa: E731
        val, _ = integrate.quad(f, 0.0, R, points=[r], limit=200, epsabs=epsabs)
        return w(r) * r * val

    total, _ = integrate.quad(inner, 0.0, R, limit=200, epsabs=epsabs)
    total *= 8 * math.pi**2
    if not math.isfinite(total):
        return RollnikResult(math.inf, math.inf, False, "Rollnik integral diverges")
    return RollnikResult(math.sqrt(total), total, True)


def rollnik_monte_carlo(potential, n_samples: int = 1_000_000, length_scale: float = 1.0, seed: int = 42):
    """Monte-Carlo estimate of ``||V^2||_R`` straight from the 6D integral.

    ``x`` is drawn from an isotropic normal with standard deviation
    ``length_scale``; the separation ``d = y - x`` has exponentially
    distributed length and uniform direction, which absorbs the ``1/|d|^2``
    singularity. Returns ``(norm, standard_error_of_norm)``.
    """
    rng = np.random.default_rng(seed)
    sig = float(length_scale)
    x = rng.standard_normal((n_samples, 3)) * sig
    rho = rng.exponential(sig, n_samples)
    u = rng.standard_normal((n_samples, 3))
    u /= np.linalg.norm(u, axis=1)[:, None]
    y = x + rho[:, None] * u
    wx = np.asarray(potential(np.linalg.norm(x, axis=1))) ** 2
    wy = np.asarray(potential(np.linalg.norm(y, axis=1))) ** 2
    px = np.exp(-0.5 * np.sum(x * x, axis=1) / sig**2) / (2 * math.pi * sig**2) ** 1.5
    # density of d: exp(-rho/sig) / (4 pi sig rho^2); times the kernel 1/rho^2
    weight = wx * wy / px * 4 * math.pi * sig * np.exp(rho / sig)
    mean = float(np.mean(weight))
    err = float(np.std(weight) / math.sqrt(n_samples))
    norm = math.sqrt(mean)
    return norm, 0.5 * err / max(norm, 1e-300)


# ---------------------------------------------------------------------------


@dataclass
class GapReport:
    """Everything known about the spectral gap of one pencil."""

    damping: DampingCertificate
    nu_minus: float | None
    nu_plus: float | None
    constants: FormBoundConstants
    intervals: list[GapInterval]
    profile: list[tuple[float, float]] = field(default_factory=list)
    label: str = ""

    @property
    def certificate_lambda(self) -> float | None:
        return self.damping.lambda0 if self.damping.certified else None

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "damping": self.damping.status,
            "nu_minus": self.nu_minus,
            "nu_plus": self.nu_plus,
            "certificate_lambda": self.certificate_lambda,
            "intervals": [iv.as_dict() for iv in self.intervals],
            "s_norm": self.constants.s_norm,
            "pareto": [list(ab) for ab in self.constants.pareto],
            "g_profile": [list(t) for t in self.profile],
        }

    def to_json(self) -> str:
        return jsonfmt.dumps(self.as_dict())


def analyze_gap(
    p: KGPencil,
    hint: float = 0.0,
    tol: float = 1e-8,
    najman=None,
    rollnik=None,
    b_grid=None,
    profile_points: int = 41,
    seed: int = 42,
    label: str = "",
    n_samples: int = 200,
) -> GapReport:
    """Form bounds, a-priori intervals, damping certificate, ``nu_+-`` and ``g`` samples."""
    consts = form_bound_constants(p, b_grid)
    intervals = apriori_intervals(consts, p.m, v_sign(p), najman, rollnik)
    cert = certify_strong_damping(p, hint, intervals, n_samples, seed)
    if not cert.certified:
        return GapReport(cert, None, None, consts, intervals, [], label)
    nu_minus, nu_plus = compute_nu(p, cert.lambda0, tol)
    intervals = [iv.checked(nu_minus, nu_plus) for iv in intervals]
    width = nu_plus - nu_minus
    lams = np.linspace(nu_minus - 0.5 * width, nu_plus + 0.5 * width, profile_points)
    return GapReport(cert, nu_minus, nu_plus, consts, intervals, g_profile(p, lams), label)
