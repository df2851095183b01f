"""Acceptance criteria 1-11, each at its stated tolerance.

Every test records one PASS/FAIL line which the terminal summary prints
under "acceptance criteria".
"""

import csv
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, coulomb_pencil, random_damped_pencil, random_pencil_with_snorm
from kgpencil import cli
from kgpencil.eig import (
    all_eigenvalues,
    det_scan_oracle,
    eigenvalues_in,
    extremal_certificates,
    semisimplicity_certificate,
)
from kgpencil.gap import (
    analyze_gap,
    certify_strong_damping,
    compute_nu,
    form_bound_constants,
    g_of_lambda,
    rollnik_monte_carlo,
    rollnik_norm,
    v_sign,
)
from kgpencil.linalg import SymMatrix
from kgpencil.model import (
    Coulomb,
    Gaussian,
    RadialGrid,
    RadialProblem,
    Zero,
    build_h0,
    build_pencil,
    discrete_positivity_resolvent,
    najman_q_bounds,
)
from kgpencil.pencil import KGPencil, factorization_residual, root_functionals, shift_identity_residual, t_of_lambda
from kgpencil.reference import CoulombParams, coulomb_eigenvalue, coulomb_radial_function

ZE2 = 0.3
LAMBDA_10 = 3 / math.sqrt(10)


def record(num, ok, detail):
    ACCEPTANCE_LINES.append((num, bool(ok), detail))
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def _ground_plus(p):
    rep = analyze_gap(p, profile_points=0)
    recs = eigenvalues_in(p, rep.nu_plus, p.m, "plus_zone")
    return rep, recs


# ---------------------------------------------------------------------------


def test_criterion_01_coulomb_ground_state():
    errors = []
    t0 = time.perf_counter()
    for n in (1000, 2000, 4000, 8000):
        start = time.perf_counter()
        _, recs = _ground_plus(coulomb_pencil(n))
        elapsed = time.perf_counter() - start
        errors.append(abs(recs[0].lam - LAMBDA_10) / LAMBDA_10)
    total = time.perf_counter() - t0
    monotone = all(b < a for a, b in zip(errors, errors[1:]))
    ok = errors[-1] <= 5e-3 and monotone and elapsed <= 60.0
    detail = (
        "rel. errors " + ", ".join(f"{e:.2e}" for e in errors)
        + f"; N=8000 run {elapsed:.2f}s (ladder {total:.2f}s)"
    )
    assert record(1, ok, detail), detail


def test_criterion_02_coulomb_excited_levels(tmp_path):
    cfg_text = f"""
[problem]
potential = coulomb
ze2 = {ZE2}
m = 1.0
sectors = 0, 1
n = 8000
r_max = 60
grading = 2
[analysis]
rollnik = off
[output]
dir = {tmp_path / 'out'}
"""
    cfg_file = tmp_path / "coulomb.ini"
    cfg_file.write_text(cfg_text)
    assert cli.main(["analyze", str(cfg_file)]) == 0
    with open(tmp_path / "out" / "eigenvalues.csv") as fh:
        rows = list(csv.DictReader(fh))
    params = CoulombParams(ZE2)
    details, ok = [], True
    for k, l in ((2, 0), (2, 1), (3, 0)):
        sector = [r for r in rows if int(r["sector"]) == l and r["side"] == "plus_zone"]
        sector.sort(key=lambda r: float(r["lambda"]))
        row = sector[k - l - 1]
        ref = coulomb_eigenvalue(params, k, l).lam
        err = abs(float(row["lambda"]) - ref) / ref
        mult = int(row["multiplicity"])
        ok &= err <= 1e-2 and mult == 2 * l + 1
        details.append(f"({k},{l}) err {err:.2e} mult {mult}")
    assert record(2, ok, "; ".join(details))


def _radial_cases():
    yield "coulomb l=0", coulomb_pencil(4000, 0)
    # u ~ r^(l+1) near the origin: on the graded grid the first nodes sit at
    # r ~ 1e-6, so the exact min/max ratio drops below the strictness floor
    yield "coulomb l=1", coulomb_pencil(4000, 1, grading=1.0)
    yield "coulomb l=2", coulomb_pencil(4000, 2, grading=1.0)
    for l in (0, 1):
        yield f"gaussian l={l}", build_pencil(RadialProblem(RadialGrid(30, 2000, 1.5), Gaussian(1.2, 1.5), l, 1.0))
    yield "free l=0", build_pencil(RadialProblem(RadialGrid(40, 500, 1.0), Zero(), 0, 1.0))


def test_criterion_03_extremal_simplicity_positivity():
    ok, details = True, []
    for name, p in _radial_cases():
        rep = analyze_gap(p, profile_points=0)
        pad = 1e-6
        recs = eigenvalues_in(p, rep.nu_plus, rep.nu_plus + pad, "plus_zone")
        recs += eigenvalues_in(p, rep.nu_minus - pad, rep.nu_minus, "minus_zone")
        certs = extremal_certificates(recs, rep.nu_minus, rep.nu_plus, p)
        plus = [c for c in certs if c.which == "nu_plus"]
        minus = [c for c in certs if c.which == "nu_minus"]
        good = len(plus) == 1 and plus[0].simplicity and plus[0].positivity == "strictly_positive"
        good &= all(c.simplicity and c.positivity == "strictly_positive" for c in minus)
        ok &= good
        details.append(f"{name}:{'ok' if good else 'bad'}")

    # graded grid, l >= 1: every component still has one sign
    for l in (1, 2):
        p = coulomb_pencil(4000, l)
        rep = analyze_gap(p, profile_points=0)
        x = eigenvalues_in(p, rep.nu_plus, rep.nu_plus + 1e-6, "plus_zone")[0].vector
        one_signed = bool(np.all(x > 0) or np.all(x < 0))
        ok &= one_signed
        details.append(f"graded l={l} one-signed:{one_signed}")

    # ground eigenvector against the closed form
    p = coulomb_pencil(8000)
    _, recs = _ground_plus(p)
    grid = p.meta["grid"]
    u_num = recs[0].vector / np.sqrt(grid.weights)
    level = coulomb_eigenvalue(CoulombParams(ZE2), 1, 0)
    u_ref = coulomb_radial_function(CoulombParams(ZE2), level, grid.nodes, grid.weights)
    dev = float(np.max(np.abs(u_num - u_ref)) / np.max(np.abs(u_ref)))
    ok &= dev <= 1e-2
    details.append(f"ground vector max dev {dev:.2e}")
    assert record(3, ok, "; ".join(details))


def test_criterion_04_oracle_equivalence():
    rng = np.random.default_rng(2024)
    worst, bad = 0.0, 0
    for _ in range(200):
        n = int(rng.integers(1, 13))
        p = random_damped_pencil(rng, n)
        assert t_of_lambda(p, 0.0).to_dense().shape == (n, n)
        cert = certify_strong_damping(p)
        nu_minus, nu_plus = compute_nu(p, cert.lambda0)
        recs = all_eigenvalues(p, nu_minus, nu_plus)
        lams = sorted(r.lam for r in recs for _ in range(r.multiplicity))
        h0, v = p.H0.to_dense(), p.V.to_dense()
        radius = 1.05 * (np.abs(np.linalg.eigvalsh(v)).max() + math.sqrt(np.linalg.eigvalsh(h0).max()))
        oracle = det_scan_oracle(p, np.linspace(-radius, radius, 801))
        inside = sum(nu_minus < x < nu_plus for x in lams)
        if len(lams) != 2 * n or len(oracle) != 2 * n or inside:
            bad += 1
            continue
        worst = max(worst, float(np.max(np.abs(np.array(lams) - oracle))))
    ok = bad == 0 and worst <= 1e-8
    assert record(4, ok, f"200 pencils, count mismatches {bad}, max |diff| {worst:.1e}")


def test_criterion_05_gap_theorems():
    rng = np.random.default_rng(55)
    tol = 1e-10
    # violations keyed by (variant, s_norm < 1)
    violations = {(v, small): 0 for v in ("i", "ii", "iii") for small in (True, False)}
    delta_bad, order_bad, n_sign = 0, 0, 0
    for i in range(100):
        n = int(rng.integers(2, 11))
        sign = ("indefinite", "positive", "negative")[i % 3]
        target = rng.uniform(0.05, 0.95) if sign == "indefinite" else rng.uniform(0.05, 1.95)
        p = random_pencil_with_snorm(rng, n, target, sign)
        m = p.m
        consts = form_bound_constants(p)
        s = consts.s_norm
        cert = certify_strong_damping(p)
        assert cert.certified
        nu_minus, nu_plus = compute_nu(p, cert.lambda0)
        lams = [r.lam for r in all_eigenvalues(p, nu_minus, nu_plus, vectors=False)]
        if s < 1:
            violations["i", True] += sum(-m + s * m + tol < x < m - s * m - tol for x in lams)
        if sign == "positive":
            n_sign += 1
            violations["ii", s < 1] += sum(-m + s * m + tol < x < m - tol for x in lams)
        elif sign == "negative":
            n_sign += 1
            violations["iii", s < 1] += sum(-m + tol < x < m - s * m - tol for x in lams)
        d2, d3 = consts.delta2(m), consts.delta3(m)
        order_bad += d3 > d2 + 1e-15
        for delta in (consts.delta1(m), d2, d3):
            if sign == "indefinite" and delta < m:
                lo, hi = -m + delta, m - delta
            elif sign == "positive" and delta < 2 * m:
                lo, hi = -m + delta, m
            elif sign == "negative" and delta < 2 * m:
                lo, hi = -m, m - delta
            else:
                continue
            delta_bad += lo < nu_minus - 1e-8 or hi > nu_plus + 1e-8
    ok = sum(violations.values()) == 0 and delta_bad == 0 and order_bad == 0
    counts = ", ".join(
        f"{v}{'' if small else ' (s>=1)'} {violations[v, small]}"
        for v, small in (("i", True), ("ii", True), ("iii", True), ("ii", False), ("iii", False))
    )
    detail = (
        f"100 pencils ({n_sign} sign-definite); eigenvalues inside claimed gaps: {counts}; "
        f"delta containment failures {delta_bad}; delta3>delta2 {order_bad}"
    )
    assert record(5, ok, detail)


def test_criterion_06_semisimplicity():
    rng = np.random.default_rng(6)
    runs = [random_damped_pencil(rng, int(rng.integers(1, 13))) for _ in range(40)]
    runs += [coulomb_pencil(2000, l) for l in (0, 1)]
    min_ratio, worst_cross, count = math.inf, 0.0, 0
    for p in runs:
        cert = certify_strong_damping(p)
        nu_minus, nu_plus = compute_nu(p, cert.lambda0)
        if p.provenance == "radial":
            recs = eigenvalues_in(p, nu_plus, p.m, "plus_zone") + eigenvalues_in(p, nu_minus - 1e-6, nu_minus, "minus_zone")
        else:
            recs = all_eigenvalues(p, nu_minus, nu_plus)
        for r in recs:
            c = semisimplicity_certificate(r, p)
            min_ratio = min(min_ratio, c.margin / c.threshold)
            worst_cross = max(worst_cross, c.cross_check)
            count += 1
    ok = min_ratio >= 1.0 and worst_cross <= 1e-8
    assert record(6, ok, f"{count} eigenvalues, min margin/threshold {min_ratio:.3g}, max cross-check {worst_cross:.1e}")


def test_criterion_07_algebraic_identities():
    rng = np.random.default_rng(7)
    worst_shift, worst_fact = 0.0, 0.0
    for _ in range(50):
        n = int(rng.integers(1, 51))
        p = random_damped_pencil(rng, n)
        lam, mu = rng.uniform(-3, 3, 2)
        worst_shift = max(worst_shift, shift_identity_residual(p, lam, mu) / t_of_lambda(p, lam).norm_inf())
        worst_fact = max(worst_fact, factorization_residual(p, lam))
    ok = worst_shift <= 1e-12 and worst_fact <= 1e-10
    assert record(7, ok, f"shift identity {worst_shift:.1e}, factorization {worst_fact:.1e}")


def test_criterion_08_nu_computation(P2):
    rng = np.random.default_rng(8)
    worst_g, concave_bad = 0.0, 0
    pencils = [random_damped_pencil(rng, int(rng.integers(1, 13))) for _ in range(20)]
    for p in pencils:
        cert = certify_strong_damping(p)
        nu_minus, nu_plus = compute_nu(p, cert.lambda0)
        worst_g = max(worst_g, abs(g_of_lambda(p, nu_minus)), abs(g_of_lambda(p, nu_plus)))
    for _ in range(1000):
        p = pencils[int(rng.integers(len(pencils)))]
        a, b = np.sort(rng.uniform(-3, 3, 2))
        scale = max(p.scale(a), p.scale(b))
        if g_of_lambda(p, 0.5 * (a + b)) < 0.5 * (g_of_lambda(p, a) + g_of_lambda(p, b)) - 1e-10 * scale:
            concave_bad += 1
    nu = compute_nu(P2, 0.0)
    spectrum = sorted(r.lam for r in all_eigenvalues(P2, *nu))
    p2_err = max(abs(nu[0] + 0.7), abs(nu[1] - 1.3), *(abs(x - y) for x, y in zip(spectrum, (-1.5, -0.7, 1.3, 2.5))))
    ok = worst_g <= 1e-8 and concave_bad == 0 and p2_err <= 1e-9 and len(spectrum) == 4
    assert record(8, ok, f"max |g(nu)| {worst_g:.1e}, concavity failures {concave_bad}/1000, P2 max err {p2_err:.1e}")


def test_criterion_09_najman():
    grid = RadialGrid(60, 8000, 2.0)
    q = najman_q_bounds(Coulomb(ZE2), ZE2, 1.0, grid)
    err = max(abs(q.q_minus + 1.0), abs(q.q_plus))
    ok = q.applicable and err <= 1e-6
    assert record(9, ok, f"(q-, q+) = ({q.q_minus:.9g}, {q.q_plus:.9g})")


def test_criterion_10_rollnik():
    pot = Gaussian(1.2, 1.5)
    quad = rollnik_norm(pot)
    mc, mc_err = rollnik_monte_carlo(pot, 10**6, length_scale=1.5 / math.sqrt(2), seed=42)
    rel = abs(mc - quad.norm) / quad.norm
    ok = quad.applicable and rel <= 0.02
    inside = 0
    gap = quad.gap(1.0)
    if gap is not None:
        for l in (0, 1):
            p = build_pencil(RadialProblem(RadialGrid(30, 2000, 1.5), pot, l, 1.0))
            rep = analyze_gap(p, profile_points=0, rollnik=quad)
            recs = eigenvalues_in(p, rep.nu_plus, max(1.0, rep.nu_plus + 1e-6), "plus_zone")
            recs += eigenvalues_in(p, min(-1.0, rep.nu_minus - 1e-6), rep.nu_minus, "minus_zone")
            inside += sum(gap[0] < r.lam < gap[1] for r in recs)
            inside += rep.nu_minus > gap[0] or rep.nu_plus < gap[1]
    ok &= inside == 0
    assert record(10, ok, f"quadrature {quad.norm:.6f}, Monte-Carlo {mc:.6f} (rel {rel:.2e}), gap {gap}, eigenvalues inside {inside}")


def test_criterion_11_positivity_plumbing():
    ok, checked = True, 0
    for m in (0.5, 1.0, 2.0):
        for l in (0, 1, 3):
            for n, grading in ((8, 1.0), (30, 1.0), (200, 2.0), (2000, 1.5)):
                h0 = build_h0(RadialProblem(RadialGrid(20.0, n, grading), Zero(), l, m))
                for c in (0.1, 1.0, 10.0):
                    ok &= discrete_positivity_resolvent(h0, c)[0]
                    checked += 1
    reducible = discrete_positivity_resolvent(SymMatrix.diagonal([2.0, 3.0, 5.0]), 1.0)[0]
    ok &= not reducible
    assert record(11, ok, f"{checked} build_h0 cases positive, reducible case -> {reducible}")
