"""Command-line front end: ``kgpencil {analyze,scan,validate-coulomb,bounds} CONFIG``.

The configuration is an INI file::

    [problem]
    potential = coulomb        # coulomb | gaussian | zero | table | matrix
    ze2 = 0.3
    m = 1.0
    sectors = 0, 1, 2
    n = 4000
    r_max = 60
    grading = 2

    [analysis]
    najman_gamma = 0.3
    rollnik = on
    window = bound             # bound | full | "lo, hi"

    [solver]
    nu_tol = 1e-8
    eig_tol = 1e-9

    [output]
    dir = out

    [run]
    seed = 42

Exit codes: 0 success, 2 invalid configuration, 3 damping counterexample,
4 convergence failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import jsonfmt
from .eig import (
    CountingLawError,
    clamp_to_zones,
    eigenvalues_in,
    extremal_certificates,
    semisimplicity_certificate,
    write_eigenvalue_csv,
    write_eigenvector_csv,
)
from .gap import (
    BracketError,
    analyze_gap,
    apriori_intervals,
    form_bound_constants,
    g_of_lambda,
    rollnik_norm,
    v_sign,
)
from .linalg import ConvergenceError, ldlt_inertia
from .model import (
    BoundedTable,
    Coulomb,
    DiscretizationError,
    Gaussian,
    RadialGrid,
    RadialProblem,
    Shifted,
    Zero,
    build_pencil,
    najman_q_bounds,
)
from .pencil import KGPencil, load_synthetic_pencil, t_of_lambda
from .reference import CoulombParams, coulomb_eigenvalue

EXIT_OK, EXIT_CONFIG, EXIT_COUNTEREXAMPLE, EXIT_CONVERGENCE = 0, 2, 3, 4
DEFAULT_LADDER = (500, 1000, 2000, 4000, 8000)
DEFAULT_LEVELS = ((1, 0), (2, 0), (2, 1), (3, 0))
GROUND_THRESHOLD, EXCITED_THRESHOLD = 5e-3, 1e-2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    potential: str
    m: float = 1.0
    params: dict = field(default_factory=dict)
    sectors: tuple = (0,)
    n: int = 1000
    r_max: float = 60.0
    grading: float = 2.0
    h0_file: str | None = None
    v_file: str | None = None
    najman_gamma: float | None = None
    rollnik: bool = True
    window: str | tuple = "bound"
    profile_points: int = 41
    nu_tol: float = 1e-8
    eig_tol: float = 1e-9
    damping_samples: int = 200
    out_dir: Path = Path("out")
    eigenvectors: bool = False
    seed: int = 42
    ladder: tuple = DEFAULT_LADDER
    levels: tuple = DEFAULT_LEVELS

    @property
    def is_matrix(self) -> bool:
        return self.potential == "matrix"


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def load_config(path) -> RunConfig:
    """Parse and validate an INI run configuration; raises :class:`ConfigError`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    base = Path(path).resolve().parent
    try:
        return _parse(cp, base)
    except ConfigError:
        raise
    except (ValueError, KeyError, configparser.Error) as exc:
        raise ConfigError(str(exc)) from None


def _parse(cp: configparser.ConfigParser, base: Path) -> RunConfig:
    if not cp.has_section("problem"):
        raise ConfigError("missing [problem] section")
    pr = cp["problem"]
    kind = pr.get("potential", "").strip().lower()
    if kind not in ("coulomb", "gaussian", "zero", "table", "matrix"):
        raise ConfigError(f"unknown potential {kind!r}")
    cfg = RunConfig(potential=kind, m=pr.getfloat("m", 1.0))
    if not cfg.m > 0:
        raise ConfigError("m must be positive")
    if kind == "coulomb":
        cfg.params["ze2"] = pr.getfloat("ze2")
        if cfg.params["ze2"] is None or not 0 < cfg.params["ze2"] < 0.5:
            raise ConfigError("coulomb potential needs 0 < ze2 < 1/2")
    elif kind == "gaussian":
        cfg.params["depth"] = pr.getfloat("depth")
        cfg.params["width"] = pr.getfloat("width")
        if cfg.params["depth"] is None or not (cfg.params["width"] or 0) > 0:
            raise ConfigError("gaussian potential needs depth and a positive width")
    elif kind == "table":
        if "table" not in pr:
            raise ConfigError("table potential needs a 'table' CSV path")
        cfg.params["table"] = str(base / pr["table"])
    elif kind == "matrix":
        if "h0_file" not in pr or "v_file" not in pr:
            raise ConfigError("matrix input needs h0_file and v_file")
        cfg.h0_file, cfg.v_file = str(base / pr["h0_file"]), str(base / pr["v_file"])
    cfg.params["shift"] = pr.getfloat("shift", 0.0)

    if not cfg.is_matrix:
        cfg.sectors = tuple(_ints(pr.get("sectors", "0")))
        if not cfg.sectors or any(l < 0 for l in cfg.sectors):
            raise ConfigError("sectors must be a nonempty list of nonnegative integers")
        cfg.n = pr.getint("n", 1000)
        cfg.r_max = pr.getfloat("r_max", 60.0)
        cfg.grading = pr.getfloat("grading", 2.0)
        if cfg.n < 8 or not cfg.r_max > 0 or cfg.grading < 1:
            raise ConfigError("grid needs n >= 8, r_max > 0 and grading >= 1")
    else:
        cfg.sectors = (None,)

    if cp.has_section("analysis"):
        an = cp["analysis"]
        gamma = an.get("najman_gamma", "").strip()
        cfg.najman_gamma = float(gamma) if gamma else None
        if cfg.najman_gamma is not None and not 0 <= cfg.najman_gamma < 0.5:
            raise ConfigError("najman_gamma must satisfy 0 <= gamma < 1/2")
        cfg.rollnik = an.getboolean("rollnik", True)
        window = an.get("window", "full" if cfg.is_matrix else "bound").strip().lower()
        if window in ("bound", "full"):
            cfg.window = window
        else:
            lo_hi = _floats(window)
            if len(lo_hi) != 2 or not lo_hi[0] < lo_hi[1]:
                raise ConfigError("window must be 'bound', 'full' or 'lo, hi'")
            cfg.window = tuple(lo_hi)
        cfg.profile_points = an.getint("profile_points", 41)
    elif cfg.is_matrix:
        cfg.window = "full"
    if cp.has_section("solver"):
        sv = cp["solver"]
        cfg.nu_tol = sv.getfloat("nu_tol", cfg.nu_tol)
        cfg.eig_tol = sv.getfloat("eig_tol", cfg.eig_tol)
        cfg.damping_samples = sv.getint("damping_samples", cfg.damping_samples)
    if not (cfg.nu_tol > 0 and cfg.eig_tol > 0):
        raise ConfigError("tolerances must be positive")
    if cp.has_section("output"):
        out = cp["output"]
        cfg.out_dir = base / out.get("dir", "out")
        cfg.eigenvectors = out.getboolean("eigenvectors", False)
    else:
        cfg.out_dir = base / "out"
    if cp.has_section("run"):
        rn = cp["run"]
        cfg.seed = rn.getint("seed", 42)
        if "ladder" in rn:
            cfg.ladder = tuple(_ints(rn["ladder"]))
        if "levels" in rn:
            cfg.levels = tuple(tuple(int(x) for x in item.split(":")) for item in rn["levels"].replace(",", " ").split())
    return cfg


def make_potential(cfg: RunConfig):
    kind = cfg.potential
    if kind == "coulomb":
        pot = Coulomb(cfg.params["ze2"])
    elif kind == "gaussian":
        pot = Gaussian(cfg.params["depth"], cfg.params["width"])
    elif kind == "table":
        pot = BoundedTable.from_csv(cfg.params["table"])
    else:
        pot = Zero()
    c = cfg.params.get("shift", 0.0)
    return Shifted(pot, c) if c else pot


def make_pencil(cfg: RunConfig, l, n: int | None = None) -> KGPencil:
    if cfg.is_matrix:
        p = load_synthetic_pencil(cfg.h0_file, cfg.v_file, cfg.m)
        c = cfg.params.get("shift", 0.0)
        return p.shifted(c) if c else p
    grid = RadialGrid(cfg.r_max, cfg.n if n is None else n, cfg.grading)
    return build_pencil(RadialProblem(grid, make_potential(cfg), l, cfg.m))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("KGPENCIL_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# analysis of one sector


def _extras(cfg: RunConfig, p: KGPencil):
    najman = rollnik = None
    if not cfg.is_matrix:
        pot = p.meta["potential"]
        if cfg.najman_gamma is not None:
            najman = najman_q_bounds(pot, cfg.najman_gamma, cfg.m, p.meta["grid"])
        if cfg.rollnik:
            rollnik = rollnik_norm(pot)
    return najman, rollnik


def _window(cfg: RunConfig, p: KGPencil, nu_minus: float, nu_plus: float):
    if cfg.window == "full":
        cap = p.lambda_cap
        return (-cap, nu_minus), (nu_plus, cap)
    if cfg.window == "bound":
        # bound states in (-m, m) plus the gap endpoints themselves
        pad = 1e-6 * max(cfg.m, abs(nu_minus), abs(nu_plus))
        return (min(-cfg.m, nu_minus - pad), nu_minus), (nu_plus, max(cfg.m, nu_plus + pad))
    lo, hi = cfg.window
    return (lo, min(hi, nu_minus)), (max(lo, nu_plus), hi)


def analyze_sector(cfg: RunConfig, l) -> dict:
    """Gap report, eigenvalue records and certificates for one sector."""
    out = {"sector": l, "status": "ok", "failure": None, "gap": None, "records": [], "certificates": None}
    try:
        p = make_pencil(cfg, l)
        najman, rollnik = _extras(cfg, p)
        hint = 0.0 if cfg.params.get("shift", 0.0) == 0 else cfg.params["shift"]
        label = "matrix" if l is None else f"l={l}"
        report = analyze_gap(
            p, hint, cfg.nu_tol, najman, rollnik, None, cfg.profile_points, cfg.seed, label, cfg.damping_samples
        )
        out["gap"] = report
        if not report.damping.certified:
            out["status"] = "counterexample" if report.damping.status == "counterexample" else "inconclusive"
            out["failure"] = f"strong damping not certified ({report.damping.status})"
            return out
        records = []
        for (a, b), side in zip(_window(cfg, p, report.nu_minus, report.nu_plus), ("minus_zone", "plus_zone")):
            if a < b:
                records += eigenvalues_in(p, a, b, side, tol=cfg.eig_tol, seed=cfg.seed)
        records = clamp_to_zones(records, report.nu_minus, report.nu_plus)
        out["records"] = records
        semis = [semisimplicity_certificate(r, p) for r in records]
        extremal = extremal_certificates(records, report.nu_minus, report.nu_plus, p)
        out["certificates"] = {
            "sector": l,
            "semisimplicity": [
                {
                    "lambda": r.lam,
                    "margin": s.margin,
                    "threshold": s.threshold,
                    "passed": s.passed,
                    "cross_check": s.cross_check,
                    "flag": s.flag,
                }
                for r, s in zip(records, semis)
            ],
            "extremal": [c.as_dict() for c in extremal],
            "nu_plus_below_m": report.nu_plus < cfg.m,
        }
    except (ConvergenceError, BracketError, CountingLawError) as exc:
        out["status"], out["failure"] = "convergence_failure", f"{type(exc).__name__}: {exc}"
    return out


def _write_reports(cfg: RunConfig, results: list[dict]) -> None:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    gap = {"sectors": []}
    certs = {"sectors": []}
    rows = []
    for res in results:
        entry = {"sector": res["sector"], "status": res["status"], "failure": res["failure"]}
        if res["gap"] is not None:
            d = res["gap"].as_dict()
            if res["gap"].damping.status == "counterexample":
                d["counterexample"] = list(res["gap"].damping.vector)
            entry.update(d)
        gap["sectors"].append(entry)
        if res["certificates"] is not None:
            certs["sectors"].append(res["certificates"])
        rows += [(res["sector"], r) for r in res["records"]]
    (cfg.out_dir / "gap_report.json").write_text(jsonfmt.dumps(gap))
    (cfg.out_dir / "certificates.json").write_text(jsonfmt.dumps(certs))
    write_eigenvalue_csv(cfg.out_dir / "eigenvalues.csv", rows)
    if cfg.eigenvectors:
        write_eigenvector_csv(cfg.out_dir / "eigenvectors.csv", [r for _, r in rows])
    (cfg.out_dir / "summary.txt").write_text(_summary(cfg, results))


def _summary(cfg: RunConfig, results: list[dict]) -> str:
    lines = [f"potential: {cfg.potential}  m = {cfg.m:.17g}"]
    for res in results:
        head = "matrix input" if res["sector"] is None else f"sector l = {res['sector']}"
        lines.append("")
        lines.append(f"== {head}: {res['status']}")
        if res["failure"]:
            lines.append(f"   reason: {res['failure']}")
        rep = res["gap"]
        if rep is None:
            continue
        if rep.nu_minus is not None:
            lines.append(f"   gap (nu-, nu+) = ({rep.nu_minus:.12g}, {rep.nu_plus:.12g})")
        lines.append(f"   s_norm = {rep.constants.s_norm:.12g}")
        for iv in rep.intervals:
            if iv.applicable:
                flag = "  VIOLATED by computed gap" if iv.verified is False else ""
                lines.append(f"   {iv.label:<16} ({iv.lo:.10g}, {iv.hi:.10g}){flag}")
            else:
                lines.append(f"   {iv.label:<16} n/a: {iv.reason}")
        if res["records"]:
            lines.append("   eigenvalues:")
        for i, r in enumerate(res["records"]):
            extra = ""
            if cfg.potential == "coulomb" and res["sector"] is not None and r.side == "plus_zone" and r.lam < cfg.m:
                k = res["sector"] + 1 + sum(1 for q in res["records"][:i] if q.side == "plus_zone")
                ref = coulomb_eigenvalue(CoulombParams(cfg.params["ze2"], cfg.m), k, res["sector"]).lam
                extra = f"  closed form (k={k}) {ref:.12g}  rel.err {(r.lam - ref) / ref:+.3e}"
            lines.append(f"     {r.lam:.12g}  {r.side}  mult {r.multiplicity}{extra}")
    return "\n".join(lines) + "\n"


def cmd_analyze(cfg: RunConfig) -> int:
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(lambda l: analyze_sector(cfg, l), cfg.sectors))
    _write_reports(cfg, results)
    sys.stdout.write(_summary(cfg, results))
    statuses = {r["status"] for r in results}
    if "convergence_failure" in statuses:
        return EXIT_CONVERGENCE
    if statuses & {"counterexample", "inconclusive"}:
        return EXIT_COUNTEREXAMPLE
    return EXIT_OK


# ---------------------------------------------------------------------------


def cmd_scan(cfg: RunConfig, lo: float, hi: float, steps: int, sector=None, out=None) -> int:
    if steps < 2 or not lo < hi:
        raise ConfigError("scan needs --from < --to and --steps >= 2")
    l = cfg.sectors[0] if sector is None or cfg.is_matrix else sector
    p = make_pencil(cfg, l)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "g", "det_sign", "n_neg"])
    for lam in np.linspace(lo, hi, steps):
        f = ldlt_inertia(t_of_lambda(p, lam))
        w.writerow([format(float(lam), ".17g"), format(g_of_lambda(p, lam), ".17g"), int(f.det_sign), f.inertia.n_neg])
    if out:
        Path(out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_bounds(cfg: RunConfig) -> int:
    lines = []
    for l in cfg.sectors:
        p = make_pencil(cfg, l)
        najman, rollnik = _extras(cfg, p)
        consts = form_bound_constants(p)
        head = "matrix input" if l is None else f"sector l = {l}"
        lines.append(f"{head}: s_norm = {consts.s_norm:.12g}")
        lines.append(f"  {'label':<16} {'lo':>20} {'hi':>20}  note")
        for iv in apriori_intervals(consts, p.m, v_sign(p), najman, rollnik):
            if iv.applicable:
                lines.append(f"  {iv.label:<16} {iv.lo:>20.12g} {iv.hi:>20.12g}")
            else:
                lines.append(f"  {iv.label:<16} {'-':>20} {'-':>20}  {iv.reason}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def _level_value(records, k: int, l: int):
    plus = sorted(r.lam for r in records if r.side == "plus_zone")
    idx = k - l - 1
    return plus[idx] if idx < len(plus) else math.nan


def validate_coulomb(cfg: RunConfig):
    """Rows ``(k, l, lam_closed, n, lam_numeric, rel_err)`` and the overall verdict."""
    if cfg.potential != "coulomb" or cfg.params.get("shift", 0.0):
        raise ConfigError("validate-coulomb needs an unshifted coulomb potential")
    params = CoulombParams(cfg.params["ze2"], cfg.m)
    rows = []
    for l in sorted({l for _, l in cfg.levels}):
        ks = sorted(k for k, ll in cfg.levels if ll == l)
        for n in cfg.ladder:
            p = make_pencil(cfg, l, n)
            report = analyze_gap(p, 0.0, cfg.nu_tol, profile_points=0, seed=cfg.seed)
            if not report.damping.certified:
                raise ConvergenceError(f"damping not certified at l={l}, N={n}")
            recs = []
            if report.nu_plus < cfg.m:  # otherwise the grid holds no bound state and the level reads as nan
                recs = eigenvalues_in(p, report.nu_plus, cfg.m, "plus_zone", tol=cfg.eig_tol, vectors=False)
            for k in ks:
                ref = coulomb_eigenvalue(params, k, l).lam
                num = _level_value(recs, k, l)
                rows.append((k, l, ref, n, num, (num - ref) / ref))
    rows.sort(key=lambda r: (r[0], r[1], r[3]))
    ok = True
    final_n = max(cfg.ladder)
    for k, l in cfg.levels:
        seq = [abs(r[5]) for r in rows if r[0] == k and r[1] == l]
        final = [abs(r[5]) for r in rows if r[0] == k and r[1] == l and r[3] == final_n][0]
        thr = GROUND_THRESHOLD if (k, l) == (1, 0) else EXCITED_THRESHOLD
        if not final <= thr:
            ok = False
        if (k, l) == (1, 0) and not all(b < a for a, b in zip(seq, seq[1:])):
            ok = False
    return rows, ok


def cmd_validate_coulomb(cfg: RunConfig) -> int:
    rows, ok = validate_coulomb(cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "l", "lambda_closed", "n", "lambda_numeric", "rel_error"])
    for k, l, ref, n, num, err in rows:
        w.writerow([k, l, format(ref, ".17g"), n, format(num, ".17g"), format(err, ".17g")])
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "coulomb_validation.csv").write_text(buf.getvalue())
    sys.stdout.write(f"{'k':>2} {'l':>2} {'N':>6} {'closed form':>18} {'numeric':>18} {'rel. error':>11}\n")
    for k, l, ref, n, num, err in rows:
        sys.stdout.write(f"{k:>2} {l:>2} {n:>6} {ref:>18.12f} {num:>18.12f} {err:>+11.3e}\n")
    sys.stdout.write("PASS\n" if ok else "FAIL\n")
    return EXIT_OK if ok else EXIT_CONVERGENCE


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kgpencil", description="Klein-Gordon pencil spectral analysis")
    sub = ap.add_subparsers(dest="command", required=True)
    a = sub.add_parser("analyze", help="gap, eigenvalues and certificates")
    a.add_argument("config")
    s = sub.add_parser("scan", help="CSV of g(lambda), det sign and negative inertia")
    s.add_argument("config")
    s.add_argument("--from", dest="lo", type=float, required=True)
    s.add_argument("--to", dest="hi", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--sector", type=int, default=None)
    s.add_argument("--out", default=None, help="write CSV here instead of stdout")
    v = sub.add_parser("validate-coulomb", help="refinement ladder against closed forms")
    v.add_argument("config")
    b = sub.add_parser("bounds", help="print the a-priori interval table")
    b.add_argument("config")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "analyze":
            return cmd_analyze(cfg)
        if args.command == "scan":
            return cmd_scan(cfg, args.lo, args.hi, args.steps, args.sector, args.out)
        if args.command == "validate-coulomb":
            return cmd_validate_coulomb(cfg)
        return cmd_bounds(cfg)
    except (ConfigError, DiscretizationError, FileNotFoundError, ValueError) as exc:
        sys.stderr.write(f"kgpencil: invalid configuration: {exc}\n")
        return EXIT_CONFIG
    except (ConvergenceError, BracketError, CountingLawError) as exc:
        sys.stderr.write(f"kgpencil: convergence failure: {exc}\n")
        traceback.print_exc(file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
