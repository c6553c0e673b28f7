"""Command-line frontend: invariant suites and oracle-versus-formula tables.

Every table row carries both values, their difference, the tolerance and a
verdict.  Numbers are written as decimal strings so reports diff cleanly.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from fractions import Fraction
from typing import Callable

import numpy as np

SCHEMA = "eqindex.report/1"
DIGITS = 12


# formatting --------------------------------------------------------------------------------------


def fmt(x, digits: int = DIGITS) -> str:
    """Deterministic decimal string for ints, floats and complex numbers."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)
    z = complex(x)
    if z.imag == 0:
        return f"{z.real + 0.0:.{digits}e}"
    return f"{z.real + 0.0:.{digits}e}{z.imag + 0.0:+.{digits}e}j"


def row(name: str, lhs, rhs, tol: float, diff: float | None = None, **extra) -> dict:
    d = abs(complex(lhs) - complex(rhs)) if diff is None else diff
    out = {"name": name, "lhs": fmt(lhs), "rhs": fmt(rhs), "diff": fmt(d), "tol": fmt(tol),
           "pass": bool(d <= tol)}
    out.update({k: (v if isinstance(v, str) else fmt(v)) for k, v in extra.items()})
    return out


def residual_row(name: str, worst: float, tol: float, **extra) -> dict:
    return row(name, worst, 0.0, tol, diff=worst, **extra)


def emit(report: dict, fmt_name: str, stream) -> None:
    if fmt_name == "json":
        stream.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
        return
    rows = report.get("rows", [])
    keys = ["suite", "name", "lhs", "rhs", "diff", "tol", "pass"]
    extra = sorted({k for r in rows for k in r} - set(keys))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys + extra, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("true" if v is True else "false" if v is False else v) for k, v in r.items()})
    stream.write(buf.getvalue())


def parse_t_grid(spec: str) -> np.ndarray:
    try:
        a, b, n = spec.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--t-grid expects a:b:n, got {spec!r}") from exc
    if not (0 < a < b) or n < 2:
        raise argparse.ArgumentTypeError("--t-grid needs 0 < a < b and n >= 2")
    return np.geomspace(a, b, n)


def parse_ints(spec: str) -> tuple[int, ...]:
    return tuple(int(v) for v in spec.split(","))


def positive_float(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("tolerance must be positive")
    return v


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ENGINE_THREADS", "1")))
    except ValueError:
        return 1


# verify suites -----------------------------------------------------------------------------------


def suite_clifford(rng, tol: float | None) -> list[dict]:
    from .clifford import (build_rep, equivariant_supertrace_identity, planar_decompose, quantize,
                           random_endomorphism, random_rotation, symbol)
    from .exterior import MultiVector
    rows = []
    gen_worst = 0.0
    for n in (2, 4, 6):
        rep = build_rep(n)
        C = [rep.c(np.eye(n)[i]).to_complex().mat for i in range(n)]
        I = np.eye(len(C[0]))
        for i in range(n):
            for j in range(n):
                gen_worst = max(gen_worst, np.abs(C[i] @ C[j] + C[j] @ C[i] + 2 * (i == j) * I).max())
    rows.append(residual_row("clifford relations", gen_worst, tol or 1e-12))
    rt = 0.0
    for n in (2, 4):
        for _ in range(10):
            v = rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n)
            u = MultiVector.from_array(n, v)
            rt = max(rt, (symbol(quantize(u, exact=False)) - u).norm())
    rows.append(residual_row("symbol o quantize", rt, tol or 1e-12))
    worst = worst_tan = 0.0
    for n in (2, 4):
        for b in range(2, n + 1, 2):
            for _ in range(10):
                dec = planar_decompose(random_rotation(b, rng))
                A = random_endomorphism(n, rng)
                lhs, rhs = equivariant_supertrace_identity(A, dec, n - b)
                worst = max(worst, abs(complex(lhs) - complex(rhs)) / (1 + abs(complex(rhs))))
                # endomorphisms generated by tangential Clifford elements
                v = rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n)
                u = MultiVector.from_array(n, v).restrict((1 << (n - b)) - 1)
                lhs, rhs = equivariant_supertrace_identity(quantize(u, exact=False), dec, n - b)
                worst_tan = max(worst_tan, abs(complex(lhs) - complex(rhs)) / (1 + abs(complex(rhs))))
    rows.append(residual_row("equivariant supertrace identity (arbitrary A)", worst, tol or 1e-10))
    rows.append(residual_row("equivariant supertrace identity (tangential A)", worst_tan, tol or 1e-10))
    return rows


def suite_charforms(rng, tol: float | None) -> list[dict]:
    from .charforms import FormMatrix, a_hat, det_leibniz, det_sqrt, random_curvature
    rows = []
    worst_sq = worst_ah = 0
    for n in (2, 4, 6):
        R = random_curvature(n, n, rng)
        M = FormMatrix.identity(n, n) + R.scale(1)
        s = det_sqrt(M)
        worst_sq = max(worst_sq, (s.wedge(s) - det_leibniz(M)).norm())
        ah = a_hat(R)
        worst_ah = max(worst_ah, abs(complex(ah.scalar_part()) - 1))
    rows.append(residual_row("det^{1/2} squared = det", float(worst_sq), tol or 0.0))
    rows.append(residual_row("A-hat scalar part = 1", float(worst_ah), tol or 0.0))
    return rows


def suite_mehler(rng, tol: float | None) -> list[dict]:
    from .charforms import random_curvature, random_invariant_curvature
    from .clifford import rotation_from_half_angles
    from .exterior import GQ
    from .mehler import I_HR, I_HR_by_integration, hermite_heat_kernel, mehler_kernel_B
    rows = []
    g = np.linspace(-2, 2, 9)
    worst = 0.0
    for t in (0.1, 0.5, 1.0):
        H = hermite_heat_kernel(g, g, t, 1.0, 200)
        M = np.array([[mehler_kernel_B(np.eye(1), [x], [y], t) for y in g] for x in g])
        worst = max(worst, float(np.max(np.abs(M - H)) / np.max(np.abs(H))))
    rows.append(residual_row("Mehler vs Hermite expansion (normwise relative)", worst, tol or 1e-8))
    bad = 0
    count = 0
    half_pool = [(GQ(3) / 5, GQ(4) / 5), (GQ(5) / 13, GQ(12) / 13), (GQ(0), GQ(1))]
    for a in (0, 2, 4):
        for b in (2, 4, 6):
            if a + b > 6:
                continue
            n = a + b
            Rp = random_curvature(a, n, rng, a=a) if a else None
            half = sorted(half_pool[:b // 2], key=lambda p: math.atan2(float(p[1]), float(p[0])))
            dec = rotation_from_half_angles(half)
            Rpp = random_invariant_curvature(dec, n, rng, a=a)
            t = Fraction(int(rng.integers(1, 6)), 5)
            x = I_HR(Rp, Rpp, dec, t, prefactor=False)
            y = I_HR_by_integration(Rp, Rpp, dec, t, prefactor=False)
            bad += int(x != y)
            count += 1
    rows.append(residual_row("I_HR closed form = integration (exact mismatches)", float(bad), tol or 0.0,
                             cases=count))
    return rows


def hand_model_symbol(R):
    """|xi|^2 + (i/2) R_ij x^j xi_i - (1/16) R_ij ^ R_ik x^j x^k + i tau, built term by term."""
    from gmpy2 import mpq

    from .exterior import GQ
    from .getzler import VolterraExpr
    n = R.size
    z = (0,) * n
    terms: dict = {}

    def add(key, c):
        terms[key] = terms.get(key, GQ(0)) + c

    for i in range(n):
        add((0, z, tuple(2 * (j == i) for j in range(n)), 0, 0), GQ(1))
    add((0, z, z, 1, 0), GQ(0, 1))
    for i in range(n):
        for j in range(n):
            for m, c in R.entries[i][j].terms.items():
                add((m, tuple(int(l == j) for l in range(n)), tuple(int(l == i) for l in range(n)), 0, 0),
                    GQ(0, mpq(1, 2)) * c)
            for k in range(n):
                w = R.entries[i][j].wedge(R.entries[i][k])
                for m, c in w.terms.items():
                    add((m, tuple((l == j) + (l == k) for l in range(n)), z, 0, 0), -GQ(mpq(1, 16)) * c)
    return VolterraExpr(n, terms)


def suite_getzler(rng, tol: float | None) -> list[dict]:
    from .charforms import random_curvature
    from .getzler import composition_defect, model_of_dirac_squared, random_symbol
    rows = []
    bad = 0
    for i in range(20):
        n = (2, 4)[i % 2]
        R = random_curvature(n, n, rng)
        bad += int(model_of_dirac_squared(R) != hand_model_symbol(R))
    rows.append(residual_row("model of D^2 = H_R + i tau (exact mismatches)", float(bad), tol or 0.0))
    excess = -math.inf
    for i in range(50):
        n = (2, 4)[i % 2]
        p = random_symbol(rng, n, 3, True)
        q = random_symbol(rng, n, 3, i % 3 != 0)
        r = composition_defect(p, q)
        excess = max(excess, r["defect_order"] - (r["m1"] + r["m2"] - 1))
    rows.append(residual_row("composition defect order excess", float(max(excess, 0)), 0.0,
                             worst_excess=int(excess)))
    return rows


def suite_twisted(rng, tol: float | None) -> list[dict]:
    from .twisted import (conformal_deform, hochschild_b, random_element, random_selfadjoint_element,
                          random_triple, twisted_cocycle)
    rows = []
    conf = cyc = bt = 0.0
    for _ in range(50):
        T = random_triple(rng)
        h = random_selfadjoint_element(T, rng)
        Th = conformal_deform(T, h)
        half = conformal_deform(T, h / 2).sigma
        for k in (0, 1):
            args = [random_element(T, rng) for _ in range(2 * k + 1)]
            lhs = twisted_cocycle(Th, k, args)
            rhs = twisted_cocycle(T, k, [half(a) for a in args])
            conf = max(conf, abs(lhs - rhs))
            rot = args[-1:] + args[:-1]
            cyc = max(cyc, abs(twisted_cocycle(T, k, rot) - twisted_cocycle(T, k, args)))
            bargs = [random_element(T, rng) for _ in range(2 * k + 2)]
            bt = max(bt, abs(hochschild_b(T, k, bargs)))
    rows.append(residual_row("conformal invariance", conf, tol or 1e-12))
    rows.append(residual_row("cyclicity", cyc, tol or 1e-10))
    rows.append(residual_row("b tau = 0", bt, tol or 1e-10))
    return rows


SUITES: dict[str, Callable] = {
    "charforms": suite_charforms,
    "clifford": suite_clifford,
    "getzler": suite_getzler,
    "mehler": suite_mehler,
    "twisted": suite_twisted,
}


def cmd_verify(args) -> dict:
    names = sorted(SUITES) if args.suite == "all" else [args.suite]
    rows = []
    for name in names:
        rng = np.random.default_rng(args.seed)
        for r in SUITES[name](rng, args.tol):
            rows.append({"suite": name, **r})
    return {"command": "verify", "suite": args.suite, "rows": rows}


# density -----------------------------------------------------------------------------------------


def cmd_density(args) -> dict:
    from .density import density_via_model, load_fixed_points, local_density
    try:
        with open(args.input) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{args.input}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from exc
    comps = load_fixed_points(data)
    rows, total = [], 0j
    tol = args.tol or 1e-10
    for i, c in enumerate(comps):
        d = complex(local_density(c)) * c.weight
        m = complex(density_via_model(c)) * c.weight
        total += d
        rows.append(row(c.label or f"component {i}", d, m, tol, a=c.a, b=c.b, lift_sign=c.lift_sign))
    return {"command": "density", "input": os.path.basename(args.input), "rows": rows, "total": fmt(total)}


# lefschetz ---------------------------------------------------------------------------------------


ISOS = {"id": 0, "rot90": 1, "inv": 2, "rot270": 3}


def cmd_lefschetz(args) -> dict:
    from . import oracle as orc
    tol = args.tol or 1e-8
    t_grid = args.t_grid if args.t_grid is not None else np.array([0.05, 0.1, 0.2, 0.5, 1.0])
    if args.geometry == "sphere":
        iso = orc.SphereRotation(args.theta, args.lift_sign)
        res = orc.lefschetz_number(orc.SphereModel(), iso, t_grid, tol)
        comps = orc.sphere_fixed_points(iso)
    else:
        model = orc.TorusModel(args.spin, args.cutoff)
        iso = orc.TorusIsometry.rotation(ISOS[args.iso], args.translation, args.lift_sign)
        res = orc.lefschetz_number(model, iso, t_grid, tol)
        comps = orc.torus_fixed_points(model, iso)
    rows = [row(f"heat t={fmt(t, 4)} vs density", h, res["density"], tol, t=float(t))
            for t, h in zip(t_grid, res["heat"])]
    rows.append(row("kernel vs density", res["kernel"], res["density"], tol))
    rows.append(residual_row("heat t-spread", res["heat_spread"], 1e-10))
    return {"command": "lefschetz", "geometry": args.geometry, "lift_sign": getattr(iso, "lift_sign", 1),
            "fixed_points": [c.label for c in comps], "rows": rows}


# asymptote / cocycle -----------------------------------------------------------------------------


def _torus_functions(rng, k: int):
    from .oracle import TrigPoly
    fs = [TrigPoly.const(1.0) + TrigPoly.cos((1, 0), 0.5)]
    pool = [TrigPoly.sin((1, 0)) + TrigPoly.cos((0, 1), 0.3), TrigPoly.sin((0, 1)) + TrigPoly.cos((1, 1), 0.2)]
    for j in range(2 * k):
        f = pool[j % 2]
        amp = float(rng.uniform(0.5, 1.5))
        fs.append(f * amp)
    return fs


def cmd_asymptote(args) -> dict:
    from . import oracle as orc
    if args.k != 1:
        raise ValueError("the torus oracle supports k = 1")
    rng = np.random.default_rng(args.seed)
    model = orc.TorusModel((0, 0), args.cutoff)
    fs = _torus_functions(rng, args.k)
    t_grid = args.t_grid if args.t_grid is not None else orc.geometric_grid(0.1, 0.5, 10)
    alpha = args.alpha
    vals = orc.torus_pk_series(model, fs, alpha, t_grid)
    p = -(sum(alpha) + args.k)
    fit = orc.smalltime_fit(vals, t_grid, p, min(6, len(t_grid) - 2))
    lead = fit["coefficients"][p]
    if sum(alpha) == 0:
        pred = -1j / (2 * math.pi) * orc.transverse_integral(fs)
        tol = args.tol or 0.02
        rows = [row("t^-1 coefficient (relative)", lead, pred, tol, diff=abs(lead / pred - 1),
                    residual=fit["residual"])]
    else:
        scale_vals = orc.torus_pk_series(model, fs, (0,) * len(alpha), t_grid)
        scale = abs(orc.smalltime_fit(scale_vals, t_grid, -args.k, min(6, len(t_grid) - 2))["coefficients"][-args.k])
        tol = args.tol or 1e-3
        rows = [row(f"t^{p} coefficient / alpha=0 scale", lead / scale, 0.0, tol, residual=fit["residual"])]
    return {"command": "asymptote", "seed": args.seed, "alpha": list(alpha), "rows": rows}


def cmd_cocycle(args) -> dict:
    from . import oracle as orc
    from .density import AffineIsometry, cm_component
    if args.phi != "id":
        raise ValueError("only --phi id has a transverse fundamental value on the torus")
    rng = np.random.default_rng(args.seed)
    model = orc.TorusModel((0, 0), args.cutoff)
    fs = _torus_functions(rng, args.k)
    comps = orc.torus_fixed_points(model, orc.TorusIsometry.identity())
    words = [AffineIsometry.identity(2)] * (2 * args.k + 1)
    cm = cm_component(comps, words, [f.smooth() for f in fs], args.k)
    t_grid = args.t_grid if args.t_grid is not None else orc.geometric_grid(0.1, 0.5, 10)
    vals = orc.torus_pk_series(model, fs, (0,) * (2 * args.k), t_grid)
    fit = orc.smalltime_fit(vals, t_grid, -args.k, min(6, len(t_grid) - 2))
    spectral = fit["coefficients"][-args.k] / math.factorial(2 * args.k)
    tol = args.tol or 1e-6
    return {"command": "cocycle", "k": args.k, "phi": args.phi, "seed": args.seed,
            "rows": [row("CM component vs heat residue / (2k)!", cm, spectral, tol, residual=fit["residual"])]}


# twisted -----------------------------------------------------------------------------------------


def cmd_twisted(args) -> dict:
    from . import oracle as orc
    from .twisted import (Idempotent, conformal_deform, dimension_index, pair_with_idempotent,
                          random_selfadjoint_element, random_triple, triple_from_json, twisted_index)
    rng = np.random.default_rng(args.seed)
    tol = args.tol or 1e-10
    rows = []
    if args.input:
        with open(args.input) as fh:
            T = triple_from_json(json.load(fh))
    else:
        T = random_triple(rng)
    # spectral projection onto the top eigenvector of a selfadjoint element lies in the algebra
    w, V = np.linalg.eigh(random_selfadjoint_element(T, rng, 1.0))
    top = V[:, w > (w[-1] + w[-2]) / 2]
    e = top @ top.conj().T
    E = Idempotent(e, 1)
    ind = twisted_index(T, E)
    rows.append(row("twisted index vs dimension index", ind, dimension_index(T, E), tol))
    Th = conformal_deform(T, random_selfadjoint_element(T, rng))
    for k in (0, 1, 2):
        rows.append(row(f"pairing k={k} vs index", pair_with_idempotent(T, E, k), ind, 1e-8))
        rows.append(row(f"deformed pairing k={k} vs index", pair_with_idempotent(Th, E, k), ind, 1e-8))
    model = orc.TorusModel((1, 1), args.cutoff)
    tp = orc.truncated_projection(model, args.degree)
    pairing = orc.torus_pairing(tp)
    bf = orc.brute_force_index(tp) if args.brute_force else None
    ref = -tp.degree
    rows.append(row(f"torus pairing (cutoff {args.cutoff}) vs -degree", pairing, ref, 0.1,
                    chern=tp.chern))
    if bf is not None:
        rows.append(row("brute-force index vs -degree", bf["index"], ref, 0.0, gap=bf["gap"]))
    return {"command": "twisted", "seed": args.seed, "rows": rows}


# entry point -------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=positive_float, default=None, help="override the default tolerance")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--t-grid", type=parse_t_grid, default=None, metavar="a:b:n")
    common.add_argument("--cutoff", type=int, default=40, help="momenta per axis on the torus")

    p = argparse.ArgumentParser(prog="eqindex", description="Local equivariant index toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", parents=[common], help="run an invariant suite")
    v.add_argument("suite", choices=sorted(SUITES) + ["all"])

    d = sub.add_parser("density", parents=[common], help="densities of fixed-point components")
    d.add_argument("--input", required=True)

    lf = sub.add_parser("lefschetz", parents=[common], help="spectral vs fixed-point Lefschetz number")
    lf.add_argument("--geometry", choices=("torus", "sphere"), default="torus")
    lf.add_argument("--iso", choices=sorted(ISOS), default="inv")
    lf.add_argument("--spin", type=parse_ints, default=(0, 0))
    lf.add_argument("--translation", type=lambda s: tuple(float(v) for v in s.split(",")), default=(0.0, 0.0))
    lf.add_argument("--theta", type=float, default=math.pi / 3)
    lf.add_argument("--lift-sign", type=int, choices=(1, -1), default=1)

    a = sub.add_parser("asymptote", parents=[common], help="fitted vs predicted small-time coefficient")
    a.add_argument("--geometry", choices=("torus",), default="torus")
    a.add_argument("--k", type=int, default=1)
    a.add_argument("--alpha", type=parse_ints, default=(0, 0))

    c = sub.add_parser("cocycle", parents=[common], help="CM component vs heat residue")
    c.add_argument("--geometry", choices=("torus",), default="torus")
    c.add_argument("--k", type=int, default=1)
    c.add_argument("--phi", default="id")

    t = sub.add_parser("twisted", parents=[common], help="twisted cocycles and index pairings")
    t.add_argument("--input", default=None, help="triple JSON (D, gamma, generators, optional h)")
    t.add_argument("--degree", type=int, default=1)
    t.add_argument("--brute-force", action="store_true", help="also compute the brute-force index")
    return p


COMMANDS = {"verify": cmd_verify, "density": cmd_density, "lefschetz": cmd_lefschetz,
            "asymptote": cmd_asymptote, "cocycle": cmd_cocycle, "twisted": cmd_twisted}


def main(argv=None, stream=None) -> int:
    stream = sys.stdout if stream is None else stream
    args = build_parser().parse_args(argv)
    try:
        report = COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"eqindex {args.command}: error: {exc}", file=sys.stderr)
        return 2
    report.update({"schema": SCHEMA, "seed": args.seed, "threads": _threads()})
    if args.tol is not None:
        report["tol"] = fmt(args.tol)
    emit(report, args.format, stream)
    return 0 if all(r["pass"] for r in report.get("rows", [])) else 1


if __name__ == "__main__":
    sys.exit(main())
