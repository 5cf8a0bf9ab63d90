"""Command-line experiment runner.

Every subcommand writes ``<out>/<subcommand>.json`` (sorted keys, effective
config, seed, tail bounds and tolerances embedded) and, where the data is
tabular, CSV files next to it.  Exit status: 0 success, 2 config parse error,
3 precondition violation, 4 numerical failure; failures print a JSON error
object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .config import SUBCOMMANDS, ConfigError, RunConfig, config_file_load, options_for, resolve
from .families import (BubbleParams, PolyFamilyParams, asymptotics, calibrate_bubble_constant,
                       calibrate_poly_constant, equation_rhs, family_spec, singular_solution_check)
from .geometry import GeometryError, KernelParams, SphereParams, invert_points, kernel_K_batch, kernel_k_batch
from .iteration import candidate_residual, profile_nodes, run_iteration
from .quadrature.radial import QuadratureSpec, RadialProfile
from .regularity import (NonContractionError, ball_mask, contraction_solve, default_exponents,
                         draw_experiment, local_estimate_experiment, lq_norm, random_draw)
from .spheres import (BracketError, SampleDesign, difference_identity_residual, find_lambda_bar,
                      invariance_residual, violation_sweep)

EXIT_CONFIG, EXIT_PRECONDITION, EXIT_NUMERICAL = 2, 3, 4


class PreconditionError(ValueError):
    pass


# --- serialization -----------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, tuples to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _fmt_point(p):
    return " ".join(repr(float(v)) for v in np.atleast_1d(p))


# --- subcommands -----------------------------------------------------------------

def _riesz(cfg):
    return KernelParams.riesz(cfg["n"], cfg["alpha"])


def _base_spec(cfg, d):
    """QuadratureSpec from flags: --radius is an absolute truncation radius."""
    scale = math.sqrt(d)
    radius = cfg.values.get("radius")
    R = 1e8 * scale if radius is None else radius
    return QuadratureSpec(truncation_radius=R, resolution=cfg.values.get("resolution") or 16, scale=scale)


def _residual_table(member, spec, points):
    radii = np.linspace(0.0, 3.0 * member.scale, points)
    direction = np.eye(member.n)[0]
    rows = []
    for r in radii:
        x = np.asarray(member.center) + r * direction
        u = float(member(x[None, :])[0])
        rhs = equation_rhs(member, x, spec)
        rows.append((float(r), u, rhs, abs(u - rhs) / u))
    return rows


def run_geometry_check(cfg):
    rng = np.random.default_rng(cfg.seed)
    n, m = cfg["n"], cfg["samples"]
    if m < 1:
        raise PreconditionError("--samples must be positive")
    kr = KernelParams.riesz(n, cfg["alpha"])
    kp = KernelParams.power(n, cfg["p"])
    center = rng.normal(size=n)
    lam = float(rng.uniform(0.5, 2.0))
    s = SphereParams(center, lam)

    def exterior(size):
        d = rng.normal(size=(size, n))
        d /= np.linalg.norm(d, axis=1)[:, None]
        return center + lam * (1 + 10.0 ** rng.uniform(-3, 1, size))[:, None] * d

    xi, z = exterior(m), exterior(m)
    rx = np.linalg.norm(xi - center, axis=1)
    rz = np.linalg.norm(z - center, axis=1)
    lhs = (rz / lam) * (rx / lam) * np.linalg.norm(invert_points(s, xi) - invert_points(s, z), axis=1)
    dist = np.linalg.norm(xi - z, axis=1)
    dist_res = np.abs(lhs - dist) / np.maximum(dist, lam)
    inv_res = np.linalg.norm(invert_points(s, invert_points(s, xi)) - xi, axis=1) / rx
    K = kernel_K_batch(s, kr, xi, z)
    k = kernel_k_batch(s, kp, xi, z)
    tol = 1e-12
    results = {
        "sphere": {"center": center, "radius": lam},
        "distance_identity_max_residual": float(dist_res.max()),
        "involution_max_residual": float(inv_res.max()),
        "K_min": float(K.min()), "K_positive": int(np.sum(K > 0)),
        "k_min": float(k.min()), "k_positive": int(np.sum(k > 0)),
        "weight_exponent_riesz": kr.weight_exponent, "weight_exponent_power": kp.weight_exponent,
        "samples": m,
        "pass": bool(dist_res.max() <= tol and np.all(K > 0) and np.all(k > 0)),
    }
    return {"results": results, "tolerances": {"distance_identity": tol}, "tail_bounds": {}}, {}


def run_verify_bubble(cfg):
    k = _riesz(cfg)
    d = cfg["d"]
    base = _base_spec(cfg, d)
    spec = family_spec(k, d, base)
    cal = calibrate_bubble_constant(k, base, d)
    member = BubbleParams.make(k, cal.a, d, cfg["center"])
    rows = _residual_table(member, spec, cfg["points"])
    asym = asymptotics(member, spec)
    results = {"family": member.to_dict(), "calibration": cal.to_dict(),
               "max_residual": max(r[3] for r in rows),
               "residuals": [{"distance": r[0], "u": r[1], "rhs": r[2], "residual": r[3]} for r in rows],
               "beta": asym.beta, "beta_expected": asym.expected, "beta_ladder": asym.ladder_value}
    tails = {"calibration": cal.tail_bound}
    if cfg["grid"] is not None:
        if k.n > 3:
            raise PreconditionError("--grid cross-check needs n <= 3")
        g = calibrate_bubble_constant(k, base, d, method="grid", grid_resolution=cfg["grid"])
        results["grid_check"] = {"a": g.a, "cells_per_axis": cfg["grid"] + (1 - cfg["grid"] % 2),
                                 "relative_difference": abs(g.a - cal.a) / cal.a}
    results["pass"] = bool(results["max_residual"] <= 0.02)
    csvs = {"verify-bubble-residuals.csv": csv_text(["distance", "u", "rhs", "residual"], rows)}
    return {"results": results, "tolerances": {"residual": 0.02}, "tail_bounds": tails}, csvs


def run_verify_singular(cfg):
    k = _riesz(cfg)
    chk = singular_solution_check(k, QuadratureSpec(resolution=cfg["resolution"]))
    sub = np.asarray(chk.subcritical_norms)
    inc = np.diff(sub)
    ratios = inc[1:] / inc[:-1]
    growth = abs(chk.critical_norm_ratio - chk.critical_norm_predicted) / chk.critical_norm_predicted
    results = dict(chk.to_dict())
    results.update({"subcritical_increment_ratios": ratios, "critical_growth_error": growth,
                    "pass": bool(chk.max_residual <= 0.02 and growth <= 0.1 and np.all(np.abs(ratios) < 1))})
    rows = list(zip(chk.radii, chk.residuals))
    csvs = {"verify-singular-residuals.csv": csv_text(["radius", "residual"], rows)}
    return {"results": results, "tolerances": {"residual": 0.02, "critical_growth": 0.1},
            "tail_bounds": {}}, csvs


def run_verify_poly(cfg):
    n, p, d = cfg["n"], cfg["p"], cfg["d"]
    k = KernelParams.power(n, p)
    base = _base_spec(cfg, d)
    spec = family_spec(k, d, base)
    cal = calibrate_poly_constant(k, base, d)
    member = PolyFamilyParams.make(k, cal.a, d, cfg["center"])
    rows = _residual_table(member, spec, cfg["points"])
    asym = asymptotics(member, spec)
    kq = KernelParams.power(n, p, k.exponent + cfg["perturb"])
    radii = [r[0] for r in rows]
    perturbed = candidate_residual(member, kq, radii, family_spec(kq, d, base))
    results = {"family": member.to_dict(), "calibration": cal.to_dict(),
               "max_residual": max(r[3] for r in rows),
               "residuals": [{"distance": r[0], "u": r[1], "rhs": r[2], "residual": r[3]} for r in rows],
               "gamma_integral": asym.integral_value, "gamma_ladder": asym.ladder_value,
               "gamma_expected": asym.expected, "gamma_agreement": asym.agreement,
               "growth_constant": asym.empirical_bound_constant,
               "perturbed_q": kq.exponent, "perturbed_residual": perturbed}
    results["pass"] = bool(results["max_residual"] <= 0.02 and asym.agreement <= 0.02 and perturbed >= 0.1)
    csvs = {"verify-poly-residuals.csv": csv_text(["distance", "u", "rhs", "residual"], rows)}
    return {"results": results, "tolerances": {"residual": 0.02, "gamma_agreement": 0.02, "perturbed_min": 0.1},
            "tail_bounds": {"calibration": cal.tail_bound}}, csvs


def run_moving_spheres(cfg):
    k = _riesz(cfg)
    d = cfg["d"]
    cal = calibrate_bubble_constant(k, None, d)
    member = BubbleParams.make(k, cal.a, d, cfg["center"])
    center = np.asarray(member.center)
    scale = member.scale
    xs = [center] if cfg["x"] is None else [np.asarray(x, float) for x in cfg["x"]]
    design = SampleDesign(directions=cfg["directions"])
    asym = asymptotics(member)
    tol = cfg["tol"]
    results, lines, sweep_rows = [], [], []
    for i, x in enumerate(xs):
        if x.shape != (k.n,):
            raise PreconditionError(f"base point {list(x)} does not have dimension {k.n}")
        expected = math.sqrt(d + float(np.sum((x - center) ** 2)))
        lo = 0.1 * scale if cfg["lambda_min"] is None else cfg["lambda_min"]
        hi = 10.0 * expected if cfg["lambda_max"] is None else cfg["lambda_max"]
        res = find_lambda_bar(member, x, k, (lo, hi), tol, design, asym.beta, scale)
        row = res.to_dict()
        row["expected"] = expected
        row["relative_error"] = abs(res.lambda_bar - expected) / expected
        results.append(row)
        lines.append(json.dumps(_clean(row), sort_keys=True))
        if cfg["sweep"] > 0:
            for lam, bad in violation_sweep(member, x, k, np.linspace(lo, hi, cfg["sweep"]), design, asym.beta,
                                            scale):
                sweep_rows.append((i, _fmt_point(x), lam, int(bad)))
    csvs = {"moving-spheres.jsonl": "\n".join(lines) + "\n"}
    if sweep_rows:
        csvs["moving-spheres-sweep.csv"] = csv_text(["base_index", "base_point", "lambda", "violated"], sweep_rows)
    worst = max(r["relative_error"] for r in results)
    worst_identity = max(r["identity_residual"] for r in results)
    report = {"results": {"family": member.to_dict(), "beta": asym.beta, "points": results,
                          "max_relative_error": worst, "max_identity_residual": worst_identity,
                          "pass": bool(worst <= 0.01 and worst_identity <= 0.03)},
              "tolerances": {"bisection": 1e-4 * scale if tol is None else tol, "domination": design.tolerance,
                             "lambda_bar": 0.01, "identity": 0.03},
              "tail_bounds": {"calibration": cal.tail_bound}}
    return report, csvs


def run_invariance_check(cfg):
    rng = np.random.default_rng(cfg.seed)
    n, d = cfg["n"], cfg["d"]
    if n > 3:
        raise PreconditionError("invariance-check needs n <= 3")
    if cfg["mode"] == "riesz":
        if cfg["alpha"] is None:
            raise ConfigError("riesz mode needs --alpha", "alpha")
        k = KernelParams.riesz(n, cfg["alpha"])
        member = BubbleParams.make(k, calibrate_bubble_constant(k, None, d).a, d)
        perturbed = KernelParams.riesz(n, cfg["alpha"], k.exponent * 1.1)
    else:
        if cfg["p"] is None:
            raise ConfigError("power mode needs --p", "p")
        k = KernelParams.power(n, cfg["p"])
        member = PolyFamilyParams.make(k, calibrate_poly_constant(k, None, d).a, d)
        perturbed = KernelParams.power(n, cfg["p"], k.exponent * 1.1)
    scale = member.scale
    rows = []
    for i in range(cfg["samples"]):
        x = rng.normal(size=n) * 0.5 * scale
        lam_bar = math.sqrt(d + float(x @ x))
        lam = float(scale * rng.uniform(0.5, 1.5))
        spec = QuadratureSpec(truncation_radius=1e8 * max(lam, scale), resolution=cfg["resolution"],
                              angular_resolution=cfg["angular"])
        s = SphereParams(x, lam)
        eval_pt = x + rng.normal(size=n) * scale
        inv = invariance_residual(member, s, k, eval_pt[None, :], spec)
        s2 = SphereParams(x, float(lam_bar * rng.uniform(0.3, 0.8)))
        direction = rng.normal(size=n)
        direction /= np.linalg.norm(direction)
        xi = x + direction * s2.radius * rng.uniform(1.2, 4.0)
        dif = difference_identity_residual(member, s2, k, xi[None, :], spec, 0.5 * s2.radius)
        rows.append((i, _fmt_point(x), lam, _fmt_point(eval_pt), inv, s2.radius, _fmt_point(xi), dif))
    inv_max = max(r[4] for r in rows) if rows else 0.0
    dif_max = max(r[7] for r in rows) if rows else 0.0
    results = {"family": member.to_dict(), "max_invariance_residual": inv_max, "max_difference_residual": dif_max,
               "weight_exponent_critical": k.weight_exponent, "weight_exponent_perturbed": perturbed.weight_exponent,
               "samples": cfg["samples"],
               "pass": bool(inv_max <= 0.03 and dif_max <= 0.05 and k.weight_exponent == 0.0)}
    header = ["sample", "x", "lambda", "eval_point", "invariance_residual", "difference_lambda", "xi",
              "difference_residual"]
    return {"results": results, "tolerances": {"invariance": 0.03, "difference": 0.05},
            "tail_bounds": {"truncation_radius_factor": 1e8}}, {"invariance-check.csv": csv_text(header, rows)}


def run_local_estimate(cfg):
    rng = np.random.default_rng(cfg.seed)
    n = cfg["n"]
    if n > 3:
        raise PreconditionError("local-estimate needs n <= 3")
    alpha = n / 2 if cfg["alpha"] is None else cfg["alpha"]
    k = KernelParams.riesz(n, alpha)
    r0, nu0 = default_exponents(k)
    r = r0 if cfg["r"] is None else cfg["r"]
    nu = nu0 if cfg["nu"] is None else cfg["nu"]
    delta_bar = cfg["delta_bar"]
    target = delta_bar / 2 if cfg["delta_target"] is None else cfg["delta_target"]
    if not 0 < target <= delta_bar:
        raise PreconditionError(f"--delta-target must lie in (0, delta_bar = {delta_bar}], got {target}")
    grid = cfg["grid"] if cfg["grid"] is not None else {1: 256, 2: 48, 3: 16}[n]
    rows, out = [], []
    for i in range(cfg["draws"]):
        exp = draw_experiment(random_draw(rng, n), k, grid, r, nu, target)
        est = local_estimate_experiment(exp, delta_bar)
        con = contraction_solve(exp, cfg["cap"], delta_bar=delta_bar)
        m2 = ball_mask(exp.V, 2.0)
        err = lq_norm(exp.V, con.w.flat()[m2] - exp.u.flat()[m2], r)
        rec = err / max(lq_norm(exp.V, exp.u.flat()[m2], r), 1e-300)
        row = {"draw": i, "delta": exp.delta, "lhs": est.lhs, "u_norm": est.u_norm, "h_norm": est.h_norm,
               "ratio": est.ratio, "degenerate": est.degenerate, "contraction_factor": con.contraction_factor,
               "iterations": con.iterations, "recovery_error": rec}
        out.append(row)
        rows.append(tuple(row[c] for c in ("draw", "delta", "u_norm", "h_norm", "lhs", "ratio",
                                           "contraction_factor", "iterations", "recovery_error")))
    ratios = np.array([o["ratio"] for o in out]) if out else np.zeros(0)
    summary = {"draws": len(out), "max_contraction_factor": max((o["contraction_factor"] for o in out), default=0.0),
               "max_recovery_error": max((o["recovery_error"] for o in out), default=0.0),
               "ratio_max": float(ratios.max()) if ratios.size else 0.0,
               "ratio_mean": float(ratios.mean()) if ratios.size else 0.0}
    summary["pass"] = bool(summary["max_contraction_factor"] <= 0.5 and summary["max_recovery_error"] <= 0.02)
    results = {"kernel": k.to_dict(), "r": r, "nu": nu, "delta_target": target, "delta_bar": delta_bar,
               "grid": grid, "cap": cfg["cap"], "per_draw": out, "summary": summary}
    header = ["draw", "delta", "u_norm", "h_norm", "lhs", "ratio", "contraction_factor", "iterations",
              "recovery_error"]
    return {"results": results, "tolerances": {"contraction": 0.5, "recovery": 0.02, "solve": 1e-10},
            "tail_bounds": {}}, {"local-estimate.csv": csv_text(header, rows)}


def run_iterate(cfg):
    n, d, family = cfg["n"], cfg["d"], cfg["family"]
    if cfg["mode"] == "riesz":
        if cfg["alpha"] is None:
            raise ConfigError("riesz mode needs --alpha", "alpha")
        k = KernelParams.riesz(n, cfg["alpha"], cfg["mu"])
        crit = KernelParams.riesz(n, cfg["alpha"])
        if family == "poly":
            raise PreconditionError("riesz mode starts from --family bubble or zero")
    else:
        if cfg["p"] is None:
            raise ConfigError("power mode needs --p", "p")
        k = KernelParams.power(n, cfg["p"], cfg["q"])
        crit = KernelParams.power(n, cfg["p"])
        if family != "poly":
            raise PreconditionError("power mode starts from --family poly (u^-q needs a positive iterate)")
    if cfg["steps"] < 3:
        raise PreconditionError("--steps must be at least 3")
    nodes = profile_nodes(math.sqrt(d))
    spec = replace(family_spec(crit, d), tail_decay_exponent=None)
    tails = {}
    if family == "zero":
        u0 = RadialProfile(nodes, np.zeros_like(nodes), n)
    else:
        if family == "bubble":
            cal = calibrate_bubble_constant(crit, None, d)
            member = BubbleParams.make(crit, cal.a, d)
        else:
            cal = calibrate_poly_constant(crit, None, d)
            member = PolyFamilyParams.make(crit, cal.a, d)
        tails["calibration"] = cal.tail_bound
        u0 = RadialProfile.from_function(member.profile, nodes, n)
    trace = run_iteration(u0, k, spec, max_steps=cfg["steps"])
    results = dict(trace.to_dict())
    results.update({"kernel": k.to_dict(), "critical": k.is_critical, "family": family,
                    "trace": trace.steps})
    results["pass"] = bool(trace.classification == "converged" and trace.final_residual <= 1e-6) \
        if k.is_critical else bool(trace.classification != "converged")
    return {"results": results, "tolerances": {"converged_gap": 1e-6, "quadrature": 1e-6, "divergence_growth": 10.0},
            "tail_bounds": tails}, {"iterate-trace.csv": trace.to_csv()}


RUNNERS = {
    "geometry-check": run_geometry_check,
    "verify-bubble": run_verify_bubble,
    "verify-singular": run_verify_singular,
    "verify-poly": run_verify_poly,
    "moving-spheres": run_moving_spheres,
    "invariance-check": run_invariance_check,
    "local-estimate": run_local_estimate,
    "iterate": run_iterate,
}


# --- driver ------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


HELP = {
    "geometry-check": "inversion, distance identity and kernel positivity on random exterior samples",
    "verify-bubble": "calibrate the bubble constant and measure the equation residual",
    "verify-singular": "check the singular solution and its log-divergent norm",
    "verify-poly": "calibrate the power-mode family, asymptotics and exclusivity",
    "moving-spheres": "locate the critical sphere radius at one or more base points",
    "invariance-check": "Kelvin-transform invariance and difference identity on random spheres",
    "local-estimate": "contraction solve and local estimate over random draws",
    "iterate": "Picard iteration from a family member and trace classification",
}


def build_parser():
    parser = _Parser(prog="kelvinlab", description="Kelvin-transform integral equation experiments")
    parser.add_argument("--version", action="version", version=f"kelvinlab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name])
        sp.add_argument("--config", default=None, help="INI file with [common] and per-subcommand sections")
        for opt in options_for(name):
            sp.add_argument(f"--{opt.name}", dest=opt.dest, default=None, help=opt.help)
    return parser


def parse_config(argv) -> RunConfig:
    args = build_parser().parse_args(argv)
    if args.subcommand is None:
        raise ConfigError("a subcommand is required", "subcommand")
    flags = {k: v for k, v in vars(args).items() if k not in ("subcommand", "config")}
    file_values = config_file_load(args.config, args.subcommand) if args.config else None
    return resolve(args.subcommand, flags, file_values)


def run(cfg: RunConfig):
    """Execute one configured subcommand and write its report files; returns the report."""
    report, files = RUNNERS[cfg.subcommand](cfg)
    report.update({"subcommand": cfg.subcommand, "config": cfg.echo(), "seed": cfg.seed, "version": __version__})
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{cfg.subcommand}.json").write_text(dumps(report))
    for name, text in sorted(files.items()):
        (out / name).write_text(text)
    return report


def _fail(status, kind, exc, flag=None):
    err = {"error": {"status": status, "kind": kind, "message": str(exc), "type": type(exc).__name__}}
    if flag is not None:
        err["error"]["flag"] = flag
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return status


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc, exc.flag)
    try:
        report = run(cfg)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc, exc.flag)
    except (NonContractionError, BracketError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", exc)
    except (PreconditionError, GeometryError, ValueError) as exc:
        return _fail(EXIT_PRECONDITION, "precondition", exc)
    path = cfg.out_dir() / f"{cfg.subcommand}.json"
    sys.stdout.write(json.dumps({"report": str(path), "pass": report["results"].get("pass",
                     report["results"].get("summary", {}).get("pass"))}, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
