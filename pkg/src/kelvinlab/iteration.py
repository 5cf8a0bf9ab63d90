"""Picard iteration for the general-exponent equations

    riesz:  u(x) = int u(y)^mu |x - y|^(alpha-n) dy
    power:  u(x) = int |x - y|^p u(y)^-q dy

on radial profiles (any n) or, for cross-checks, on grids (n <= 2).  Runs are
classified from their traces; every non-critical finding is demonstrative only.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import KernelParams
from .quadrature.cells import sphere_area
from .quadrature.grid_potential import riesz_potential_on_grid
from .quadrature.grids import GridFunction
from .quadrature.radial import QuadratureSpec, RadialProfile, radial_potential

CONVERGED_GAP = 1e-6
DIVERGED_GROWTH = 10.0
CONSECUTIVE = 3


def profile_nodes(scale=1.0, below=4, above=4, per_decade=80):
    """Log-spaced radii from scale 10^-below to scale 10^above."""
    return scale * np.logspace(-below, above, (below + above) * per_decade + 1)


def _integrand_exponent(k: KernelParams):
    return k.exponent if k.mode == "riesz" else -k.exponent


def _transform(k):
    e = _integrand_exponent(k)
    if k.mode == "riesz":
        return lambda v: np.maximum(v, 0.0) ** e
    return lambda v: v**e


def _auto_tail(func, k, spec):
    """Coefficient of a power-law fit of transform(func) at R/2 and R, when the resulting
    tail is integrable against the kernel; None otherwise."""
    R = spec.truncation_radius
    g = _transform(k)(np.asarray(func(np.array([R / 2, R])), float))
    if not np.all(g > 0):
        return None, None
    decay = -np.log(g[1] / g[0]) / np.log(2.0)
    if decay - k.kernel_power - k.n <= 1e-9:
        return None, None
    return float(g[1] * R**decay), float(decay)


def _rhs_radial(func, k, radii, spec, tail=True):
    coef = None
    sp = spec
    if tail:
        coef, decay = _auto_tail(func, k, spec)
        if coef is not None:
            sp = replace(spec, tail_decay_exponent=decay)
    tr = _transform(k)
    return np.array([radial_potential(func, k, float(r), sp, transform=tr, tail_coefficient=coef) for r in radii])


def _check_power_positive(values, k):
    if k.mode == "power" and np.any(np.asarray(values) <= 0):
        raise ValueError("power mode needs a strictly positive iterate (u^-q undefined)")


def picard_step(u, k: KernelParams, spec: QuadratureSpec, nodes=None):
    """Apply the right-hand side once.

    RadialProfile in, RadialProfile (same nodes) out; a callable of the radius
    needs ``nodes``.  GridFunction input (riesz mode) uses the grid rule over the
    box.  Overflow is reported by non-finite values, not raised.
    """
    if isinstance(u, GridFunction):
        if k.mode != "riesz":
            raise ValueError("grid iteration is implemented for riesz mode")
        with np.errstate(over="ignore", invalid="ignore"):
            dens = u.with_values(np.maximum(u.values, 0) ** k.exponent) if np.all(np.isfinite(u.values)) else u
            out = riesz_potential_on_grid(dens, k.order)
        return u.with_values(out.reshape(u.values.shape))
    if isinstance(u, RadialProfile):
        nodes, n = u.nodes, u.n
        vals = u.values
    else:
        if nodes is None:
            raise ValueError("callable iterates need explicit nodes")
        n = k.n
        vals = np.asarray(u(nodes), float)
    _check_power_positive(vals, k)
    if not np.any(vals):
        return RadialProfile(nodes, np.zeros_like(nodes), n)
    with np.errstate(over="ignore", invalid="ignore"):
        out = _rhs_radial(u, k, nodes, spec)
    return RadialProfile(nodes, out, n) if np.all(np.isfinite(out)) else _Overflow(nodes, out, n)


class _Overflow:
    """Marker for an iterate that left the floating-point range."""

    def __init__(self, nodes, values, n):
        self.nodes, self.values, self.n = nodes, values, n


@dataclass
class IterationTrace:
    steps: list = field(default_factory=list)
    classification: str = "budget_exhausted"
    final_residual: float = float("nan")
    degenerate: bool = False
    demonstrative: bool = True
    norm_exponent: float = 2.0
    final: object = None

    def to_rows(self):
        return [(s["step"], s["sup_norm"], s["lr_norm"], s["residual"]) for s in self.steps]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "sup_norm", "lr_norm", "residual"])
        for row in self.to_rows():
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()

    def to_dict(self):
        return {"classification": self.classification, "final_residual": self.final_residual,
                "degenerate": self.degenerate, "demonstrative": self.demonstrative,
                "norm_exponent": self.norm_exponent, "steps": len(self.steps) - 1}


def _norms(profile, n, radius, exponent):
    m = profile.nodes <= radius
    v = np.abs(profile.values[m])
    sup = float(v.max()) if v.size else 0.0
    r = profile.nodes[m]
    if r.size < 2:
        return sup, 0.0
    integrand = sphere_area(n) * v**exponent * r ** (n - 1)
    return sup, float(np.trapezoid(integrand, r) ** (1.0 / exponent))


def run_iteration(u0, k: KernelParams, spec: QuadratureSpec, max_steps=30, nodes=None, verification_radius=None,
                  norm_exponent=None) -> IterationTrace:
    """Iterate from u0 (RadialProfile or callable with ``nodes``) and classify the trace.

    converged: successive sup-norm gap below 1e-6 times the initial sup norm for 3
    consecutive steps; diverged: sup norm growing 10x or overflow; otherwise
    oscillating when the sup norms change direction over the last three steps and
    budget_exhausted when they are still monotone.  Norms are taken over the
    verification ball (default radius 3 * spec.scale).
    """
    if max_steps < 3:
        raise ValueError("max_steps must be at least 3")
    radius = 3 * spec.scale if verification_radius is None else verification_radius
    if norm_exponent is None:
        norm_exponent = 2 * k.n / (k.n - k.order) if k.mode == "riesz" else 2.0
    u = u0 if isinstance(u0, RadialProfile) else RadialProfile(nodes, np.asarray(u0(nodes), float), k.n)
    trace = IterationTrace(norm_exponent=norm_exponent, demonstrative=not k.is_critical)
    sup0, lr0 = _norms(u, k.n, radius, norm_exponent)
    scale = sup0
    trace.steps.append({"step": 0, "sup_norm": sup0, "lr_norm": lr0, "residual": float("nan")})
    if sup0 == 0:
        trace.degenerate = True
    streak = 0
    m = u.nodes <= radius
    for step in range(1, max_steps + 1):
        new = picard_step(u, k, spec)
        if isinstance(new, _Overflow) or not np.all(np.isfinite(new.values)):
            trace.steps.append({"step": step, "sup_norm": float("inf"), "lr_norm": float("inf"),
                                "residual": float("inf")})
            trace.classification = "diverged"
            trace.final = u
            return trace
        diff = np.abs(new.values[m] - u.values[m])
        gap = float(diff.max()) if diff.size else 0.0
        denom = np.abs(u.values[m])
        resid = float(np.max(diff / np.where(denom > 0, denom, 1.0))) if diff.size else 0.0
        sup, lr = _norms(new, k.n, radius, norm_exponent)
        trace.steps.append({"step": step, "sup_norm": sup, "lr_norm": lr, "residual": resid})
        trace.final_residual = resid
        u = new
        if sup0 > 0 and (sup >= DIVERGED_GROWTH * sup0 or sup <= sup0 / DIVERGED_GROWTH and k.mode == "power"):
            trace.classification = "diverged"
            break
        streak = streak + 1 if gap <= CONVERGED_GAP * max(scale, 1e-300) else 0
        if streak >= CONSECUTIVE or (trace.degenerate and gap == 0 and step >= CONSECUTIVE):
            trace.classification = "converged"
            break
    else:
        sups = np.array([s["sup_norm"] for s in trace.steps[-4:]])
        d = np.sign(np.diff(sups))
        trace.classification = "oscillating" if np.any(d[1:] != d[:-1]) else "budget_exhausted"
    trace.final = u
    return trace


def candidate_residual(u, k: KernelParams, points, spec: QuadratureSpec, center=None):
    """max over points of |u(x) - RHS(x)| / u(x) for a radial candidate.

    ``u`` is a RadialProfile, a family member (anything with ``profile`` and
    ``center``) or a callable of the radius; ``points`` are radii or points.
    """
    if hasattr(u, "profile") and hasattr(u, "center"):
        func = u.profile
        center = np.asarray(u.center) if center is None else center
    else:
        func = u
    pts = np.asarray(points, float)
    if pts.ndim == 2:
        c = np.zeros(pts.shape[1]) if center is None else np.asarray(center, float)
        radii = np.linalg.norm(pts - c, axis=1)
    else:
        radii = np.atleast_1d(pts)
    vals = np.asarray(func(radii), float)
    _check_power_positive(vals, k)
    rhs = _rhs_radial(func, k, radii, spec)
    return float(np.max(np.abs(vals - rhs) / np.abs(vals)))
