"""Explicit solution families, calibration of their constants and residual checks.

Bubble (riesz mode, critical mu):   u(x) = (a / (d + |x - c|^2))^((n-alpha)/2)
Poly family (power mode, q = 1+2n/p): u(x) = ((d + |x - c|^2) / a)^(p/2)

Calibration fixes a from the value of the equation's right-hand side at the
family center.  Both equations are homogeneous in a, so one scalar quotient
determines it.  Note that the calibrated a scales like sqrt(d); the d-free
quantity is ``a / sqrt(d)`` (see :attr:`Calibration.normalized`).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

from .geometry import KernelParams, SphereParams, as_point, as_points, kelvin_values
from .quadrature.cells import sphere_area
from .quadrature.grid_potential import riesz_potential_grid
from .quadrature.grids import Box, GridFunction
from .quadrature.radial import (QuadratureSpec, power_potential_radial, radial_mass,
                                riesz_potential_radial)
from .quadrature.tails import potential_tail_bound


def _center(center, n):
    c = np.zeros(n) if center is None else as_point(center, n)
    return tuple(float(v) for v in c)


@dataclass(frozen=True)
class BubbleParams:
    a: float
    d: float
    center: tuple
    kernel: KernelParams

    def __post_init__(self):
        if self.kernel.mode != "riesz":
            raise ValueError("bubbles need riesz-mode kernel parameters")
        if not (self.a > 0 and self.d > 0):
            raise ValueError("a and d must be positive")
        object.__setattr__(self, "center", _center(self.center, self.kernel.n))

    @classmethod
    def make(cls, k, a=1.0, d=1.0, center=None):
        return cls(float(a), float(d), center, k)

    @property
    def n(self):
        return self.kernel.n

    @property
    def half_power(self):
        return (self.kernel.n - self.kernel.order) / 2

    @property
    def scale(self):
        return float(np.sqrt(self.d))

    def profile(self, r):
        r = np.asarray(r, float)
        return (self.a / (self.d + r * r)) ** self.half_power

    def __call__(self, pts):
        pts = as_points(pts, self.n)
        return self.profile(np.linalg.norm(pts - np.asarray(self.center), axis=1))

    def to_dict(self):
        return {"family": "bubble", "a": self.a, "d": self.d, "center": list(self.center), **self.kernel.to_dict()}


@dataclass(frozen=True)
class PolyFamilyParams:
    a: float
    d: float
    center: tuple
    kernel: KernelParams

    def __post_init__(self):
        if self.kernel.mode != "power":
            raise ValueError("the polynomial family needs power-mode kernel parameters")
        if not (self.a > 0 and self.d > 0):
            raise ValueError("a and d must be positive")
        object.__setattr__(self, "center", _center(self.center, self.kernel.n))

    @classmethod
    def make(cls, k, a=1.0, d=1.0, center=None):
        return cls(float(a), float(d), center, k)

    @property
    def n(self):
        return self.kernel.n

    @property
    def scale(self):
        return float(np.sqrt(self.d))

    def profile(self, r):
        r = np.asarray(r, float)
        return ((self.d + r * r) / self.a) ** (self.kernel.order / 2)

    def __call__(self, pts):
        pts = as_points(pts, self.n)
        return self.profile(np.linalg.norm(pts - np.asarray(self.center), axis=1))

    def to_dict(self):
        return {"family": "poly", "a": self.a, "d": self.d, "center": list(self.center), **self.kernel.to_dict()}


def bubble_value(b: BubbleParams, x):
    return float(b.profile(np.linalg.norm(as_point(x, b.n) - np.asarray(b.center))))


def poly_value(pp: PolyFamilyParams, x):
    return float(pp.profile(np.linalg.norm(as_point(x, pp.n) - np.asarray(pp.center))))


def family_spec(kernel: KernelParams, d=1.0, base: QuadratureSpec | None = None):
    """Quadrature settings adapted to a family of scale sqrt(d): R = 1e8 sqrt(d) and the
    tail decay of the integrand (u^mu or u^-q)."""
    scale = float(np.sqrt(d))
    base = QuadratureSpec() if base is None else base
    if kernel.mode == "riesz":
        decay = kernel.exponent * (kernel.n - kernel.order)
    else:
        decay = kernel.exponent * kernel.order
    return replace(base, truncation_radius=base.truncation_radius * scale / base.scale,
                   scale=scale, tail_decay_exponent=decay)


# --- right-hand sides ----------------------------------------------------------

def _bubble_rhs(b: BubbleParams, r, spec):
    k = b.kernel
    mu = k.exponent
    coef = b.a ** (b.half_power * mu)
    return riesz_potential_radial(b.profile, k, r, spec, transform=lambda v: v**mu, tail_coefficient=coef)


def _poly_rhs(pp: PolyFamilyParams, r, spec):
    k = pp.kernel
    q = k.exponent
    coef = pp.a ** (k.order * q / 2)
    return power_potential_radial(pp.profile, k, r, spec, transform=lambda v: v ** (-q), tail_coefficient=coef)


def equation_rhs(member, x, spec=None):
    """Right-hand side of the family's equation at the point x (radial reduction)."""
    spec = family_spec(member.kernel, member.d) if spec is None else spec
    r = float(np.linalg.norm(as_point(x, member.n) - np.asarray(member.center)))
    if isinstance(member, BubbleParams):
        return _bubble_rhs(member, r, spec)
    return _poly_rhs(member, r, spec)


@dataclass(frozen=True)
class Calibration:
    """Calibrated constant a with the quotient c it came from and the tail bound of
    the truncated integral at the center."""

    a: float
    c: float
    d: float
    method: str
    tail_bound: float
    spec: dict = field(default_factory=dict)

    @property
    def normalized(self):
        """a / sqrt(d), the d-independent form of the constant."""
        return self.a / np.sqrt(self.d)

    def to_dict(self):
        return {"a": self.a, "c": self.c, "d": self.d, "method": self.method, "normalized": self.normalized,
                "tail_bound": self.tail_bound, "spec": self.spec}


def _bubble_center_quotient_grid(k, d, resolution, half_width):
    """c on a cube grid: the integrand is cut to the ball B(0, half_width) and the
    exterior of that ball is added by the radial rule."""
    if k.n > 3:
        raise ValueError("grid calibration needs n <= 3")
    unit = BubbleParams.make(k, 1.0, d)
    mu = k.exponent
    L = half_width * unit.scale
    res = resolution if resolution % 2 == 1 else resolution + 1  # origin at a midpoint
    box = Box.cube(k.n, L)

    def dens(pts):
        r = np.linalg.norm(pts, axis=1)
        return np.where(r < L, unit.profile(r) ** mu, 0.0)

    g = GridFunction.from_function(box, res, dens)
    inner = riesz_potential_grid(g, k.order, np.zeros(k.n))
    spec = family_spec(k, d)
    edges = L * 2.0 ** np.arange(0, 120)
    edges = np.append(edges[edges < spec.truncation_radius], spec.truncation_radius)
    x, w = np.polynomial.legendre.leggauss(spec.resolution)
    a_, b_ = edges[:-1, None], edges[1:, None]
    s = (0.5 * (b_ - a_) * x + 0.5 * (a_ + b_)).ravel()
    ws = (0.5 * (b_ - a_) * w).ravel()
    outer = sphere_area(k.n) * np.sum(ws * unit.profile(s) ** mu * s ** (k.order - 1))
    return (inner + outer) / unit.profile(0.0)


def calibrate_bubble_constant(k: KernelParams, spec: QuadratureSpec | None = None, d=1.0, method="radial",
                              grid_resolution=65, grid_half_width=8.0) -> Calibration:
    """Calibrate a for the bubble of scale d: a = c^(-1/alpha), c = RHS(phi)(center)/phi(center)
    with phi the a = 1 bubble.  ``method`` is "radial" (default) or "grid" (n <= 3)."""
    if k.mode != "riesz":
        raise ValueError("bubble calibration needs riesz mode")
    if not k.is_critical:
        raise ValueError(f"bubble calibration needs the critical exponent {k.critical_exponent}, got {k.exponent}")
    spec = family_spec(k, d, spec)
    unit = BubbleParams.make(k, 1.0, d)
    if method == "radial":
        c = _bubble_rhs(unit, 0.0, spec) / unit.profile(0.0)
    elif method == "grid":
        c = _bubble_center_quotient_grid(k, d, grid_resolution, grid_half_width)
    else:
        raise ValueError(f"unknown calibration method {method!r}")
    if not (np.isfinite(c) and c > 0):
        raise FloatingPointError(f"non-positive center quotient {c}: quadrature failure")
    tb = potential_tail_bound(spec, 1.0, k.n, spec.tail_decay_exponent, k.order - k.n)
    return Calibration(float(c ** (-1.0 / k.order)), float(c), float(d), method, tb, spec.to_dict())


def calibrate_poly_constant(k: KernelParams, spec: QuadratureSpec | None = None, d=1.0) -> Calibration:
    """a = c^(-2/(p(1+q))), c = RHS(psi)(center)/psi(center) with psi the a = 1 member."""
    if k.mode != "power":
        raise ValueError("poly calibration needs power mode")
    if abs(k.order * k.exponent - (k.order + 2 * k.n)) > 1e-12 * (k.order + 2 * k.n):
        raise ValueError(f"(p, q) = ({k.order}, {k.exponent}) violates q = 1 + 2n/p")
    spec = family_spec(k, d, spec)
    unit = PolyFamilyParams.make(k, 1.0, d)
    c = _poly_rhs(unit, 0.0, spec) / unit.profile(0.0)
    if not (np.isfinite(c) and c > 0):
        raise FloatingPointError(f"non-positive center quotient {c}: quadrature failure")
    p, q = k.order, k.exponent
    tb = potential_tail_bound(spec, 1.0, k.n, spec.tail_decay_exponent, p)
    return Calibration(float(c ** (-2.0 / (p * (1 + q)))), float(c), float(d), "radial", tb, spec.to_dict())


def calibrated_bubble(k, d=1.0, center=None, spec=None):
    cal = calibrate_bubble_constant(k, spec, d)
    return BubbleParams.make(k, cal.a, d, center)


def calibrated_poly(k, d=1.0, center=None, spec=None):
    cal = calibrate_poly_constant(k, spec, d)
    return PolyFamilyParams.make(k, cal.a, d, center)


def residuals(member, points, spec=None):
    """Relative residuals |u(x) - RHS(x)| / u(x) at each point."""
    spec = family_spec(member.kernel, member.d) if spec is None else spec
    pts = as_points(points, member.n) if len(points) else np.zeros((0, member.n))
    out = []
    for x in pts:
        u = float(member(x[None, :])[0])
        out.append(abs(u - equation_rhs(member, x, spec)) / u)
    return np.array(out)


def bubble_residual(b: BubbleParams, points, spec=None):
    """Max relative residual of the riesz equation over ``points`` (0 for no points)."""
    r = residuals(b, points, spec)
    return float(r.max()) if r.size else 0.0


def poly_residual(pp: PolyFamilyParams, points, spec=None):
    r = residuals(pp, points, spec)
    return float(r.max()) if r.size else 0.0


# --- singular solution ------------------------------------------------------------

@dataclass(frozen=True)
class SingularCheck:
    c: float
    max_residual: float
    radii: tuple
    residuals: tuple
    critical_norm_ratio: float
    critical_norm_predicted: float
    subcritical_norms: tuple
    cutoffs: tuple

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def singular_solution_check(k: KernelParams, spec: QuadratureSpec | None = None, radii=None,
                            cutoffs=(1e-2, 1e-3), sub_factor=0.9) -> SingularCheck:
    """Calibrate c for the profile c r^((alpha-n)/2) at r = 1, check the residual at ``radii``
    and the local integrability dichotomy at t = 2n/(n-alpha) versus t = sub_factor * 2n/(n-alpha)."""
    if k.mode != "riesz" or not k.is_critical:
        raise ValueError("the singular solution needs riesz mode with the critical exponent")
    n, alpha, mu = k.n, k.order, k.exponent
    g = (alpha - n) / 2
    base = QuadratureSpec() if spec is None else spec
    spec = replace(base, tail_decay_exponent=-g * mu)
    radii = np.geomspace(0.1, 10, 9) if radii is None else np.asarray(radii, float)

    def unit(s):
        return np.asarray(s, float) ** g

    rhs1 = riesz_potential_radial(unit, k, 1.0, spec, transform=lambda v: v**mu, tail_coefficient=1.0)
    c = rhs1 ** (-1.0 / (mu - 1))

    def prof(s):
        return c * np.asarray(s, float) ** g

    coef = c**mu
    res = []
    for r in radii:
        rhs = riesz_potential_radial(prof, k, r, replace(spec, scale=r), transform=lambda v: v**mu,
                                     tail_coefficient=coef)
        res.append(abs(rhs - prof(r)) / prof(r))
    t_crit = 2 * n / (n - alpha)
    crit = [radial_mass(prof, n, spec, eps, 1.0, transform=lambda v: np.abs(v) ** t_crit) for eps in cutoffs]
    pred = np.log(1 / cutoffs[1]) / np.log(1 / cutoffs[0])
    t_sub = sub_factor * t_crit
    sub = [radial_mass(prof, n, spec, eps, 1.0, transform=lambda v: np.abs(v) ** t_sub)
           for eps in (1e-2, 1e-4, 1e-6, 1e-8)]
    return SingularCheck(float(c), float(max(res)), tuple(map(float, radii)), tuple(map(float, res)),
                         float(crit[1] / crit[0]), float(pred), tuple(map(float, sub)), tuple(cutoffs))


# --- asymptotics -----------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticReport:
    """beta (riesz) or gamma (power) computed from the radius ladder and from the integral,
    the closed-form expectation, and for the poly family the two-sided growth constant."""

    beta: float | None
    gamma: float | None
    empirical_bound_constant: float | None
    ladder_value: float
    integral_value: float
    expected: float
    ladder: tuple

    @property
    def agreement(self):
        return abs(self.ladder_value - self.integral_value) / abs(self.integral_value)

    def to_dict(self):
        d = dict(self.__dict__)
        d["ladder"] = list(self.ladder)
        d["agreement"] = self.agreement
        return d


def _extrapolate(radii, values):
    """Polynomial extrapolation in h = r^-2 to h = 0 through the last three points."""
    h = radii[-3:] ** -2.0
    v = values[-3:]
    return float(np.polyval(np.polyfit(h, v, 2), 0.0))


def asymptotics(member, spec=None, sample_radius=100.0, samples=2001) -> AsymptoticReport:
    spec = family_spec(member.kernel, member.d) if spec is None else spec
    k = member.kernel
    n = k.n
    radii = 2.0 ** np.arange(2, 8) * member.scale
    direction = np.eye(n)[0]
    pts = np.asarray(member.center) + radii[:, None] * direction
    u = member(pts)
    if isinstance(member, BubbleParams):
        s = n - k.order
        ladder = radii**s * u
        mu = k.exponent
        integral = radial_mass(member.profile, n, spec, transform=lambda v: v**mu)
        integral += potential_tail_bound(spec, member.a ** (member.half_power * mu), n, spec.tail_decay_exponent, 0.0)
        return AsymptoticReport(float(integral), None, None, _extrapolate(radii, ladder), float(integral),
                                float(member.a ** (s / 2)), tuple(map(float, ladder)))
    p, q = k.order, k.exponent
    ladder = radii ** (-p) * u
    integral = radial_mass(member.profile, n, spec, transform=lambda v: v ** (-q))
    integral += potential_tail_bound(spec, member.a ** (p * q / 2), n, spec.tail_decay_exponent, 0.0)
    r = np.linspace(0.0, sample_radius, samples)
    vals = member(np.asarray(member.center) + r[:, None] * direction)
    ratio = vals / (1 + r**p)
    C = float(max(ratio.max(), (1 / ratio).max()))
    return AsymptoticReport(None, float(integral), C, _extrapolate(radii, ladder), float(integral),
                            float(member.a ** (-p / 2)), tuple(map(float, ladder)))


# --- Kelvin closure ----------------------------------------------------------------

@dataclass(frozen=True)
class FamilyFit:
    a: float
    d: float
    center: tuple
    max_relative_residual: float


def fit_bubble(k: KernelParams, points, values) -> FamilyFit:
    """Least-squares fit of (a, d, center) to positive samples, in log values.

    The model log u = s/2 (log a - log(d + |x - c|^2)) is fit in the parameters
    (log a, log d, c), started from the sample maximum.
    """
    pts = as_points(points, k.n)
    vals = np.asarray(values, float)
    if np.any(vals <= 0):
        raise ValueError("bubble fits need positive samples")
    s = (k.n - k.order) / 2
    target = np.log(vals)
    j = int(np.argmax(vals))
    c0 = pts[j]
    spread = np.median(np.sum((pts - c0) ** 2, axis=1))
    d0 = max(spread, 1e-6)
    la0 = np.log(d0) + target[j] / s

    def resid(theta):
        la, ld, c = theta[0], theta[1], theta[2:]
        return s * (la - np.log(np.exp(ld) + np.sum((pts - c) ** 2, axis=1))) - target

    sol = least_squares(resid, np.concatenate([[la0, np.log(d0)], c0]), method="lm", xtol=1e-15, ftol=1e-15,
                        gtol=1e-15, max_nfev=20000)
    la, ld, c = sol.x[0], sol.x[1], sol.x[2:]
    fitted = BubbleParams.make(k, np.exp(la), np.exp(ld), c)
    rel = np.abs(fitted(pts) / vals - 1)
    return FamilyFit(float(np.exp(la)), float(np.exp(ld)), tuple(map(float, c)), float(rel.max()))


def kelvin_closure_fit(b: BubbleParams, sphere: SphereParams, samples=20, rng=None) -> FamilyFit:
    """Fit the bubble family to the transform of ``b`` about ``sphere`` at random points."""
    rng = np.random.default_rng(0) if rng is None else rng
    n = b.n
    dirs = rng.normal(size=(samples, n))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    radii = sphere.radius * rng.uniform(0.3, 3.0, samples)
    pts = sphere.center + radii[:, None] * dirs
    return fit_bubble(b.kernel, pts, kelvin_values(sphere, b.kernel, b, pts))
