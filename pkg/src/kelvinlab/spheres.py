"""Moving spheres: domination tests, the critical radius lambda_bar(x), and the
integral identities satisfied by Kelvin transforms of solutions."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import KernelParams, SphereParams, as_point, as_points, invert_point, kelvin_values
from .quadrature.polar import BallRegion, polar_potential
from .quadrature.radial import QuadratureSpec


def transformed_values(u, s: SphereParams, k: KernelParams, points):
    """u_{x,lam} at each point (rejects points at the center)."""
    return kelvin_values(s, k, u, points)


# --- sample design ---------------------------------------------------------------

@dataclass(frozen=True)
class SampleDesign:
    """Shells at radii lam (1 + 2^-j), j = 0..shells-1, a doubling ladder from 2 lam to
    ``truncation_radius``, each with ``directions`` unit vectors, plus the behaviour at infinity."""

    shells: int = 9
    directions: int = 64
    truncation_radius: float = 1e6
    tolerance: float = 1e-9

    def radii(self, lam):
        shells = lam * (1 + 2.0 ** -np.arange(self.shells))
        ladder = 2 * lam * 2.0 ** np.arange(0, 200)
        ladder = ladder[ladder <= self.truncation_radius]
        return np.unique(np.concatenate([shells, ladder]))

    def to_dict(self):
        return {"shells": self.shells, "directions": self.directions,
                "truncation_radius": self.truncation_radius, "tolerance": self.tolerance}


def unit_directions(n, m):
    """Deterministic, roughly uniform unit vectors: +-1 (n = 1), equal angles (n = 2),
    a Fibonacci lattice (n = 3) or normalized Halton-free Gaussian draws with a fixed seed."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        t = 2 * np.pi * (np.arange(m) + 0.5) / m
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if n == 3:
        i = np.arange(m) + 0.5
        z = 1 - 2 * i / m
        phi = np.pi * (1 + 5**0.5) * i
        rr = np.sqrt(1 - z * z)
        return np.stack([rr * np.cos(phi), rr * np.sin(phi), z], axis=1)
    g = np.random.default_rng(12345).normal(size=(m, n))
    return g / np.linalg.norm(g, axis=1)[:, None]


def sample_points(s: SphereParams, design: SampleDesign):
    dirs = unit_directions(s.n, design.directions)
    radii = design.radii(s.radius)
    return (s.center[None, None, :] + radii[:, None, None] * dirs[None, :, :]).reshape(-1, s.n)


def asymptotic_constant(u, k: KernelParams, center, scale=1.0, direction=None):
    """lim |y|^(n-alpha) u(y) (riesz) or lim |y|^-p u(y) (power) along a doubling ladder,
    extrapolated in 1/r through the last three rungs (the ray starts off the family
    center in general, so odd powers of 1/r appear)."""
    n = k.n
    direction = np.eye(n)[0] if direction is None else np.asarray(direction, float)
    radii = scale * 2.0 ** np.arange(8, 14)
    pts = np.asarray(center, float) + radii[:, None] * direction
    vals = np.asarray(u(pts), float)
    w = radii ** (n - k.order) if k.mode == "riesz" else radii ** (-k.order)
    seq = w * vals
    h = 1.0 / radii[-3:]
    return float(np.polyval(np.polyfit(h, seq[-3:], 2), 0.0))


# --- domination ----------------------------------------------------------------

@dataclass(frozen=True)
class Domination:
    """Outcome of a domination test; ``margin`` is the smallest normalized slack over the
    samples (negative means violated), ``witness`` the first violating point, if any."""

    ok: bool
    witness: tuple | None
    margin: float
    at_infinity: bool
    samples: int
    design: dict = field(default_factory=dict)


def check_domination(u, s: SphereParams, k: KernelParams, design: SampleDesign | None = None, asymptote=None,
                     scale=1.0):
    """Test u_{x,lam} <= u (riesz) or u_{x,lam} >= u (power) on the sample design.

    ``asymptote`` is beta (riesz) or gamma (power) of u; when given, the behaviour
    at infinity is also tested: lam^(n-alpha) u(x) <= beta, respectively
    u(x) lam^-p >= gamma.
    """
    design = SampleDesign() if design is None else design
    pts = sample_points(s, design)
    uv = np.asarray(u(pts), float)
    tv = kelvin_values(s, k, u, pts)
    local = np.maximum(np.abs(uv), np.abs(tv))
    slack = (uv - tv) if k.mode == "riesz" else (tv - uv)
    norm = slack / np.where(local > 0, local, 1.0)
    bad = np.nonzero(norm < -design.tolerance)[0]
    margin = float(norm.min())
    ux = float(np.asarray(u(s.center[None, :]), float)[0])
    inf_bad = False
    if asymptote is not None:
        lam = s.radius
        if k.mode == "riesz":
            limit = lam ** (k.n - k.order) * ux
            inf_slack = (asymptote - limit) / max(asymptote, limit)
        else:
            limit = ux * lam ** (-k.order)
            inf_slack = (limit - asymptote) / max(asymptote, limit)
        margin = min(margin, float(inf_slack))
        inf_bad = inf_slack < -design.tolerance
    witness = None
    if bad.size:
        witness = tuple(map(float, pts[bad[0]]))
    ok = not bad.size and not inf_bad
    return Domination(ok, witness, margin, bool(inf_bad and not bad.size), len(pts), design.to_dict())


# --- lambda_bar -----------------------------------------------------------------

class BracketError(RuntimeError):
    pass


@dataclass(frozen=True)
class MovingSpheresResult:
    base_point: tuple
    lambda_bar: float
    bracket: tuple
    violation_witness: tuple | None
    identity_residual: float
    margin: float
    iterations: int
    design: dict = field(default_factory=dict)

    def to_dict(self):
        return {"base_point": list(self.base_point), "lambda_bar": self.lambda_bar, "bracket": list(self.bracket),
                "violation_witness": None if self.violation_witness is None else list(self.violation_witness),
                "identity_residual": self.identity_residual, "margin": self.margin, "iterations": self.iterations,
                "design": self.design}


def identity_residual(u, s: SphereParams, k: KernelParams, design: SampleDesign | None = None):
    """sup over the sample design of |u_{x,lam} - u| / u."""
    design = SampleDesign() if design is None else design
    pts = sample_points(s, design)
    uv = np.asarray(u(pts), float)
    tv = kelvin_values(s, k, u, pts)
    return float(np.max(np.abs(tv - uv) / np.abs(uv)))


def find_lambda_bar(u, x, k: KernelParams, search=(0.1, 10.0), tol=None, design: SampleDesign | None = None,
                    asymptote=None, scale=1.0, max_iter=60) -> MovingSpheresResult:
    """Bisection for the supremal radius of domination about x.

    The lower end is halved (up to 30 times) until domination holds; failure to
    find a violation at the upper end is a :class:`BracketError`.  ``tol`` defaults
    to 1e-4 * scale.
    """
    x = as_point(x, k.n)
    design = SampleDesign() if design is None else design
    tol = 1e-4 * scale if tol is None else tol
    if asymptote is None:
        asymptote = asymptotic_constant(u, k, x, scale)
    lo, hi = map(float, search)
    if not 0 < lo < hi:
        raise ValueError("search interval must satisfy 0 < lo < hi")

    def test(lam):
        return check_domination(u, SphereParams(x, lam), k, design, asymptote, scale)

    for _ in range(30):
        if test(lo).ok:
            break
        lo *= 0.5
    else:
        raise BracketError(f"domination fails for every radius down to {lo}")
    top = test(hi)
    if top.ok:
        raise BracketError(f"no violation found at the upper end {hi}")
    witness = top.witness
    it = 0
    while hi - lo > tol and it < max_iter:
        mid = 0.5 * (lo + hi)
        res = test(mid)
        if res.ok:
            lo = mid
        else:
            hi, witness = mid, res.witness
        it += 1
    lam = 0.5 * (lo + hi)
    final = test(lam)
    ires = identity_residual(u, SphereParams(x, lam), k, design)
    return MovingSpheresResult(tuple(map(float, x)), lam, (lo, hi), witness, ires, final.margin, it,
                               design.to_dict())


def violation_sweep(u, x, k, lambdas, design=None, asymptote=None, scale=1.0):
    """(lam, violated) pairs, for plotting and for the monotone-violation property."""
    x = as_point(x, k.n)
    if asymptote is None:
        asymptote = asymptotic_constant(u, k, x, scale)
    return [(float(lam), not check_domination(u, SphereParams(x, lam), k, design, asymptote, scale).ok)
            for lam in lambdas]


# --- identities ------------------------------------------------------------------

def _weighted_density(u, s, k, extra=None):
    """Integrand (lam/|z-x|)^w u_{x,lam}(z)^mu (riesz) or ... u_{x,lam}(z)^-q (power)."""
    we = k.weight_exponent
    e = k.exponent if k.mode == "riesz" else -k.exponent

    def dens(pts):
        r = np.linalg.norm(pts - s.center, axis=1)
        v = kelvin_values(s, k, u, pts)
        return (s.radius / r) ** we * np.abs(v) ** e

    return dens


def _polar_spec(spec, s, scale):
    spec = QuadratureSpec(truncation_radius=1e8 * s.radius) if spec is None else spec
    if scale is not None:
        spec = replace(spec, scale=scale)
    return spec


def transformed_feature(u, s: SphereParams):
    """(focus, scale) of u_{x,lam} for a field with ``center`` and ``scale`` attributes.

    For a bubble of scale sqrt(d) centered at c the transform is again a bubble, with
    center x + lam^2 (c - x) / (d + |x - c|^2) and scale lam^2 sqrt(d) / (d + |x - c|^2);
    the same numbers locate the poly family's transform.  Fields without these
    attributes get (x, None).
    """
    center = getattr(u, "center", None)
    width = getattr(u, "scale", None)
    if center is None or width is None:
        return s.center, None
    c = np.asarray(center, float)
    denom = width**2 + float(np.sum((c - s.center) ** 2))
    return s.center + s.radius**2 * (c - s.center) / denom, s.radius**2 * width / denom


def invariance_residual(u, s: SphereParams, k: KernelParams, eval_points, spec: QuadratureSpec | None = None,
                        scale=None, focus=None):
    """max over eval points of |u_{x,lam}(xi) - int |xi - z|^beta (lam/|z-x|)^w u_{x,lam}(z)^e dz| / u_{x,lam}(xi)
    with e = mu (riesz) or -q (power) and w the weight exponent (zero when critical).

    ``focus`` and ``scale`` locate the concentration of u_{x,lam} for the polar rule;
    by default they come from :func:`transformed_feature`.
    """
    auto_focus, auto_scale = transformed_feature(u, s)
    focus = auto_focus if focus is None else as_point(focus, k.n)
    spec = _polar_spec(spec, s, auto_scale if scale is None else scale)
    pts = as_points(eval_points, k.n)
    dens = _weighted_density(u, s, k)
    lhs = kelvin_values(s, k, u, pts)
    worst = 0.0
    for xi, l in zip(pts, lhs):
        rhs = polar_potential(dens, xi, k.kernel_power, spec, focus=focus)
        worst = max(worst, abs(l - rhs) / abs(l))
    return float(worst)


def difference_identity_terms(u, s: SphereParams, k: KernelParams, xi, spec: QuadratureSpec | None = None,
                              scale=None):
    """(LHS, RHS, u(xi)) of the difference identity at one point outside the sphere.

    Riesz:  u - u_{x,lam} = int_{|z-x|>=lam} K (u^mu - W u_{x,lam}^mu)
    Power:  u_{x,lam} - u = int_{|z-x|>=lam} k (u^-q - W u_{x,lam}^-q)
    with W = (lam/|z-x|)^w.  K and k split into two potentials of the exterior
    density, one at xi and one at the inverted point.
    """
    spec = _polar_spec(spec, s, scale)
    xi = as_point(xi, k.n)
    r = np.linalg.norm(xi - s.center)
    if r < s.radius * (1 - 1e-12):
        raise ValueError("difference identity points must lie outside the sphere")
    we = k.weight_exponent
    e = k.exponent if k.mode == "riesz" else -k.exponent

    def dens(pts):
        rz = np.linalg.norm(pts - s.center, axis=1)
        v = kelvin_values(s, k, u, pts)
        return np.abs(np.asarray(u(pts), float)) ** e - (s.radius / rz) ** we * np.abs(v) ** e

    region = BallRegion(tuple(s.center), s.radius, "exterior")
    u_xi = float(np.asarray(u(xi[None, :]), float)[0])
    t_xi = float(kelvin_values(s, k, u, xi[None, :])[0])
    if abs(r - s.radius) <= 1e-12 * s.radius:
        return 0.0, 0.0, u_xi
    star = invert_point(s, xi)
    p_xi = polar_potential(dens, xi, k.kernel_power, spec, region=region)
    p_star = polar_potential(dens, star, k.kernel_power, spec, region=region)
    if k.mode == "riesz":
        lhs = u_xi - t_xi
        rhs = p_xi - (s.radius / r) ** (k.n - k.order) * p_star
    else:
        lhs = t_xi - u_xi
        rhs = (r / s.radius) ** k.order * p_star - p_xi
    return float(lhs), float(rhs), u_xi


def difference_identity_residual(u, s: SphereParams, k: KernelParams, xi_points, spec=None, scale=None,
                                 relative_to="difference"):
    """max relative gap between the two sides of the difference identity.

    ``relative_to="difference"`` divides by |LHS|, ``"value"`` by u(xi) (use this
    when the LHS vanishes, e.g. at lambda_bar).
    """
    worst = 0.0
    for xi in as_points(xi_points, k.n):
        lhs, rhs, uxi = difference_identity_terms(u, s, k, xi, spec, scale)
        if relative_to == "difference":
            denom = abs(lhs)
            if denom == 0:
                denom = abs(uxi)
        elif relative_to == "value":
            denom = abs(uxi)
        else:
            raise ValueError(f"unknown normalization {relative_to!r}")
        worst = max(worst, abs(lhs - rhs) / denom)
    return float(worst)
