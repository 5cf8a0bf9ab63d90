"""Local regularity machinery: truncated kernels, the localized operator L, the
contraction scheme for the truncated equation, and the local L^nu estimate.

All fields of one experiment live on one ambient lattice, the cube [-3, 3]^n
split into ``resolution`` cells per axis; the balls B_3, B_2, B_1, B_1/2 (about
the origin) are the cells whose midpoints fall inside them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from . import _ext
from .geometry import KernelParams
from .quadrature.grid_potential import riesz_matrix
from .quadrature.grids import Box, GridFunction, lp_norm_ball

DELTA_BAR = 0.05
HALF_WIDTH = 3.0


class NonContractionError(RuntimeError):
    """The fixed-point map failed to contract (delta(V) too large for the scheme)."""


@dataclass(frozen=True)
class TruncationLevel:
    i: float

    def __post_init__(self):
        if not self.i >= 1:
            raise ValueError(f"truncation level must be >= 1, got {self.i}")


def _cap_value(cap):
    if cap is None:
        return None
    return float(cap.i if isinstance(cap, TruncationLevel) else cap)


def truncated_kernel(i, z, k: KernelParams):
    """min(|z|^(alpha-n), i) for one vector z or an (m, n) array of them."""
    if k.mode != "riesz":
        raise ValueError("truncated kernels need riesz mode")
    cap = _cap_value(i)
    z = np.asarray(z, float)
    r = np.linalg.norm(np.atleast_2d(z).reshape(-1, k.n), axis=1)
    with np.errstate(divide="ignore"):
        val = np.where(r > 0, r ** (k.order - k.n), np.inf)
    out = np.minimum(val, cap)
    return float(out[0]) if z.ndim <= 1 and out.size == 1 else out


def crossover_radius(i, k: KernelParams):
    """Radius beyond which the cap is inactive: i^(-1/(n-alpha))."""
    return float(_cap_value(i) ** (-1.0 / (k.n - k.order)))


# --- lattice ---------------------------------------------------------------------

def ambient_grid(n, resolution, values=None):
    box = Box.cube(n, HALF_WIDTH)
    res = (int(resolution),) * n
    vals = np.zeros(res) if values is None else values
    return GridFunction(box, res, vals)


def sample(func: Callable | float, n, resolution):
    """Sample a callable (taking (m, n) points) or a constant on the ambient lattice."""
    g = ambient_grid(n, resolution)
    if callable(func):
        return g.with_values(np.asarray(func(g.midpoints()), float))
    return g.with_values(np.full(g.values.shape, float(func)))


def ball_mask(grid: GridFunction, radius, inner=0.0):
    r = np.linalg.norm(grid.midpoints(), axis=1)
    return (r < radius) & (r >= inner) if inner > 0 else r < radius


def _lattice_key(grid):
    return (grid.box.lower, grid.box.upper, grid.resolution)


@lru_cache(maxsize=16)
def _cached_matrix(key, alpha, target_radius, source_radius, source_inner, cap):
    lower, upper, res = key
    grid = GridFunction(Box(lower, upper), res, np.zeros(res))
    tmask = ball_mask(grid, target_radius)
    smask = ball_mask(grid, source_radius, source_inner)
    m = riesz_matrix(grid, alpha, tmask, smask, cap=cap)
    m.setflags(write=False)
    return m


def operator_matrix(grid, k, target_radius=2.0, source_radius=2.0, source_inner=0.0, cap=None):
    """Matrix of w -> int_{source shell} G(x - y) w(y) dy at the target-ball midpoints."""
    return _cached_matrix(_lattice_key(grid), float(k.order), float(target_radius), float(source_radius),
                          float(source_inner), _cap_value(cap))


def lq_norm(grid, values, exponent, radius=2.0):
    """L^q norm over B_radius of an array given on the B_radius cells (or on all cells)."""
    mask = ball_mask(grid, radius)
    v = np.asarray(values, float)
    if v.size == mask.size:
        v = v.ravel()[mask]
    return float((np.sum(np.abs(v) ** exponent) * grid.cell_volume) ** (1.0 / exponent))


def _embed(grid, mask, vals):
    out = np.zeros(grid.values.size)
    out[mask] = vals
    return grid.with_values(out.reshape(grid.values.shape))


# --- operators ---------------------------------------------------------------------

def apply_L(V: GridFunction, w: GridFunction, k: KernelParams, domain_ball=2.0, cap=None, target_ball=None):
    """(L w)(x) = int_{|y| < domain_ball} G(x - y) V(y) w(y) dy with G the Riesz kernel or its
    truncation at ``cap``; evaluated at the cells of B_target (default the domain ball),
    zero elsewhere."""
    if np.any(V.values < 0):
        raise ValueError("V must be non-negative")
    if V.resolution != w.resolution or V.box != w.box:
        raise ValueError("V and w live on different lattices")
    target_ball = domain_ball if target_ball is None else target_ball
    A = operator_matrix(V, k, target_ball, domain_ball, 0.0, cap)
    smask = ball_mask(V, domain_ball)
    vals = A @ (V.flat()[smask] * w.flat()[smask])
    return _embed(V, ball_mask(V, target_ball), vals)


def outer_source(V: GridFunction, u: GridFunction, k: KernelParams, x_points=None, cap=None, inner=2.0, outer=3.0):
    """f(x) = int_{inner < |y| < outer} G(x - y) V(y) u(y) dy.

    Without ``x_points`` the values at the B_inner cells are returned (as an array
    over those cells); otherwise at the given points.
    """
    smask = ball_mask(V, outer, inner)
    if x_points is None:
        A = operator_matrix(V, k, inner, outer, inner, cap)
        return A @ (V.flat()[smask] * u.flat()[smask])
    pts = np.atleast_2d(np.asarray(x_points, float))
    w = V.flat()[smask] * u.flat()[smask] * V.cell_volume
    c = np.inf if cap is None else _cap_value(cap)
    return _ext.kernel_sum(pts, V.midpoints()[smask], w, k.order - k.n, c, 0.0)


# --- experiments ---------------------------------------------------------------

@dataclass(frozen=True)
class RegularityExperiment:
    """Fields on the ambient lattice: V >= 0 and u >= 0 on B_3, h and the slack xi >= 0 on B_2,
    with u = int_{B_3} V u G + h - xi on B_2.  ``delta`` is ||V||_{L^{n/alpha}(B_3)}."""

    kernel: KernelParams
    V: GridFunction
    h: GridFunction
    u: GridFunction
    xi: GridFunction
    r: float
    nu: float
    delta: float = field(init=False)

    def __post_init__(self):
        k = self.kernel
        if k.mode != "riesz":
            raise ValueError("regularity experiments need riesz mode")
        lim = k.n / (k.n - k.order)
        if not self.nu > self.r > lim:
            raise ValueError(f"need nu > r > n/(n-alpha) = {lim}, got r={self.r}, nu={self.nu}")
        for g in (self.h, self.u, self.xi):
            if g.box != self.V.box or g.resolution != self.V.resolution:
                raise ValueError("all fields must share one ambient lattice")
        if np.any(self.V.values < 0) or np.any(self.u.values < 0):
            raise ValueError("V and u must be non-negative")
        if np.any(self.xi.flat()[ball_mask(self.xi, 2.0)] < 0):
            raise ValueError("the slack xi must be non-negative on B_2")
        object.__setattr__(self, "delta", delta_of(self.V, k))

    @property
    def grid(self):
        return self.V

    @property
    def n(self):
        return self.kernel.n

    def inequality_gap(self):
        """max over B_2 of u - (int_{B_3} V u G + h), normalized by max u; <= 0 up to round-off."""
        Lu = apply_L(self.V, self.u, self.kernel, domain_ball=3.0, target_ball=2.0)
        m = ball_mask(self.V, 2.0)
        gap = self.u.flat()[m] - Lu.flat()[m] - self.h.flat()[m]
        scale = max(float(np.abs(self.u.flat()).max()), 1e-300)
        return float(gap.max() / scale) if gap.size else 0.0

    def summary(self):
        return {"n": self.n, "alpha": self.kernel.order, "r": self.r, "nu": self.nu, "delta": self.delta,
                "resolution": self.V.resolution[0]}


def delta_of(V: GridFunction, k: KernelParams):
    return lp_norm_ball(V, k.n / k.order, np.zeros(k.n), 3.0)


def experiment_from_fields(k: KernelParams, resolution, V, u, xi, r, nu, h=None, delta_target=None):
    """Sample V, u, xi (callables or constants) on the lattice and close the relation.

    Without ``h`` it is defined as u - int_{B_3} V u G + xi on B_2, so the identity
    u = L u + f + h - xi holds exactly on the lattice.  With ``h`` given, xi is
    recomputed from it instead.  ``delta_target`` rescales V to that value of delta.
    """
    n = k.n
    Vg, ug = sample(V, n, resolution), sample(u, n, resolution)
    m3 = ball_mask(Vg, 3.0)
    Vg = Vg.with_values(np.where(m3, Vg.flat(), 0.0).reshape(Vg.values.shape))
    ug = ug.with_values(np.where(m3, ug.flat(), 0.0).reshape(ug.values.shape))
    if delta_target is not None:
        cur = delta_of(Vg, k)
        if cur > 0:
            Vg = Vg.with_values(Vg.values * (delta_target / cur))
    m2 = ball_mask(Vg, 2.0)
    pot = apply_L(Vg, ug, k, domain_ball=3.0, target_ball=2.0).flat()
    if h is None:
        xig = sample(xi, n, resolution)
        xv = np.where(m2, xig.flat(), 0.0)
        hv = np.where(m2, ug.flat() - pot + xv, 0.0)
    else:
        hg = sample(h, n, resolution)
        hv = np.where(m2, hg.flat(), 0.0)
        xv = np.where(m2, pot + hv - ug.flat(), 0.0)
        floor = 1e-10 * max(float(np.abs(ug.flat()).max()), 1e-300)
        if xv.min() < -floor:
            raise ValueError(f"the inequality fails on B_2: slack down to {xv.min():.3g}")
        xv = np.maximum(xv, 0.0)
    shape = Vg.values.shape
    return RegularityExperiment(k, Vg, Vg.with_values(hv.reshape(shape)), ug, Vg.with_values(xv.reshape(shape)),
                                float(r), float(nu))


@dataclass(frozen=True)
class ContractionResult:
    w: GridFunction
    contraction_factor: float
    iterations: int
    gaps: tuple


def _check_delta(exp, delta_bar):
    if exp.delta > delta_bar * (1 + 1e-9):
        raise ValueError(f"delta(V) = {exp.delta:.4g} exceeds delta_bar = {delta_bar}")


def truncated_parts(exp: RegularityExperiment, cap):
    """(f_i, h, xi_i) on the B_2 cells for the truncation level ``cap`` (None: untruncated)."""
    m2 = ball_mask(exp.V, 2.0)
    f = outer_source(exp.V, exp.u, exp.kernel, cap=cap)
    xi = exp.xi.flat()[m2]
    c = _cap_value(cap)
    if c is not None:
        xi = np.minimum(xi, c)
    return f, exp.h.flat()[m2], xi


def contraction_solve(exp: RegularityExperiment, i, q=None, tol=1e-10, max_iter=500, w0=None,
                      delta_bar=DELTA_BAR) -> ContractionResult:
    """Iterate T_i w = L_i w + f_i + h - xi_i on B_2 from w0 (default 0) until the L^q(B_2)
    gap between successive iterates is at most tol times the size of the source.

    ``contraction_factor`` is the largest ratio of successive gaps observed; three
    consecutive ratios >= 1 raise :class:`NonContractionError`.
    """
    _check_delta(exp, delta_bar)
    k = exp.kernel
    q = exp.r if q is None else q
    if not exp.r <= q <= exp.nu:
        raise ValueError("q must lie in [r, nu]")
    grid = exp.V
    m2 = ball_mask(grid, 2.0)
    A = operator_matrix(grid, k, 2.0, 2.0, 0.0, i)
    Vb = exp.V.flat()[m2]
    f, h, xi = truncated_parts(exp, i)
    src = f + h - xi
    scale = max(lq_norm(grid, src, q), 1e-300)
    w = np.zeros(m2.sum()) if w0 is None else np.asarray(w0.flat()[m2] if isinstance(w0, GridFunction) else w0, float)
    gaps = []
    factor = 0.0
    bad = 0
    it = 0
    for it in range(1, max_iter + 1):
        new = A @ (Vb * w) + src
        gap = lq_norm(grid, new - w, q)
        gaps.append(gap)
        w = new
        if len(gaps) >= 2 and gaps[-2] > 1e-13 * scale:
            ratio = gap / gaps[-2]
            factor = max(factor, ratio)
            bad = bad + 1 if ratio >= 1 else 0
            if bad >= 3:
                raise NonContractionError(f"gap ratio >= 1 for 3 steps (last {ratio:.3g}); delta(V)={exp.delta:.4g}")
        if gap <= tol * scale:
            break
    return ContractionResult(_embed(grid, m2, w), float(factor), max(it - 1, 1) if gaps[-1] <= tol * scale else it,
                             tuple(gaps))


@dataclass(frozen=True)
class EstimateResult:
    ratio: float
    lhs: float
    u_norm: float
    h_norm: float
    degenerate: bool

    def to_dict(self):
        return dict(self.__dict__)


def local_estimate_experiment(exp: RegularityExperiment, delta_bar=DELTA_BAR) -> EstimateResult:
    """||u||_{L^nu(B_1/2)} / (||u||_{L^r(B_3)} + ||h||_{L^nu(B_2)})."""
    _check_delta(exp, delta_bar)
    z = np.zeros(exp.n)
    lhs = lp_norm_ball(exp.u, exp.nu, z, 0.5)
    un = lp_norm_ball(exp.u, exp.r, z, 3.0)
    hn = lp_norm_ball(exp.h, exp.nu, z, 2.0)
    den = un + hn
    if den == 0:
        return EstimateResult(0.0, lhs, un, hn, True)
    return EstimateResult(lhs / den, lhs, un, hn, False)


# --- random draws ------------------------------------------------------------------

@dataclass(frozen=True)
class BumpField:
    """base + sum_j amp_j exp(-|x - c_j|^2 / (2 w_j^2)); a resolution-independent random field."""

    base: float
    amps: tuple
    centers: tuple
    widths: tuple

    def __call__(self, pts):
        pts = np.asarray(pts, float)
        out = np.full(len(pts), self.base)
        for a, c, w in zip(self.amps, self.centers, self.widths):
            out += a * np.exp(-np.sum((pts - np.asarray(c)) ** 2, axis=1) / (2 * w * w))
        return out

    @classmethod
    def random(cls, rng, n, bumps=3, base=0.0, radius=2.5, width=(0.3, 1.0), amp=(0.2, 1.0)):
        centers = rng.uniform(-1, 1, size=(bumps, n))
        centers *= radius * rng.uniform(0, 1, size=(bumps, 1)) / np.maximum(np.linalg.norm(centers, axis=1), 1e-12)[:, None]
        return cls(float(base), tuple(map(float, rng.uniform(*amp, bumps))), tuple(map(tuple, centers)),
                   tuple(map(float, rng.uniform(*width, bumps))))


@dataclass(frozen=True)
class Draw:
    V: BumpField
    u: BumpField
    xi: BumpField


def random_draw(rng, n):
    return Draw(BumpField.random(rng, n, 3), BumpField.random(rng, n, 3, base=rng.uniform(0.1, 0.5)),
                BumpField.random(rng, n, 2, amp=(0.0, 0.3)))


def draw_experiment(draw: Draw, k, resolution, r, nu, delta_target=DELTA_BAR / 2):
    return experiment_from_fields(k, resolution, draw.V, draw.u, draw.xi, r, nu, delta_target=delta_target)


def default_exponents(k: KernelParams):
    """(r, nu) = (1.5, 3) times n/(n-alpha)."""
    lim = k.n / (k.n - k.order)
    return 1.5 * lim, 3.0 * lim


# --- rescaling -------------------------------------------------------------------

@dataclass(frozen=True)
class RescaleResult:
    experiment: RegularityExperiment
    eps: float
    delta_rescaled: float
    delta_source: float
    min_slack: float

    @property
    def norm_identity_gap(self):
        return abs(self.delta_rescaled - self.delta_source) / max(self.delta_source, 1e-300)


def rescale_to_small_delta(V: Callable, u: Callable, h: Callable, k: KernelParams, eps, resolution=64, r=None,
                           nu=None, support_radius=np.inf) -> RescaleResult:
    """u_eps(x) = eps^((n-alpha)/2) u(eps x), V_eps(x) = eps^alpha V(eps x), h_eps(x) = eps^((n-alpha)/2) h(eps x).

    Returns the rescaled experiment (xi recomputed from h_eps), the rescaled delta and
    ||V||_{L^{n/alpha}(B_{3 eps})} computed independently on a lattice of
    [-3 eps, 3 eps]^n at twice the resolution, and the smallest slack on B_2
    (non-negative when the rescaled inequality holds).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if 3 * eps > support_radius:
        raise ValueError(f"B_(3 eps) with eps={eps} exceeds the data support radius {support_radius}")
    n, alpha = k.n, k.order
    s = (n - alpha) / 2
    d_r, d_nu = default_exponents(k)
    r = d_r if r is None else r
    nu = d_nu if nu is None else nu

    def Ve(p):
        return eps**alpha * np.asarray(V(eps * np.asarray(p)), float)

    def ue(p):
        return eps**s * np.asarray(u(eps * np.asarray(p)), float)

    def he(p):
        return eps**s * np.asarray(h(eps * np.asarray(p)), float)

    exp = experiment_from_fields(k, resolution, Ve, ue, None, r, nu, h=he)
    fine = GridFunction.from_function(Box.cube(n, 3 * eps), 2 * resolution, V)
    src = lp_norm_ball(fine, n / alpha, np.zeros(n), 3 * eps)
    Lu = apply_L(exp.V, exp.u, k, domain_ball=3.0, target_ball=2.0).flat()
    m2 = ball_mask(exp.V, 2.0)
    slack = (Lu + exp.h.flat() - exp.u.flat())[m2]
    return RescaleResult(exp, float(eps), exp.delta, src, float(slack.min()))
