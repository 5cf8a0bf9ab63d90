"""Radial reduction of Riesz and power potentials, any dimension.

For a radial integrand f(|y|),

    int_{R^n} f(|y|) |x - y|^beta dy = int_0^R f(s) s^(n-1) Phi(|x|, s) ds,

with the sphere average Phi(r, s) = int_{S^{n-1}} |r e_1 - s w|^beta dsigma(w).
Phi is evaluated in closed form (n = 1, 3) or through 2F1; the one-dimensional
integral uses Gauss panels graded geometrically toward s = 0 and toward the
diagonal s = r, with Gauss-Jacobi end panels when the diagonal singularity is
not integrable by plain Gauss rules.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import hyp2f1, roots_jacobi

from ..geometry import KernelParams
from .cells import sphere_area


@dataclass(frozen=True)
class QuadratureSpec:
    """Truncation and resolution settings shared by the quadrature paths.

    ``resolution`` is the Gauss order per panel on the radial and polar paths and
    the number of cells per axis on grids.  ``diagonal_grading`` is the number of
    geometric (ratio 1/2) levels toward the kernel diagonal, ``zero_grading`` the
    number toward the origin.  ``scale`` is the length scale of the integrand,
    used to place panels when evaluating at the origin.
    """

    truncation_radius: float = 1e8
    resolution: int = 16
    diagonal_grading: int = 30
    zero_grading: int = 80
    tail_decay_exponent: float | None = None
    scale: float = 1.0
    angular_resolution: int = 48

    def __post_init__(self):
        if not self.truncation_radius > 0:
            raise ValueError("truncation radius must be positive")
        if self.diagonal_grading < 4:
            raise ValueError("diagonal grading needs at least 4 levels")
        if self.resolution < 2:
            raise ValueError("resolution must be at least 2")

    def refined(self, factor):
        return replace(self, resolution=int(self.resolution * factor),
                       angular_resolution=int(self.angular_resolution * factor))

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class RadialProfile:
    """Samples of a radial function at strictly increasing positive radii.

    Evaluation interpolates with a cubic spline in (log r, log f) when all values
    are positive, linearly in (log r, f) otherwise.  Outside the nodes a power law
    through the two end nodes is used (``tail_exponent`` overrides the outer slope).
    """

    def __init__(self, nodes, values, n, tail_exponent=None):
        nodes = np.array(nodes, dtype=float)
        values = np.array(values, dtype=float)
        if nodes.ndim != 1 or nodes.shape != values.shape or nodes.size < 2:
            raise ValueError("nodes and values must be matching 1-d arrays with >= 2 entries")
        if not (np.all(nodes > 0) and np.all(np.diff(nodes) > 0)):
            raise ValueError("nodes must be positive and strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("profile values must be finite")
        nodes.setflags(write=False)
        values.setflags(write=False)
        self.nodes, self.values, self.n = nodes, values, int(n)
        self.tail_exponent = tail_exponent
        self._positive = bool(np.all(values > 0))
        lr = np.log(nodes)
        if self._positive:
            lv = np.log(values)
            self._spline = CubicSpline(lr, lv) if nodes.size > 3 else None
            self._lv = lv
            self._slope_lo = (lv[1] - lv[0]) / (lr[1] - lr[0])
            self._slope_hi = (lv[-1] - lv[-2]) / (lr[-1] - lr[-2]) if tail_exponent is None else -tail_exponent
        self._lr = lr

    @classmethod
    def from_function(cls, func, nodes, n, tail_exponent=None):
        nodes = np.asarray(nodes, float)
        return cls(nodes, func(nodes), n, tail_exponent)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        ls = np.log(np.maximum(s, 1e-300))
        lr = self._lr
        if self._positive:
            inner = self._spline(ls) if self._spline is not None else np.interp(ls, lr, self._lv)
            lo = self._lv[0] + self._slope_lo * (ls - lr[0])
            hi = self._lv[-1] + self._slope_hi * (ls - lr[-1])
            out = np.where(ls < lr[0], lo, np.where(ls > lr[-1], hi, inner))
            return np.exp(out)
        return np.interp(ls, lr, self.values)

    @property
    def support(self):
        return float(self.nodes[0]), float(self.nodes[-1])

    def with_values(self, values):
        return RadialProfile(self.nodes, values, self.n, self.tail_exponent)

    def to_csv(self, path=None):
        """Header rows ``kind,radial`` / ``n``, then ``node,value`` rows."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "radial"])
        w.writerow(["n", self.n])
        w.writerow(["node", "value"])
        for r, v in zip(self.nodes, self.values):
            w.writerow([repr(float(r)), repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path):
        return cls.parse_csv(Path(path).read_text())

    @classmethod
    def parse_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["kind", "radial"] or rows[2] != ["node", "value"]:
            raise ValueError("not a radial profile CSV")
        data = np.array([[float(a), float(b)] for a, b in rows[3:]])
        return cls(data[:, 0], data[:, 1], int(rows[1][1]))


# --- sphere averages ------------------------------------------------------------

def _sphere_average(r, s, n, beta):
    """int_{S^{n-1}} |r e_1 - s w|^beta dsigma for arrays r, s >= 0 (r != s if beta <= 1-n)."""
    r, s = np.broadcast_arrays(np.asarray(r, float), np.asarray(s, float))
    big = np.maximum(r, s)
    small = np.minimum(r, s)
    if n == 1:
        return np.abs(r - s) ** beta + (r + s) ** beta
    out = np.empty_like(big)
    zero = small == 0
    out[zero] = sphere_area(n) * big[zero] ** beta
    nz = ~zero
    t = small[nz] / big[nz]
    a = -beta / 2
    if n == 3:
        # closed form near the diagonal, 2F1 where the closed form cancels badly
        e = beta + 2
        near = t > 0.5
        res = np.empty_like(t)
        rr, ss = r[nz][near], s[nz][near]
        if abs(e) < 1e-14:
            res[near] = 2 * np.pi * (np.log(rr + ss) - np.log(np.abs(rr - ss))) / (rr * ss)
        else:
            res[near] = 2 * np.pi * ((rr + ss) ** e - np.abs(rr - ss) ** e) / (e * rr * ss)
        far = ~near
        res[far] = sphere_area(3) * big[nz][far] ** beta * hyp2f1(a, a - 0.5, 1.5, t[far] ** 2)
        out[nz] = res
        return out
    out[nz] = sphere_area(n) * big[nz] ** beta * hyp2f1(a, a - n / 2 + 1, n / 2, t**2)
    return out


def angular_kernel(r, s, k: KernelParams):
    """Phi(r, s) = int_{S^{n-1}} |r e_1 - s w|^(alpha-n) dsigma(w), riesz mode."""
    if k.mode != "riesz":
        raise ValueError("angular_kernel needs riesz mode")
    r_, s_ = np.asarray(r, float), np.asarray(s, float)
    if np.any(r_ < 0) or np.any(s_ < 0):
        raise ValueError("radii must be non-negative")
    if np.any((r_ == s_) & (k.order <= 1)):
        raise ValueError("Phi is singular on the diagonal r == s")
    out = _sphere_average(r_, s_, k.n, k.order - k.n)
    return float(out) if out.ndim == 0 else out


def power_angular_kernel(r, s, k: KernelParams):
    """Psi(r, s) = int_{S^{n-1}} |r e_1 - s w|^p dsigma(w), power mode."""
    if k.mode != "power":
        raise ValueError("power_angular_kernel needs power mode")
    out = _sphere_average(np.asarray(r, float), np.asarray(s, float), k.n, k.order)
    return float(out) if out.ndim == 0 else out


# --- panel rules ----------------------------------------------------------------

@lru_cache(maxsize=64)
def _gauss(m):
    return np.polynomial.legendre.leggauss(m)


@lru_cache(maxsize=64)
def _jacobi(m, a):
    x, w = roots_jacobi(m, a, 0.0)  # weight (1-x)^a on [-1, 1]
    return x, w


def _gl_panels(edges, m):
    x, w = _gauss(m)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    wts = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), wts.ravel()


def _singular_end_panel(lo, hi, at_hi, expo, m):
    """Nodes/weights for int_lo^hi F(s) ds where F ~ |s - end|^expo (expo > -1).

    The returned weights already divide out the weight function, so they are
    applied to the full integrand F.
    """
    x, w = _jacobi(m, expo)
    width = hi - lo
    dist = 0.5 * width * (1 - x)  # distance to the singular end
    s = hi - dist if at_hi else lo + dist
    wts = (0.5 * width) ** (expo + 1) * w * dist ** (-expo)
    # (width/2)^(expo+1) (1-x)^expo / dist^expo == width/2
    return s, wts


def radial_rule(r_eval, spec: QuadratureSpec, singular_exponent=None):
    """Nodes and weights on (0, R) for an integrand that may be singular at 0 and at r_eval.

    ``singular_exponent`` (> -1) requests Gauss-Jacobi end panels at the diagonal.
    """
    m = spec.resolution
    R = spec.truncation_radius
    parts = []
    ratio = 0.5
    if r_eval <= 0 or r_eval >= R:
        anchor = min(spec.scale, R / 2) if r_eval <= 0 else R / 2
        lower = anchor * ratio ** np.arange(spec.zero_grading, -1, -1)
        up = [anchor]
        while up[-1] * 2 < R:
            up.append(up[-1] * 2)
        edges = np.concatenate([[0.0], lower, np.array(up[1:]), [R]])
        edges = np.unique(edges)
        parts.append(_gl_panels(edges, m))
        return _join(parts)
    r = r_eval
    half = 0.5 * r
    # toward zero: (0, r/2]
    lower = half * ratio ** np.arange(spec.zero_grading, -1, -1)
    parts.append(_gl_panels(np.concatenate([[0.0], lower]), m))
    L = spec.diagonal_grading
    band = half * ratio ** np.arange(0, L + 1)  # half .. tiny
    left = r - band  # r/2 .. r-tiny
    parts.append(_gl_panels(left, m))
    right_hi = min(r + half, R)
    band_r = (right_hi - r) * ratio ** np.arange(0, L + 1)
    right = (r + band_r)[::-1]  # r+tiny .. r+half
    parts.append(_gl_panels(right, m))
    tiny_l, tiny_r = band[-1], band_r[-1]
    if singular_exponent is not None and singular_exponent < 0:
        parts.append(_singular_end_panel(r - tiny_l, r, True, singular_exponent, m))
        parts.append(_singular_end_panel(r, r + tiny_r, False, singular_exponent, m))
    else:
        parts.append(_gl_panels(np.array([r - tiny_l, r]), m))
        parts.append(_gl_panels(np.array([r, r + tiny_r]), m))
    if right_hi < R:
        up = [right_hi]
        while up[-1] * 2 < R:
            up.append(up[-1] * 2)
        up.append(R)
        parts.append(_gl_panels(np.array(up), m))
    return _join(parts)


def _join(parts):
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _integrand_values(f, s):
    vals = f(s) if callable(f) else np.asarray(f, float)
    return np.asarray(vals, dtype=float)


def _tail_term(coefficient, n, kernel_power, spec):
    """Leading-order mass beyond R of coefficient * s^(-decay) against |x - y|^kernel_power."""
    decay = spec.tail_decay_exponent
    if decay is None:
        raise ValueError("a tail coefficient needs spec.tail_decay_exponent")
    eff = decay - kernel_power - n
    if eff <= 0:
        raise ValueError("integrand does not decay fast enough for a finite tail")
    return coefficient * sphere_area(n) * spec.truncation_radius ** (-eff) / eff


def riesz_potential_radial(f, k: KernelParams, r_eval, spec: QuadratureSpec, transform=None,
                           tail_coefficient=None):
    """int_{|y|<R} g(|y|) |x - y|^(alpha-n) dy at |x| = r_eval, with g = f or transform(f).

    ``f`` is a :class:`RadialProfile` or a vectorised callable of the radius;
    ``transform`` (e.g. ``lambda v: v**mu``) is applied to the sampled values.
    With ``tail_coefficient`` c the leading-order contribution of g ~ c s^(-decay)
    beyond R (decay from the spec) is added.
    """
    if k.mode != "riesz":
        raise ValueError("riesz_potential_radial needs riesz mode")
    if r_eval < 0:
        raise ValueError("r_eval must be non-negative")
    if isinstance(f, RadialProfile) and r_eval > f.nodes[-1] * (1 + 1e-12):
        raise ValueError("evaluation radius beyond the profile support")
    expo = k.order - 1.0
    s, w = radial_rule(float(r_eval), spec, expo if expo < 0 else None)
    g = _integrand_values(f, s)
    if transform is not None:
        g = transform(g)
    phi = _sphere_average(np.full_like(s, r_eval), s, k.n, k.order - k.n)
    total = float(np.sum(w * g * s ** (k.n - 1) * phi))
    if tail_coefficient is not None:
        total += _tail_term(tail_coefficient, k.n, k.order - k.n, spec)
    return total


def power_potential_radial(f, k: KernelParams, r_eval, spec: QuadratureSpec, transform=None,
                           tail_coefficient=None):
    """int_{|y|<R} g(|y|) |x - y|^p dy at |x| = r_eval (tail handling as in the riesz case)."""
    if k.mode != "power":
        raise ValueError("power_potential_radial needs power mode")
    s, w = radial_rule(float(r_eval), spec)
    g = _integrand_values(f, s)
    if transform is not None:
        g = transform(g)
    if np.any(g < 0):
        raise ValueError("power potential needs a non-negative integrand")
    psi = _sphere_average(np.full_like(s, r_eval), s, k.n, k.order)
    total = float(np.sum(w * g * s ** (k.n - 1) * psi))
    if tail_coefficient is not None:
        total += _tail_term(tail_coefficient, k.n, k.order, spec)
    return total


def radial_potential(f, k, r_eval, spec, transform=None, tail_coefficient=None):
    """Dispatch on ``k.mode``."""
    if k.mode == "riesz":
        return riesz_potential_radial(f, k, r_eval, spec, transform, tail_coefficient)
    return power_potential_radial(f, k, r_eval, spec, transform, tail_coefficient)


def radial_mass(f: Callable, n, spec: QuadratureSpec, r_inner=0.0, r_outer=None, transform=None):
    """int_{r_inner < |y| < r_outer} g(|y|) dy for a radial g (default outer radius R)."""
    r_outer = spec.truncation_radius if r_outer is None else r_outer
    sub = replace(spec, truncation_radius=r_outer)
    s, w = radial_rule(0.0, sub)
    keep = s > r_inner
    if r_inner > 0:
        # re-grade so that the inner cut is a panel edge
        edges = np.unique(np.concatenate([r_inner * 2.0 ** np.arange(0, 200), [r_outer]]))
        edges = edges[(edges >= r_inner) & (edges <= r_outer)]
        s, w = _gl_panels(edges, spec.resolution)
        keep = np.ones_like(s, bool)
    g = _integrand_values(f, s[keep])
    if transform is not None:
        g = transform(g)
    return float(sphere_area(n) * np.sum(w[keep] * g * s[keep] ** (n - 1)))


def lp_norm_radial(f: Callable, exponent, n, r_inner, r_outer, spec: QuadratureSpec):
    """(int_{r_inner<|y|<r_outer} |f|^t dy)^(1/t) for a radial f."""
    if exponent <= 0:
        raise ValueError("exponent must be positive")
    mass = radial_mass(f, n, spec, r_inner, r_outer, transform=lambda v: np.abs(v) ** exponent)
    return mass ** (1.0 / exponent)
