"""Potentials of general (non-radial) densities in polar coordinates about the evaluation point.

    int_D F(y) |eta - y|^beta dy = int_{S^{n-1}} int_{rho in D_omega} F(eta + rho w) rho^(beta+n-1) drho dsigma(w)

The weak singularity rho^(beta+n-1) at the evaluation point is absorbed into
Gauss-Jacobi weights.  D is all of the truncation ball or the exterior/interior
of a ball B(c, lam); rays are cut exactly at the sphere, and the polar axis is
aligned with c so that the tangent cone sits at a fixed polar angle where the
angular rule is split.  Works for n <= 3.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .radial import QuadratureSpec


@dataclass(frozen=True)
class BallRegion:
    """``kind`` is "exterior" (|y - c| >= radius) or "interior" (|y - c| < radius)."""

    center: tuple
    radius: float
    kind: str = "exterior"

    def __post_init__(self):
        if self.kind not in ("exterior", "interior"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if not self.radius > 0:
            raise ValueError("region radius must be positive")
        object.__setattr__(self, "center", tuple(float(v) for v in np.atleast_1d(self.center)))


@lru_cache(maxsize=32)
def _gl(m):
    return np.polynomial.legendre.leggauss(m)


@lru_cache(maxsize=32)
def _gj(m, e):
    x, w = roots_jacobi(m, 0.0, e)  # weight (1+x)^e
    return x, w


def _frame(pole, n):
    """Orthonormal basis (rows) whose first row is ``pole``."""
    pole = np.asarray(pole, float)
    basis = np.eye(n)
    j = int(np.argmin(np.abs(pole)))
    m = np.vstack([pole, np.delete(basis, j, axis=0)]) if n > 1 else pole[None, :]
    q, _ = np.linalg.qr(m.T)
    q = q.T
    if np.dot(q[0], pole) < 0:
        q = -q
    return q


def _smooth_pieces(breaks, m):
    """Gauss rule on each [a, b] piece after the map a + (b-a)(3v^2 - 2v^3), which
    absorbs square-root behaviour at piece ends."""
    x, w = _gl(m)
    v = 0.5 * (x + 1)
    wv = 0.5 * w
    nodes, wts = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        nodes.append(a + (b - a) * (3 * v**2 - 2 * v**3))
        wts.append((b - a) * 6 * v * (1 - v) * wv)
    return np.concatenate(nodes), np.concatenate(wts)


def _angular(n, breaks, spec):
    """Polar angles with weights (sin factor included) and the ring of unit vectors
    in the plane orthogonal to the pole, with ring weights."""
    if n == 1:
        return np.array([0.0, np.pi]), np.ones(2), np.zeros((1, 0)), np.ones(1)
    th, wt = _smooth_pieces(breaks, spec.angular_resolution)
    if n == 2:
        return th, wt, np.array([[1.0], [-1.0]]), np.ones(2)
    m_phi = 2 * spec.angular_resolution
    phi = 2 * np.pi * np.arange(m_phi) / m_phi
    ring = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    return th, wt * np.sin(th), ring, np.full(m_phi, 2 * np.pi / m_phi)


def _segments(region, eta, axis_dist, cos_t, R):
    """Allowed rho-intervals along the ray with polar angle t (pole toward the region center)."""
    if region is None:
        return [(0.0, R)]
    lam = region.radius
    b = -axis_dist * cos_t  # w . (eta - c)
    cc = axis_dist**2 - lam**2
    disc = b * b - cc
    if cc < 0:
        r_exit = -b + np.sqrt(disc)
        return [(r_exit, R)] if region.kind == "exterior" else [(0.0, r_exit)]
    if disc > 0 and b < 0:
        sq = np.sqrt(disc)
        r1, r2 = max(-b - sq, 0.0), -b + sq
        if region.kind == "exterior":
            return [(0.0, r1), (r2, R)]
        return [(r1, r2)]
    return [(0.0, R)] if region.kind == "exterior" else []


def _edges(spec, feature):
    """Panel edges in rho: a few levels toward 0, uniform steps of scale/2 across the
    feature range, then doubling out to R."""
    h = 0.5 * spec.scale
    R = spec.truncation_radius
    near = h * 0.5 ** np.arange(1, 5)
    uniform = np.arange(1, int(np.ceil(feature / h)) + 1) * h
    top = uniform[-1] if uniform.size else h
    geo = top * 2.0 ** np.arange(1, 200)
    geo = geo[geo < R]
    return np.unique(np.concatenate([near, [h], uniform, geo]))


def _ray_rule(segments, edges, e, m):
    """rho nodes and weights (including rho^e) for the union of ``segments``."""
    xg, wg = _gl(m)
    xj, wj = _gj(m, e)
    nodes, wts = [], []
    for lo, hi in segments:
        if hi <= lo:
            continue
        inner = edges[(edges > lo) & (edges < hi)]
        ed = np.concatenate([[lo], inner, [hi]])
        a, b = ed[:-1], ed[1:]
        start = 0
        if lo == 0.0:
            half = 0.5 * b[0]
            nodes.append(half * (xj + 1))
            wts.append(half ** (e + 1) * wj)
            start = 1
        if b.size > start:
            aa, bb = a[start:, None], b[start:, None]
            r = 0.5 * (bb - aa) * xg + 0.5 * (aa + bb)
            nodes.append(r.ravel())
            wts.append((0.5 * (bb - aa) * wg * r**e).ravel())
    if not nodes:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(nodes), np.concatenate(wts)


def polar_potential(density, eta, beta, spec: QuadratureSpec, region: BallRegion | None = None, focus=None):
    """int_D density(y) |eta - y|^beta dy over the truncation ball around eta.

    ``density`` takes an (m, n) array and returns m values.  ``focus`` is a point
    near which the density varies on the length ``spec.scale``; the polar axis
    points at it when no region is given.
    """
    eta = np.atleast_1d(np.asarray(eta, float))
    n = eta.size
    if n > 3:
        raise ValueError("polar potentials are implemented for n <= 3")
    e = beta + n - 1
    if e <= -1:
        raise ValueError("kernel not locally integrable")
    R = spec.truncation_radius
    target = None
    if region is not None:
        target = np.asarray(region.center)
        if target.size != n:
            raise ValueError("region dimension mismatch")
    elif focus is not None:
        target = np.atleast_1d(np.asarray(focus, float))
    dist = 0.0 if target is None else float(np.linalg.norm(target - eta))
    pole = (target - eta) / dist if dist > 1e-12 * max(spec.scale, 1.0) else np.eye(n)[0]
    frame = _frame(pole, n)
    breaks = [0.0, np.pi]
    if region is not None and dist > region.radius:
        breaks = [0.0, float(np.arcsin(region.radius / dist)), np.pi]
    theta, w_theta, ring, w_ring = _angular(n, breaks, spec)
    feature = dist + (region.radius if region is not None else 0.0) + 8 * spec.scale
    edges = _edges(spec, feature)
    axis_dist = dist if region is not None else 0.0
    total = 0.0
    for t, wt in zip(theta, w_theta):
        segs = _segments(region, eta, axis_dist, np.cos(t), R)
        rho, wr = _ray_rule(segs, edges, e, spec.resolution)
        if rho.size == 0:
            continue
        if n == 1:
            dirs = (np.cos(t) * frame[0])[None, :]
        else:
            dirs = np.cos(t) * frame[0][None, :] + np.sin(t) * (ring @ frame[1:])
        pts = eta[None, None, :] + rho[None, :, None] * dirs[:, None, :]
        vals = np.asarray(density(pts.reshape(-1, n)), float).reshape(len(dirs), rho.size)
        total += wt * float(w_ring @ (vals @ wr))
    return total
