"""Sphere inversion, Kelvin transforms and the comparison kernels.

Two transform conventions are supported, selected by ``KernelParams.mode``:

* ``riesz``: ``v_{x,lam}(xi) = (lam/|xi-x|)^(n-alpha) v(xi^{x,lam})``
* ``power``: ``v_{x,lam}(xi) = (|xi-x|/lam)^p v(xi^{x,lam})``

where ``xi^{x,lam} = x + lam^2 (xi-x)/|xi-x|^2``.  Everything here is a pure
function of its arguments.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# inputs closer than this (relative to the radius) to the inversion center are rejected
CENTER_GUARD = 1e-9


class GeometryError(ValueError):
    """Invalid geometric input (dimension mismatch, point at the center, ...)."""


@dataclass(frozen=True)
class KernelParams:
    """Exponent data of one of the integral equations.

    ``mode == "riesz"``: u(x) = int u(y)^mu |x-y|^(alpha-n) dy, ``order`` is alpha
    and ``exponent`` is mu.  ``mode == "power"``: u(x) = int |x-y|^p u(y)^-q dy,
    ``order`` is p and ``exponent`` is q.
    """

    n: int
    mode: str
    order: float
    exponent: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.n!r}")
        if self.mode == "riesz":
            if not 0 < self.order < self.n:
                raise ValueError(f"riesz mode needs 0 < alpha < n, got alpha={self.order}, n={self.n}")
            if not self.exponent > 0:
                raise ValueError(f"mu must be positive, got {self.exponent}")
        elif self.mode == "power":
            if not self.order > 0:
                raise ValueError(f"power mode needs p > 0, got {self.order}")
            if not self.exponent > 0:
                raise ValueError(f"q must be positive, got {self.exponent}")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def riesz(cls, n, alpha, mu=None):
        """Riesz-mode parameters; ``mu`` defaults to the critical (n+alpha)/(n-alpha)."""
        if mu is None:
            mu = (n + alpha) / (n - alpha) if 0 < alpha < n else 1.0
        return cls(int(n), "riesz", float(alpha), float(mu))

    @classmethod
    def power(cls, n, p, q=None):
        """Power-mode parameters; ``q`` defaults to the critical 1 + 2n/p."""
        if q is None:
            q = 1.0 + 2.0 * n / p if p > 0 else 1.0
        return cls(int(n), "power", float(p), float(q))

    @property
    def alpha(self):
        if self.mode != "riesz":
            raise AttributeError("alpha is only defined in riesz mode")
        return self.order

    @property
    def p(self):
        if self.mode != "power":
            raise AttributeError("p is only defined in power mode")
        return self.order

    @property
    def critical_exponent(self):
        if self.mode == "riesz":
            return (self.n + self.order) / (self.n - self.order)
        return 1.0 + 2.0 * self.n / self.order

    @property
    def is_critical(self):
        return abs(self.exponent - self.critical_exponent) <= 1e-12 * self.critical_exponent

    @property
    def weight_exponent(self):
        """Exponent w of the factor (lam/|z-x|)^w in the transformed equation.

        Riesz mode: n + alpha - mu (n - alpha).  Power mode: 2n - p q + p.
        Zero exactly at the critical exponent (the exponent is only known to
        round-off, so the critical case is returned as 0.0).
        """
        if self.is_critical:
            return 0.0
        n, a, e = self.n, self.order, self.exponent
        if self.mode == "riesz":
            return n + a - e * (n - a)
        return 2 * n - a * e + a

    @property
    def kernel_power(self):
        """Power of |x-y| in the kernel: alpha - n (riesz) or p (power)."""
        return self.order - self.n if self.mode == "riesz" else self.order

    def to_dict(self):
        return {"n": self.n, "mode": self.mode, "order": self.order, "exponent": self.exponent}


@dataclass(frozen=True)
class SphereParams:
    """Inversion sphere with ``center`` x and ``radius`` lambda."""

    center: np.ndarray = field()
    radius: float = 1.0

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise GeometryError("sphere center must be a finite point")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise GeometryError(f"sphere radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def n(self):
        return self.center.shape[0]


def as_point(p, n):
    """Coerce ``p`` to a 1-d float array of length ``n``; fail loudly otherwise."""
    a = np.atleast_1d(np.asarray(p, dtype=float))
    if a.shape != (n,):
        raise GeometryError(f"expected a point in R^{n}, got shape {a.shape}")
    return a


def as_points(pts, n):
    """Coerce to an (m, n) array; a single point becomes (1, n)."""
    a = np.asarray(pts, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1) if n > 1 or a.size == 1 else a.reshape(-1, 1)
    if a.ndim != 2 or a.shape[1] != n:
        raise GeometryError(f"expected points in R^{n}, got shape {np.shape(pts)}")
    return a


def _check_dims(s, k=None):
    if k is not None and s.n != k.n:
        raise GeometryError(f"sphere lives in R^{s.n} but kernel parameters have n={k.n}")


def _offset(s, xi):
    d = xi - s.center
    r = np.linalg.norm(d, axis=-1)
    if np.any(r < CENTER_GUARD * s.radius):
        raise GeometryError("point coincides with the inversion center")
    return d, r


def invert_point(s: SphereParams, xi):
    """Return xi^{x,lam} = x + lam^2 (xi - x) / |xi - x|^2."""
    xi = as_point(xi, s.n)
    d, r = _offset(s, xi)
    return s.center + (s.radius**2 / r**2) * d


def invert_points(s: SphereParams, pts):
    """Vectorised :func:`invert_point` over an (m, n) array."""
    pts = as_points(pts, s.n)
    d, r = _offset(s, pts)
    return s.center + (s.radius**2 / r**2)[:, None] * d


def kelvin_factor(s, k, r):
    """Prefactor of the transform at distance ``r`` from the center."""
    if k.mode == "riesz":
        return (s.radius / r) ** (k.n - k.order)
    return (r / s.radius) ** k.order


def kelvin_value(s: SphereParams, k: KernelParams, v: Callable, xi):
    """Evaluate v_{x,lam}(xi) in the convention selected by ``k.mode``.

    ``v`` takes an (m, n) array and returns m values.
    """
    _check_dims(s, k)
    xi = as_point(xi, s.n)
    d, r = _offset(s, xi)
    star = s.center + (s.radius**2 / r**2) * d
    return float(kelvin_factor(s, k, r) * np.asarray(v(star[None, :]), dtype=float).reshape(-1)[0])


def kelvin_values(s: SphereParams, k: KernelParams, v: Callable, pts):
    """Vectorised :func:`kelvin_value`."""
    _check_dims(s, k)
    pts = as_points(pts, s.n)
    d, r = _offset(s, pts)
    star = s.center + (s.radius**2 / r**2)[:, None] * d
    return kelvin_factor(s, k, r) * np.asarray(v(star), dtype=float).reshape(-1)


def kelvin_transform(s: SphereParams, k: KernelParams, v: Callable) -> Callable:
    """Return the transformed field v_{x,lam} as a vectorised callable."""
    return lambda pts: kelvin_values(s, k, v, pts)


def distance_identity_residual(s: SphereParams, xi, z):
    """|(|z-x|/lam)(|xi-x|/lam)|xi* - z*| - |xi - z||, scaled by max(|xi-z|, lam)."""
    xi, z = as_point(xi, s.n), as_point(z, s.n)
    lam = s.radius
    lhs = (np.linalg.norm(z - s.center) / lam) * (np.linalg.norm(xi - s.center) / lam)
    lhs *= np.linalg.norm(invert_point(s, xi) - invert_point(s, z))
    rhs = np.linalg.norm(xi - z)
    return abs(lhs - rhs) / max(rhs, lam)


def kernel_K(s: SphereParams, k: KernelParams, xi, z):
    """K(x,lam; xi,z) = |xi-z|^(alpha-n) - (lam/|xi-x|)^(n-alpha) |xi*-z|^(alpha-n)."""
    if k.mode != "riesz":
        raise GeometryError("kernel_K needs riesz mode")
    _check_dims(s, k)
    xi, z = as_point(xi, s.n), as_point(z, s.n)
    _offset(s, z)
    dist = np.linalg.norm(xi - z)
    if dist == 0.0:
        raise GeometryError("kernel_K is singular at xi == z")
    d, r = _offset(s, xi)
    star = s.center + (s.radius**2 / r**2) * d
    s_ = k.n - k.order
    return dist**-s_ - (s.radius / r) ** s_ * np.linalg.norm(star - z) ** -s_


def kernel_K_via_identity(s: SphereParams, k: KernelParams, xi, z):
    """K with the inversion moved from xi onto z.

    The distance identity applied to (xi, z*) gives |xi* - z| = |xi - z*| |z-x| / |xi-x|,
    hence K = |xi-z|^-s - (lam/|z-x|)^s |xi - z*|^-s with s = n - alpha.
    """
    xi, z = as_point(xi, s.n), as_point(z, s.n)
    s_ = k.n - k.order
    zs = invert_point(s, z)
    rz = np.linalg.norm(z - s.center)
    return np.linalg.norm(xi - z) ** -s_ - (s.radius / rz) ** s_ * np.linalg.norm(xi - zs) ** -s_


def kernel_k(s: SphereParams, k: KernelParams, xi, z):
    """k(x,lam; xi,z) = (|xi-x|/lam)^p |xi*-z|^p - |xi-z|^p."""
    if k.mode != "power":
        raise GeometryError("kernel_k needs power mode")
    _check_dims(s, k)
    xi, z = as_point(xi, s.n), as_point(z, s.n)
    _offset(s, z)
    d, r = _offset(s, xi)
    star = s.center + (s.radius**2 / r**2) * d
    p = k.order
    return (r / s.radius) ** p * np.linalg.norm(star - z) ** p - np.linalg.norm(xi - z) ** p


def kernel_K_batch(s, k, xi, z):
    """Vectorised K over matching (m, n) arrays of xi and z."""
    xi, z = as_points(xi, s.n), as_points(z, s.n)
    d, r = _offset(s, xi)
    _offset(s, z)
    star = s.center + (s.radius**2 / r**2)[:, None] * d
    s_ = k.n - k.order
    return np.linalg.norm(xi - z, axis=1) ** -s_ - (s.radius / r) ** s_ * np.linalg.norm(star - z, axis=1) ** -s_


def kernel_k_batch(s, k, xi, z):
    """Vectorised k over matching (m, n) arrays of xi and z."""
    xi, z = as_points(xi, s.n), as_points(z, s.n)
    d, r = _offset(s, xi)
    _offset(s, z)
    star = s.center + (s.radius**2 / r**2)[:, None] * d
    p = k.order
    return (r / s.radius) ** p * np.linalg.norm(star - z, axis=1) ** p - np.linalg.norm(xi - z, axis=1) ** p


def kernel_K_radial_derivative_at_sphere(s: SphereParams, k: KernelParams, y_dir, z):
    """Closed form of grad_y K(0,lam; y,z) . y at |y| = lam.

    Equals (n-alpha) |y-z|^(alpha-n-2) (|z|^2 - |y|^2) with y = lam * y_dir; the
    sphere must be centered at the origin and |z| > lam.
    """
    if k.mode != "riesz":
        raise GeometryError("radial derivative of K needs riesz mode")
    _check_dims(s, k)
    if np.any(s.center != 0):
        raise GeometryError("closed form assumes the sphere is centered at the origin")
    u = as_point(y_dir, s.n)
    u = u / np.linalg.norm(u)
    z = as_point(z, s.n)
    rz = np.linalg.norm(z)
    if rz <= s.radius:
        raise GeometryError("need |z| > lambda")
    y = s.radius * u
    a = k.order
    return (k.n - a) * np.linalg.norm(y - z) ** (a - k.n - 2) * (rz**2 - s.radius**2)
