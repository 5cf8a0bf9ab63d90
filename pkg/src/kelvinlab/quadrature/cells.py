"""Exact and corrected cell integrals of the homogeneous kernel |y|^beta."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import gamma, hyp2f1, zeta

_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


def sphere_area(n):
    """Surface measure of the unit sphere S^{n-1} (2 for n = 1)."""
    return 2.0 * np.pi ** (n / 2) / gamma(n / 2)


def ball_volume(n, radius=1.0):
    return sphere_area(n) / n * radius**n


def _segment(d, t1, t2, beta):
    """int_{t1}^{t2} (d^2 + t^2)^(beta/2) dt for d > 0."""

    def prim(t):
        return t * d**beta * hyp2f1(-beta / 2, 0.5, 1.5, -(t / d) ** 2)

    return prim(t2) - prim(t1)


def _corner(d, S, T, beta):
    """int_0^S int_0^T (d^2 + s^2 + t^2)^(beta/2) ds dt for S, T >= 0, d > 0."""
    if S == 0.0 or T == 0.0:
        return 0.0
    e = beta / 2 + 1

    def inner(rho):
        if abs(e) < 1e-14:
            return 0.5 * np.log1p((rho / d) ** 2)
        return ((d * d + rho * rho) ** e - d ** (2 * e)) / (2 * e)

    th1 = np.arctan2(T, S)
    th = 0.5 * th1 * (_GL_X + 1)
    a = 0.5 * th1 * np.dot(_GL_W, inner(S / np.cos(th)))
    th = th1 + 0.5 * (0.5 * np.pi - th1) * (_GL_X + 1)
    b = 0.5 * (0.5 * np.pi - th1) * np.dot(_GL_W, inner(T / np.sin(th)))
    return a + b


def _rect(d, s1, s2, t1, t2, beta):
    def h(S, T):
        return np.sign(S) * np.sign(T) * _corner(d, abs(S), abs(T), beta)

    return h(s2, t2) - h(s1, t2) - h(s2, t1) + h(s1, t1)


def box_kernel_integral(lower, upper, x, beta):
    """Integral of |y - x|^beta over the box [lower, upper], any x, beta > -n.

    Divergence theorem on |y-x|^beta (y-x) turns the volume integral into face
    integrals weighted by the signed face distance; faces are done in closed form
    (n <= 2) or by a one-dimensional angular rule (n = 3).
    """
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    x = np.asarray(x, float)
    n = lower.size
    if beta <= -n:
        raise ValueError("kernel not locally integrable")
    if n > 3:
        raise ValueError("box integrals are implemented for n <= 3")
    total = 0.0
    for axis in range(n):
        others = [a for a in range(n) if a != axis]
        for bound, sign in ((upper[axis], 1.0), (lower[axis], -1.0)):
            d = sign * (bound - x[axis])
            if d == 0.0:
                continue
            ad = abs(d)
            if n == 1:
                face = ad**beta
            elif n == 2:
                o = others[0]
                face = _segment(ad, lower[o] - x[o], upper[o] - x[o], beta)
            else:
                o1, o2 = others
                face = _rect(ad, lower[o1] - x[o1], upper[o1] - x[o1],
                             lower[o2] - x[o2], upper[o2] - x[o2], beta)
            total += d * face
    return total / (n + beta)


def _lattice_sum(n, beta, M):
    ax = np.arange(-M, M + 1, dtype=float) ** 2
    if n == 1:
        r2 = ax
    elif n == 2:
        r2 = ax[:, None] + ax[None, :]
    else:
        r2 = ax[:, None, None] + ax[None, :, None] + ax[None, None, :]
    r2 = r2[r2 > 0]
    return np.sum(r2 ** (beta / 2))


@lru_cache(maxsize=None)
def lattice_self_constant(n, alpha):
    """Self-cell constant c so that the punctured midpoint sum plus c h^alpha f(x)
    integrates |x-y|^(alpha-n) f(y) to second order when x is a cell midpoint.

    c = lim_M [ int_{[-M-1/2, M+1/2]^n} |y|^(alpha-n) dy - sum_{0<|j|_inf<=M} |j|^(alpha-n) ].
    For n = 1 this is -2 zeta(1 - alpha); otherwise it is extrapolated in M.
    """
    if not 0 < alpha < n:
        raise ValueError("need 0 < alpha < n")
    if n == 1:
        return float(-2.0 * zeta(1.0 - alpha))
    beta = alpha - n
    unit = box_kernel_integral(-np.ones(n), np.ones(n), np.zeros(n), beta)
    Ms = (16, 32, 64)
    vals = [unit * (M + 0.5) ** alpha - _lattice_sum(n, beta, M) for M in Ms]
    # midpoint error expansion in M; the M^(alpha-2) term vanishes for alpha = 2
    powers = [alpha - 4, alpha - 6] if abs(alpha - 2) < 1e-12 else [alpha - 2, alpha - 4]
    A = np.array([[1.0] + [M**q for q in powers] for M in Ms])
    return float(np.linalg.solve(A, np.array(vals))[0])


def ball_self_weight(n, alpha, cell_volume):
    """Self-cell weight from the ball of equal volume: |S^{n-1}| rho^alpha / alpha."""
    rho = (cell_volume / ball_volume(n)) ** (1.0 / n)
    return sphere_area(n) * rho**alpha / alpha


def self_weight(n, alpha, spacing, rule="lattice", cap=None):
    """Weight of the cell containing the evaluation point.

    ``rule="lattice"`` uses :func:`lattice_self_constant` (cubic cells only; falls
    back to the ball rule otherwise), ``rule="ball"`` the equal-volume-ball rule.
    With ``cap`` the mass of min(|z|^(alpha-n), cap) is used: the part of the
    kernel above the cap, which lives in the ball of radius cap^(-1/(n-alpha)),
    is removed exactly.
    """
    spacing = np.broadcast_to(np.asarray(spacing, float), (n,))
    vol = float(np.prod(spacing))
    cubic = np.allclose(spacing, spacing[0], rtol=1e-12)
    if rule == "lattice" and cubic:
        w = lattice_self_constant(n, alpha) * spacing[0] ** alpha
    elif rule in ("lattice", "ball"):
        w = ball_self_weight(n, alpha, vol)
    else:
        raise ValueError(f"unknown self-cell rule {rule!r}")
    if cap is not None and np.isfinite(cap):
        rho_c = cap ** (-1.0 / (n - alpha))
        rho_cell = (vol / ball_volume(n)) ** (1.0 / n)
        if rho_c >= rho_cell:
            return cap * vol
        excess = sphere_area(n) * (rho_c**alpha / alpha - cap * rho_c**n / n)
        w -= excess
    return w
