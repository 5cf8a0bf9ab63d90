"""Riesz and power potentials of grid functions."""
from __future__ import annotations

import itertools

import numpy as np

from .. import _ext
from .cells import box_kernel_integral, self_weight
from .grids import GridFunction


def _check_alpha(f, alpha):
    if not 0 < alpha < f.n:
        raise ValueError(f"need 0 < alpha < n, got alpha={alpha}, n={f.n}")


def _weights(f):
    return f.flat() * f.cell_volume


def riesz_potential_on_grid(f: GridFunction, alpha, rule="corrected", cap=None, mask=None, backend=None):
    """Potential int_box f(y) |x-y|^(alpha-n) dy at every cell midpoint x.

    ``mask`` restricts the evaluation points (boolean over cells); the returned
    array has one entry per selected midpoint.
    """
    _check_alpha(f, alpha)
    mids = f.midpoints()
    targets = mids if mask is None else mids[mask]
    w_self = self_weight(f.n, alpha, f.spacing, "lattice" if rule == "corrected" else rule, cap)
    cap_ = np.inf if cap is None else float(cap)
    return _ext.kernel_sum(targets, mids, _weights(f), alpha - f.n, cap_, w_self / f.cell_volume, backend)


def riesz_matrix(grid: GridFunction, alpha, target_mask=None, source_mask=None, rule="corrected", cap=None,
                 backend=None):
    """Quadrature matrix A with (A w)_i ~ int w(y) |x_i - y|^(alpha-n) dy.

    Rows are the selected midpoints (targets), columns the selected source cells.
    Entries are cell volume times min(kernel, cap); coincident cells carry the
    self-cell weight.
    """
    _check_alpha(grid, alpha)
    mids = grid.midpoints()
    t = mids if target_mask is None else mids[target_mask]
    s = mids if source_mask is None else mids[source_mask]
    w_self = self_weight(grid.n, alpha, grid.spacing, "lattice" if rule == "corrected" else rule, cap)
    cap_ = np.inf if cap is None else float(cap)
    vol = grid.cell_volume
    return vol * _ext.kernel_matrix(t, s, alpha - grid.n, cap_, w_self / vol, backend)


def _subtracted(f, alpha, x, backend):
    """Singularity subtraction: sum (f_j - c) K h^n + c * exact box integral."""
    inside = f.box.contains(x)
    c = float(f.interpolate(x)[0]) if inside else float(f.values[f.cell_index(x)])
    mids = f.midpoints()
    w = (f.flat() - c) * f.cell_volume
    val = _ext.kernel_sum(x[None, :], mids, w, alpha - f.n, np.inf, 0.0, backend)[0]
    return val + c * box_kernel_integral(f.box.lower, f.box.upper, x, alpha - f.n)


def riesz_potential_grid(f: GridFunction, alpha, x, rule="corrected", backend=None):
    """int_box f(y) |x - y|^(alpha-n) dy for a single point x.

    ``rule="corrected"`` (default): at a cell midpoint the punctured midpoint sum
    plus the lattice self-cell constant; elsewhere inside the box, multilinear
    interpolation of the midpoint values; near or outside the box boundary,
    singularity subtraction against the exact box integral.

    ``rule="ball"``: the cell containing x contributes f(cell) |S^{n-1}| rho^alpha / alpha
    (rho the radius of the ball of equal volume), every other cell the midpoint value.
    """
    _check_alpha(f, alpha)
    if not np.all(np.isfinite(f.values)):
        raise ValueError("non-finite grid values")
    x = np.atleast_1d(np.asarray(x, float))
    if x.shape != (f.n,) or not np.all(np.isfinite(x)):
        raise ValueError(f"evaluation point must be a finite point in R^{f.n}")
    mids = f.midpoints()
    h = f.spacing
    if rule == "ball":
        idx = f.cell_index(x)
        flat_idx = np.ravel_multi_index(idx, f.resolution)
        w = _weights(f).copy()
        own = f.flat()[flat_idx] if f.box.contains(x) else 0.0
        if f.box.contains(x):
            w[flat_idx] = 0.0
        val = _ext.kernel_sum(x[None, :], mids, w, alpha - f.n, np.inf, 0.0, backend)[0]
        return val + own * self_weight(f.n, alpha, h, "ball")
    if rule != "corrected":
        raise ValueError(f"unknown rule {rule!r}")

    lo = np.asarray(f.box.lower)
    # position in midpoint-index coordinates
    s = (x - lo) / h - 0.5
    base = np.floor(s).astype(int)
    frac = s - base
    res = np.asarray(f.resolution)
    if np.all(np.abs(frac) < 1e-9) or np.all(np.abs(frac - 1) < 1e-9):
        node = np.rint(s).astype(int)
        if np.all((node >= 0) & (node < res)):
            return _at_midpoints(f, alpha, mids[[np.ravel_multi_index(tuple(node), f.resolution)]], backend)[0]
    if np.all(base >= 0) and np.all(base + 1 < res):
        corners = np.array(list(itertools.product((0, 1), repeat=f.n)))
        nodes = base[None, :] + corners
        pts = lo + h * (nodes + 0.5)
        vals = _at_midpoints(f, alpha, pts, backend)
        wts = np.prod(np.where(corners == 1, frac, 1 - frac), axis=1)
        return float(np.dot(wts, vals))
    return float(_subtracted(f, alpha, x, backend))


def _at_midpoints(f, alpha, pts, backend):
    w_self = self_weight(f.n, alpha, f.spacing, "lattice")
    return _ext.kernel_sum(pts, f.midpoints(), _weights(f), alpha - f.n, np.inf, w_self / f.cell_volume, backend)


def power_potential_grid(f: GridFunction, p, x, backend=None):
    """int_box f(y) |x - y|^p dy by the midpoint rule (continuous kernel)."""
    if not p > 0:
        raise ValueError(f"need p > 0, got {p}")
    if np.any(f.values < 0):
        raise ValueError("power potential needs a non-negative integrand")
    x = np.atleast_2d(np.asarray(x, float))
    out = _ext.kernel_sum(x, f.midpoints(), _weights(f), p, np.inf, 0.0, backend)
    return float(out[0]) if out.size == 1 else out
