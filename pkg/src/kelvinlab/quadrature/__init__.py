"""Quadrature for Riesz and power potentials: uniform grids (n <= 3), radial
reduction (any n) and polar rules for general densities."""
import numpy as np

from ..geometry import KernelParams
from .cells import ball_volume, box_kernel_integral, lattice_self_constant, self_weight, sphere_area
from .grid_potential import power_potential_grid, riesz_matrix, riesz_potential_grid, riesz_potential_on_grid
from .grids import Box, GridFunction, lp_norm_ball
from .polar import BallRegion, polar_potential
from .radial import (QuadratureSpec, RadialProfile, angular_kernel, lp_norm_radial, power_angular_kernel,
                     power_potential_radial, radial_mass, radial_potential, radial_rule, riesz_potential_radial)
from .tails import potential_tail_bound, radius_for_tolerance, tail_bound


def power_potential(f, p, x, spec=None):
    """int f(y) |x - y|^p dy for a GridFunction or a RadialProfile (x a point or a radius)."""
    if isinstance(f, GridFunction):
        return power_potential_grid(f, p, x)
    if isinstance(f, RadialProfile):
        if np.any(f.values < 0):
            raise ValueError("power potential needs a non-negative integrand")
        spec = QuadratureSpec(truncation_radius=float(f.nodes[-1])) if spec is None else spec
        r = float(np.linalg.norm(np.atleast_1d(x)))
        return power_potential_radial(f, KernelParams.power(f.n, p), r, spec)
    raise TypeError("power_potential takes a GridFunction or a RadialProfile")
