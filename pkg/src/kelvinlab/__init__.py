"""Numerics for conformally invariant integral equations: Kelvin transforms,
explicit solution families, moving spheres, local regularity and Picard runs."""
__version__ = "0.1.0"

from .geometry import GeometryError, KernelParams, SphereParams, invert_point, kelvin_transform, kelvin_values
from .quadrature import QuadratureSpec, RadialProfile
from .families import (BubbleParams, PolyFamilyParams, calibrate_bubble_constant, calibrate_poly_constant,
                       calibrated_bubble, calibrated_poly)
from .spheres import find_lambda_bar, invariance_residual, difference_identity_residual
from .iteration import run_iteration

__all__ = [
    "BubbleParams", "GeometryError", "KernelParams", "PolyFamilyParams", "QuadratureSpec", "RadialProfile",
    "SphereParams", "calibrate_bubble_constant", "calibrate_poly_constant", "calibrated_bubble", "calibrated_poly",
    "difference_identity_residual", "find_lambda_bar", "invariance_residual", "invert_point", "kelvin_transform",
    "kelvin_values", "run_iteration",
]
