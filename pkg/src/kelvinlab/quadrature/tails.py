"""Bounds on the mass discarded when R^n is truncated to a ball."""
from __future__ import annotations

from .cells import sphere_area


def tail_bound(spec, coefficient, n, decay=None):
    """coefficient * |S^{n-1}| * int_R^inf s^(n-1-decay) ds for an integrand bounded by
    coefficient * |y|^(-decay) outside the truncation ball."""
    decay = spec.tail_decay_exponent if decay is None else decay
    if decay is None:
        raise ValueError("no tail decay exponent configured")
    if decay <= n:
        raise ValueError(f"tail decay {decay} must exceed the dimension {n}")
    if coefficient < 0:
        raise ValueError("coefficient must be non-negative")
    if coefficient == 0:
        return 0.0
    R = spec.truncation_radius
    return float(coefficient * sphere_area(n) * R ** (n - decay) / (decay - n))


def potential_tail_bound(spec, coefficient, n, decay, kernel_power, r_eval=0.0):
    """Bound on int_{|y|>R} c |y|^(-decay) |x - y|^kernel_power dy for |x| = r_eval < R.

    For a negative kernel power, |x - y| >= |y| - r_eval >= (1 - r_eval/R) |y|;
    for a positive one, |x - y| <= (1 + r_eval/R) |y|.
    """
    R = spec.truncation_radius
    if r_eval >= R:
        raise ValueError("evaluation point outside the truncation ball")
    eff = decay - kernel_power
    if eff <= n:
        raise ValueError(f"effective tail decay {eff} must exceed the dimension {n}")
    t = r_eval / R
    factor = (1 - t) ** kernel_power if kernel_power < 0 else (1 + t) ** kernel_power
    return float(factor * coefficient * sphere_area(n) * R ** (n - eff) / (eff - n))


def radius_for_tolerance(coefficient, n, decay, tolerance, fraction=0.1):
    """Smallest R with the tail bound at most ``fraction * tolerance``."""
    if decay <= n:
        raise ValueError(f"tail decay {decay} must exceed the dimension {n}")
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if coefficient == 0:
        return 1.0
    target = fraction * tolerance
    return float((target * (decay - n) / (coefficient * sphere_area(n))) ** (1.0 / (n - decay)))


def bubble_tail_coefficient(a, n, alpha, exponent):
    """c with (a/(d+s^2))^((n-alpha)/2 * exponent) <= c s^(-(n-alpha) exponent)."""
    return float(a ** ((n - alpha) / 2 * exponent))

