import math

import numpy as np
import pytest

from kelvinlab.families import BubbleParams, asymptotics, calibrated_bubble, calibrated_poly, kelvin_closure_fit
from kelvinlab.geometry import GeometryError, KernelParams, SphereParams
from kelvinlab.quadrature.radial import QuadratureSpec
from kelvinlab.spheres import (BracketError, SampleDesign, asymptotic_constant, check_domination,
                               difference_identity_residual, difference_identity_terms, find_lambda_bar,
                               identity_residual, invariance_residual, sample_points, transformed_feature, transformed_values,
                               unit_directions, violation_sweep)

CASES = [(1, 0.5), (2, 1.0), (3, 2.0)]


def _bubble(n, alpha, d=1.0, center=None):
    return calibrated_bubble(KernelParams.riesz(n, alpha), d=d, center=center)


def test_transformed_value_fixed_on_sphere():
    k = KernelParams.riesz(3, 1)
    b = BubbleParams.make(k, 0.5, 2.0, [0.1, 0.0, 0.2])
    s = SphereParams([1.0, -1.0, 0.0], 1.7)
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(10, 3))
    pts = s.center + s.radius * dirs / np.linalg.norm(dirs, axis=1)[:, None]
    np.testing.assert_allclose(transformed_values(b, s, k, pts), b(pts), rtol=1e-12)


def test_transformed_value_constant_field():
    k = KernelParams.riesz(2, 0.5)
    s = SphereParams([0.0, 0.0], 2.0)
    pts = np.array([[3.0, 0.0], [0.5, 0.5], [-4.0, 1.0]])
    got = transformed_values(lambda p: np.full(len(p), 3.0), s, k, pts)
    expected = (2.0 / np.linalg.norm(pts, axis=1)) ** 1.5 * 3.0
    np.testing.assert_allclose(got, expected, rtol=1e-14)
    with pytest.raises(GeometryError):
        transformed_values(lambda p: np.ones(len(p)), s, k, [[0.0, 0.0]])


def test_unit_directions_are_unit():
    for n, m in [(1, 8), (2, 16), (3, 64), (4, 20)]:
        dirs = unit_directions(n, m)
        np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0, rtol=1e-14)


def test_sample_design_covers_exterior():
    s = SphereParams([0.0, 0.0], 2.0)
    design = SampleDesign(directions=8)
    pts = sample_points(s, design)
    r = np.linalg.norm(pts, axis=1)
    assert r.min() == pytest.approx(2.0 * (1 + 2.0**-8))
    assert r.max() <= design.truncation_radius and r.max() > design.truncation_radius / 2


@pytest.mark.parametrize("n,alpha", CASES)
def test_domination_below_and_above(n, alpha):
    d = 2.0
    b = _bubble(n, alpha, d)
    k = b.kernel
    beta = asymptotic_constant(b, k, b.center, b.scale)
    low = check_domination(b, SphereParams(b.center, 0.5 * b.scale), k, asymptote=beta)
    assert low.ok and low.witness is None and low.margin > 0
    high = check_domination(b, SphereParams(b.center, 1.5 * b.scale), k, asymptote=beta)
    assert not high.ok and high.margin < 0


@pytest.mark.parametrize("n,alpha", CASES)
def test_domination_at_lambda_bar_is_a_tie(n, alpha):
    b = _bubble(n, alpha)
    k = b.kernel
    res = check_domination(b, SphereParams(b.center, 1.0), k, asymptote=asymptotic_constant(b, k, b.center))
    assert res.ok
    assert abs(res.margin) <= 1e-9


@pytest.mark.parametrize("n,alpha", CASES)
@pytest.mark.parametrize("d,x,expected", [(1.0, 0.0, 1.0), (1.0, 1.0, math.sqrt(2)), (4.0, 0.0, 2.0)])
def test_lambda_bar_examples(n, alpha, d, x, expected):
    b = _bubble(n, alpha, d)
    res = find_lambda_bar(b, x * np.eye(n)[0], b.kernel, search=(0.1, 10.0), scale=b.scale)
    assert res.bracket[0] <= res.lambda_bar <= res.bracket[1]
    assert res.bracket[1] - res.bracket[0] <= 1e-4 * b.scale
    assert res.lambda_bar == pytest.approx(expected, abs=2e-4 * b.scale)
    assert res.identity_residual <= 3e-2


@pytest.mark.parametrize("n,alpha", CASES)
def test_lambda_bar_closed_form_many_points(n, alpha):
    d = 1.5
    b = _bubble(n, alpha, d, center=np.linspace(0.2, -0.3, n))
    rng = np.random.default_rng(4)
    beta = asymptotics(b).integral_value
    for _ in range(5):
        x = np.array(b.center) + rng.normal(size=n)
        res = find_lambda_bar(b, x, b.kernel, search=(0.1, 20.0), scale=b.scale)
        lam = math.sqrt(d + float(np.sum((x - np.array(b.center)) ** 2)))
        assert abs(res.lambda_bar - lam) / lam <= 1e-2
        # lambda_bar^(n - alpha) u(x) equals beta
        assert res.lambda_bar ** (n - alpha) * b(x[None, :])[0] == pytest.approx(beta, rel=2e-2)


@pytest.mark.parametrize("n,alpha", CASES)
def test_identity_at_sup_within_ten_domination_tolerances(n, alpha):
    b = _bubble(n, alpha)
    res = find_lambda_bar(b, np.eye(n)[0], b.kernel, search=(0.1, 10.0), tol=1e-12)
    assert res.identity_residual <= 10 * SampleDesign().tolerance


def test_lambda_bar_power_mode():
    k = KernelParams.power(1, 2)
    pp = calibrated_poly(k, d=2.0)
    res = find_lambda_bar(pp, [1.0], k, search=(0.1, 10.0), scale=pp.scale)
    assert res.lambda_bar == pytest.approx(math.sqrt(3.0), rel=1e-3)


@pytest.mark.parametrize("n,alpha", CASES)
def test_violation_monotone(n, alpha):
    b = _bubble(n, alpha)
    lams = np.linspace(0.1, 2.0, 40)
    flags = [v for _, v in violation_sweep(b, b.center, b.kernel, lams)]
    first = flags.index(True)
    assert all(flags[first:]) and not any(flags[:first])
    assert lams[first - 1] <= 1.0 <= lams[first] + 1e-12


def test_bracket_errors():
    b = _bubble(2, 1.0)
    with pytest.raises(BracketError):
        find_lambda_bar(b, [0.0, 0.0], b.kernel, search=(0.1, 0.5))
    with pytest.raises(ValueError):
        find_lambda_bar(b, [0.0, 0.0], b.kernel, search=(1.0, 0.5))
    # a growing field dominates its transforms for every radius, so no violation exists
    with pytest.raises(BracketError):
        find_lambda_bar(lambda p: 1 + np.sum(p**2, axis=1), [0.0, 0.0], b.kernel, search=(0.5, 2.0),
                        asymptote=1e9)


def test_identity_residual_vanishes_at_lambda_bar_exactly():
    b = _bubble(3, 2.0, d=2.0)
    assert identity_residual(b, SphereParams(b.center, math.sqrt(2.0)), b.kernel) <= 1e-12


def _random_config(rng, n, scale=1.0):
    x = rng.normal(size=n) * 0.5 * scale
    lam = float(scale * rng.uniform(0.5, 1.5))
    return x, lam


@pytest.mark.parametrize("n,alpha", CASES)
def test_invariance_residual(n, alpha):
    b = _bubble(n, alpha)
    rng = np.random.default_rng(10 + n)
    spec = QuadratureSpec(truncation_radius=1e8, angular_resolution=24 if n == 3 else 48)
    for _ in range(2):
        x, lam = _random_config(rng, n)
        s = SphereParams(x, lam)
        pts = x + rng.normal(size=(2, n))
        assert invariance_residual(b, s, b.kernel, pts, spec) <= 3e-2


def test_transformed_feature_of_bubble():
    k = KernelParams.riesz(3, 1.0)
    b = BubbleParams.make(k, 0.6, 2.0, [1.0, 0.0, 0.0])
    s = SphereParams([0.0, 0.5, 0.0], 1.2)
    focus, width = transformed_feature(b, s)
    fit = kelvin_closure_fit(b, s)
    np.testing.assert_allclose(focus, fit.center, atol=1e-8)
    assert width == pytest.approx(math.sqrt(fit.d), rel=1e-8)
    np.testing.assert_allclose(transformed_feature(lambda p: p[:, 0], s)[0], s.center)


def test_invariance_residual_power_mode():
    k = KernelParams.power(1, 2)
    pp = calibrated_poly(k)
    s = SphereParams([0.3], 0.8)
    assert invariance_residual(pp, s, k, [[1.5], [-0.7]], QuadratureSpec(truncation_radius=1e8), 0.4) <= 3e-2


def test_invariance_detects_wrong_exponent():
    # at a non-critical mu the weighted identity still holds for a solution of the weighted
    # equation, but the bubble is not one, so the gap is large
    k = KernelParams.riesz(1, 0.5)
    b = _bubble(1, 0.5)
    wrong = KernelParams.riesz(1, 0.5, k.exponent * 1.1)
    s = SphereParams([0.2], 0.9)
    spec = QuadratureSpec(truncation_radius=1e8)
    assert invariance_residual(b, s, wrong, [[1.0]], spec, 0.45) > 0.1


@pytest.mark.parametrize("n,alpha", CASES)
def test_difference_identity_half_lambda_bar(n, alpha):
    b = _bubble(n, alpha)
    rng = np.random.default_rng(20 + n)
    x = rng.normal(size=n) * 0.5
    lam = 0.5 * math.sqrt(1 + float(x @ x))
    s = SphereParams(x, lam)
    dirs = rng.normal(size=(10, n))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    xis = x + dirs * lam * rng.uniform(1.2, 4.0, 10)[:, None]
    spec = QuadratureSpec(truncation_radius=1e8, angular_resolution=24 if n == 3 else 48)
    assert difference_identity_residual(b, s, b.kernel, xis, spec, 0.5 * lam) <= 5e-2


def test_difference_identity_at_lambda_bar():
    b = _bubble(2, 1.0)
    s = SphereParams([0.0, 0.0], 1.0)
    lhs, rhs, u = difference_identity_terms(b, s, b.kernel, [2.0, 0.5], QuadratureSpec(truncation_radius=1e8), 0.5)
    assert abs(lhs) <= 1e-12 * u
    assert abs(rhs) <= 1e-3 * u
    assert difference_identity_residual(b, s, b.kernel, [[2.0, 0.5]], QuadratureSpec(truncation_radius=1e8), 0.5,
                                        relative_to="value") <= 1e-3


def test_difference_identity_on_sphere_and_inside():
    b = _bubble(1, 0.5)
    s = SphereParams([0.0], 0.7)
    assert difference_identity_terms(b, s, b.kernel, [0.7])[:2] == (0.0, 0.0)
    with pytest.raises(ValueError):
        difference_identity_terms(b, s, b.kernel, [0.3])
    with pytest.raises(ValueError):
        difference_identity_residual(b, s, b.kernel, [[1.0]], relative_to="other")


def test_difference_identity_power_mode():
    k = KernelParams.power(1, 2)
    pp = calibrated_poly(k)
    s = SphereParams([0.2], 0.5)
    assert difference_identity_residual(pp, s, k, [[1.0], [-2.0], [3.5]], QuadratureSpec(truncation_radius=1e8),
                                        0.25) <= 5e-2
