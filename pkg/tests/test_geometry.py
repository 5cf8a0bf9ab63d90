import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kelvinlab.geometry import (GeometryError, KernelParams, SphereParams, distance_identity_residual,
                                invert_point, invert_points, kelvin_value, kelvin_values, kernel_K,
                                kernel_K_batch, kernel_K_radial_derivative_at_sphere, kernel_K_via_identity,
                                kernel_k, kernel_k_batch)

ORIGIN2 = SphereParams([0.0, 0.0], 1.0)


def test_invert_point_examples():
    np.testing.assert_allclose(invert_point(ORIGIN2, [2, 0]), [0.5, 0.0])
    np.testing.assert_allclose(invert_point(ORIGIN2, [1, 0]), [1.0, 0.0])
    np.testing.assert_allclose(invert_point(SphereParams([0, 0], 2.0), [0, 1]), [0.0, 4.0])


def test_invert_point_rejects_center_and_dimension():
    with pytest.raises(GeometryError):
        invert_point(ORIGIN2, [0, 0])
    with pytest.raises(GeometryError):
        invert_point(ORIGIN2, [1, 2, 3])
    with pytest.raises(GeometryError):
        invert_point(ORIGIN2, [1e-12, 0])


def test_sphere_params_validation():
    with pytest.raises(GeometryError):
        SphereParams([0.0], 0.0)
    with pytest.raises(GeometryError):
        SphereParams([np.nan], 1.0)


def test_kernel_params_validation():
    with pytest.raises(ValueError):
        KernelParams.riesz(2, 2.0)
    with pytest.raises(ValueError):
        KernelParams.power(1, -1.0)
    with pytest.raises(ValueError):
        KernelParams(2, "other", 1.0, 1.0)
    assert KernelParams.riesz(3, 1).exponent == 2.0
    assert KernelParams.power(1, 2).exponent == 2.0


def test_kelvin_value_examples():
    k3 = KernelParams.riesz(3, 1)
    s3 = SphereParams([0, 0, 0], 1.0)
    assert kelvin_value(s3, k3, lambda p: np.ones(len(p)), [2, 0, 0]) == pytest.approx(0.25, rel=1e-15)
    kp = KernelParams.power(2, 2)
    assert kelvin_value(ORIGIN2, kp, lambda p: np.ones(len(p)), [2, 0]) == pytest.approx(4.0, rel=1e-15)


def test_kelvin_double_application_on_bubble():
    from kelvinlab.families import BubbleParams

    rng = np.random.default_rng(3)
    k = KernelParams.riesz(3, 2)
    b = BubbleParams.make(k, 0.7, 1.3, [0.1, -0.2, 0.3])
    s = SphereParams([0.5, 0.0, -0.4], 0.8)
    pts = rng.normal(size=(10, 3)) * 2
    once = lambda p: kelvin_values(s, k, b, p)  # noqa: E731
    twice = kelvin_values(s, k, once, pts)
    np.testing.assert_allclose(twice, b(pts), rtol=1e-12)


def test_distance_identity_examples():
    assert distance_identity_residual(ORIGIN2, [2, 0], [0, 3]) <= 1e-15
    assert distance_identity_residual(ORIGIN2, [2, 0], [2, 0]) == 0.0
    xi = np.array([np.cos(0.3), np.sin(0.3)])
    z = np.array([2.0, -1.5])
    lhs = np.linalg.norm(z) * np.linalg.norm(xi - invert_point(ORIGIN2, z))
    assert lhs == pytest.approx(np.linalg.norm(xi - z), rel=1e-14)


def test_kernel_K_examples():
    k = KernelParams.riesz(3, 1)
    s = SphereParams([0, 0, 0], 1.0)
    assert kernel_K(s, k, [2, 0, 0], [0, 3, 0]) == pytest.approx(1 / 13 - 0.25 / 9.25, rel=1e-14)
    assert kernel_K(s, k, [0, 1, 0], [0, 3, 1]) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(GeometryError):
        kernel_K(s, k, [2, 0, 0], [2, 0, 0])
    with pytest.raises(GeometryError):
        kernel_K(s, KernelParams.power(3, 2), [2, 0, 0], [0, 3, 0])


def test_kernel_k_examples():
    k = KernelParams.power(1, 2)
    s = SphereParams([0.0], 1.0)
    assert kernel_k(s, k, [2.0], [3.0]) == pytest.approx(24.0, rel=1e-14)
    assert kernel_k(s, k, [1.0], [3.0]) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(GeometryError):
        kernel_k(s, KernelParams.riesz(1, 0.5), [2.0], [3.0])


def test_radial_derivative_example_and_rejection():
    k = KernelParams.riesz(3, 1)
    s = SphereParams([0, 0, 0], 1.0)
    assert kernel_K_radial_derivative_at_sphere(s, k, [1, 0, 0], [3, 0, 0]) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(GeometryError):
        kernel_K_radial_derivative_at_sphere(s, k, [1, 0, 0], [0, 1, 0])


def test_radial_derivative_finite_difference():
    rng = np.random.default_rng(7)
    h = 1e-4
    for _ in range(20):
        n = int(rng.integers(1, 4))
        alpha = float(rng.uniform(0.2, n - 0.2))
        k = KernelParams.riesz(n, alpha)
        lam = float(rng.uniform(0.5, 2))
        s = SphereParams(np.zeros(n), lam)
        u = rng.normal(size=n)
        u /= np.linalg.norm(u)
        z = rng.normal(size=n)
        z *= lam * rng.uniform(1.5, 3) / np.linalg.norm(z)
        # d/dt K(lam (1 + t) u) at t = 0 equals grad K . y
        fd = (kernel_K(s, k, lam * (1 + h) * u, z) - kernel_K(s, k, lam * (1 - h) * u, z)) / (2 * h)
        exact = kernel_K_radial_derivative_at_sphere(s, k, u, z)
        assert fd == pytest.approx(exact, rel=1e-6)


def _exterior(rng, s, m):
    d = rng.normal(size=(m, s.n))
    d /= np.linalg.norm(d, axis=1)[:, None]
    return s.center + s.radius * (1 + 10.0 ** rng.uniform(-3, 1, m))[:, None] * d


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_positivity_sweeps(n):
    rng = np.random.default_rng(n)
    s = SphereParams(rng.normal(size=n), float(rng.uniform(0.5, 2)))
    xi, z = _exterior(rng, s, 10000), _exterior(rng, s, 10000)
    assert np.all(kernel_K_batch(s, KernelParams.riesz(n, n / 2), xi, z) > 0)
    assert np.all(kernel_k_batch(s, KernelParams.power(n, 1.5), xi, z) > 0)


def test_kernels_vanish_on_sphere():
    rng = np.random.default_rng(11)
    s = SphereParams([0.2, -0.1], 1.5)
    for _ in range(20):
        t = rng.uniform(0, 2 * np.pi)
        xi = s.center + s.radius * np.array([np.cos(t), np.sin(t)])
        z = _exterior(rng, s, 1)[0]
        assert abs(kernel_K(s, KernelParams.riesz(2, 1), xi, z)) <= 1e-12
        assert abs(kernel_k(s, KernelParams.power(2, 2), xi, z)) <= 1e-12 * np.linalg.norm(xi - z) ** 2


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4), st.floats(0.1, 10), st.floats(-6, 6), st.integers(0, 2**31))
def test_involution_centered(n, lam, log_ratio, seed):
    rng = np.random.default_rng(seed)
    s = SphereParams(np.zeros(n), lam)
    d = rng.normal(size=n)
    xi = lam * 10.0**log_ratio * d / np.linalg.norm(d)
    back = invert_point(s, invert_point(s, xi))
    assert np.linalg.norm(back - xi) <= 1e-12 * np.linalg.norm(xi)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4), st.floats(0.1, 10), st.floats(-3, 3), st.integers(0, 2**31))
def test_involution_offset_center(n, lam, log_ratio, seed):
    # with x != 0 the inverted point carries an absolute error ~ eps |x|, which the second
    # inversion amplifies by the distance ratio; 1e-12 holds over three decades either way
    rng = np.random.default_rng(seed)
    s = SphereParams(rng.normal(size=n), lam)
    d = rng.normal(size=n)
    xi = s.center + lam * 10.0**log_ratio * d / np.linalg.norm(d)
    back = invert_point(s, invert_point(s, xi))
    assert np.linalg.norm(back - xi) <= 1e-12 * max(np.linalg.norm(xi - s.center), np.linalg.norm(xi), lam)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31))
def test_sphere_points_fixed(n, seed):
    rng = np.random.default_rng(seed)
    s = SphereParams(rng.normal(size=n), float(rng.uniform(0.1, 10)))
    d = rng.normal(size=n)
    xi = s.center + s.radius * d / np.linalg.norm(d)
    assert np.linalg.norm(invert_point(s, xi) - xi) <= 1e-12 * s.radius + 1e-15 * np.linalg.norm(s.center)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31))
def test_distance_identity_property(n, seed):
    rng = np.random.default_rng(seed)
    s = SphereParams(rng.normal(size=n), float(rng.uniform(0.1, 10)))
    xi, z = rng.normal(size=(2, n)) * 3
    assert distance_identity_residual(s, xi, z) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31))
def test_kernel_K_equivalent_form(n, seed):
    rng = np.random.default_rng(seed)
    k = KernelParams.riesz(n, float(rng.uniform(0.1, n - 0.1)))
    s = SphereParams(rng.normal(size=n), float(rng.uniform(0.5, 2)))
    xi, z = _exterior(rng, s, 2)
    a, b = kernel_K(s, k, xi, z), kernel_K_via_identity(s, k, xi, z)
    assert abs(a - b) <= 1e-10 * abs(a) + 1e-14 * np.linalg.norm(xi - z) ** (k.order - n)


def test_batch_matches_scalar():
    rng = np.random.default_rng(5)
    s = SphereParams([0.1, 0.2, 0.3], 1.1)
    xi, z = _exterior(rng, s, 8), _exterior(rng, s, 8)
    kr, kp = KernelParams.riesz(3, 2), KernelParams.power(3, 1.2)
    np.testing.assert_allclose(kernel_K_batch(s, kr, xi, z), [kernel_K(s, kr, a, b) for a, b in zip(xi, z)],
                               rtol=1e-13)
    np.testing.assert_allclose(kernel_k_batch(s, kp, xi, z), [kernel_k(s, kp, a, b) for a, b in zip(xi, z)],
                               rtol=1e-13)
    np.testing.assert_allclose(invert_points(s, xi), [invert_point(s, a) for a in xi], rtol=1e-15)


def test_dimension_mismatch_fails_loudly():
    with pytest.raises(GeometryError):
        kernel_K(SphereParams([0, 0], 1), KernelParams.riesz(3, 1), [2, 0, 0], [0, 3, 0])


@pytest.mark.parametrize("n,alpha", [(1, 0.5), (2, 1.0), (3, 2.0), (4, 1.3)])
def test_weight_exponents_vanish_at_critical(n, alpha):
    assert KernelParams.riesz(n, alpha).weight_exponent == 0.0
    assert KernelParams.power(n, alpha).weight_exponent == 0.0
    # the raw algebraic expression vanishes to round-off
    q = 1 + 2 * n / alpha
    assert abs(2 * n - alpha * q + alpha) <= 1e-13 * (2 * n + alpha)
    mu = (n + alpha) / (n - alpha)
    assert abs(n + alpha - mu * (n - alpha)) <= 1e-13 * (n + alpha)
    assert KernelParams.riesz(n, alpha, 1.0).weight_exponent != 0.0
