import numpy as np
import pytest

from kelvinlab.geometry import KernelParams
from kelvinlab.quadrature.grids import lp_norm_ball
from kelvinlab.regularity import (DELTA_BAR, BumpField, NonContractionError, TruncationLevel, apply_L, ball_mask,
                                  contraction_solve, crossover_radius, default_exponents, delta_of, draw_experiment,
                                  experiment_from_fields, local_estimate_experiment, lq_norm, outer_source,
                                  random_draw, rescale_to_small_delta, sample, truncated_kernel, truncated_parts)

K1 = KernelParams.riesz(1, 0.5)
K2 = KernelParams.riesz(2, 1.0)
RES = {1: 256, 2: 48}


def _kernel(n):
    return K1 if n == 1 else K2


def _experiment(n, seed=0, delta_target=DELTA_BAR / 2, resolution=None):
    k = _kernel(n)
    r, nu = default_exponents(k)
    draw = random_draw(np.random.default_rng(seed), n)
    return draw_experiment(draw, k, resolution or RES[n], r, nu, delta_target)


def test_truncated_kernel_examples():
    k = KernelParams.riesz(3, 1)
    assert truncated_kernel(TruncationLevel(5), [0, 0, 0], k) == 5.0
    assert truncated_kernel(5, [10, 0, 0], k) == pytest.approx(0.01, rel=1e-14)
    rc = crossover_radius(5, k)
    assert rc == pytest.approx(5**-0.5, rel=1e-14)
    assert rc ** (1 - 3) == pytest.approx(5.0, rel=1e-12)
    below = truncated_kernel(5, [rc * (1 - 1e-9), 0, 0], k)
    above = truncated_kernel(5, [rc * (1 + 1e-9), 0, 0], k)
    assert below == pytest.approx(above, rel=1e-8)
    vals = truncated_kernel(5, np.array([[0.1, 0, 0], [2.0, 0, 0]]), k)
    np.testing.assert_allclose(vals, [5.0, 0.25])


def test_truncation_level_and_mode_validation():
    with pytest.raises(ValueError):
        TruncationLevel(0.5)
    with pytest.raises(ValueError):
        truncated_kernel(5, [1.0], KernelParams.power(1, 2))


@pytest.mark.parametrize("n", [1, 2])
def test_apply_L_zero_cases(n):
    k = _kernel(n)
    V = sample(BumpField.random(np.random.default_rng(0), n), n, RES[n])
    assert np.all(apply_L(V, sample(0.0, n, RES[n]), k).values == 0)
    assert np.all(apply_L(sample(0.0, n, RES[n]), sample(1.0, n, RES[n]), k).values == 0)
    with pytest.raises(ValueError):
        apply_L(V.with_values(-V.values), V, k)


@pytest.mark.parametrize("n", [1, 2])
def test_apply_L_cap_inactive(n):
    k = _kernel(n)
    rng = np.random.default_rng(1)
    V = sample(BumpField.random(rng, n), n, RES[n])
    w = sample(BumpField.random(rng, n, base=0.2), n, RES[n])
    capped = apply_L(V, w, k, cap=TruncationLevel(1e6)).values
    plain = apply_L(V, w, k).values
    assert np.max(np.abs(capped - plain)) <= 1e-6 * np.max(np.abs(plain))


@pytest.mark.parametrize("n", [1, 2])
def test_apply_L_linear_and_monotone(n):
    k = _kernel(n)
    rng = np.random.default_rng(2)
    V = sample(BumpField.random(rng, n), n, RES[n])
    w1 = sample(BumpField.random(rng, n), n, RES[n])
    extra = sample(BumpField.random(rng, n), n, RES[n])
    w2 = w1.with_values(w1.values + extra.values)
    L1, L2, Le = (apply_L(V, w, k).values for w in (w1, w2, extra))
    np.testing.assert_allclose(L2, L1 + Le, rtol=1e-12, atol=1e-14 * np.abs(L2).max())
    assert np.all(L2 >= L1)


def test_outer_source_annulus_closed_form():
    k = KernelParams.riesz(3, 2)
    annulus = lambda p: ((np.linalg.norm(p, axis=1) > 2) & (np.linalg.norm(p, axis=1) < 3)).astype(float)  # noqa: E731
    V, u = sample(annulus, 3, 60), sample(1.0, 3, 60)
    assert outer_source(V, u, k, x_points=[[0, 0, 0]])[0] == pytest.approx(10 * np.pi, rel=1e-2)
    assert np.all(outer_source(sample(0.0, 3, 16), sample(1.0, 3, 16), k, x_points=[[0, 0, 0]]) == 0)


def test_outer_source_bounded_on_unit_ball():
    exp = _experiment(2)
    m2 = ball_mask(exp.V, 2.0)
    f = outer_source(exp.V, exp.u, exp.kernel)
    m1 = ball_mask(exp.V, 1.0)[m2]
    shell = ball_mask(exp.V, 3.0, 2.0)
    mass = np.sum(exp.V.flat()[shell] * exp.u.flat()[shell]) * exp.V.cell_volume
    # |x - y| >= 1 for x in B_1 and y in the annulus, and the kernel is at most 1 there
    assert f[m1].max() <= mass * (1 + 1e-12)


@pytest.mark.parametrize("n", [1, 2])
def test_outer_source_truncation_consistency(n):
    exp = _experiment(n)
    f = outer_source(exp.V, exp.u, exp.kernel)
    gaps = []
    for cap in (1, 2, 4, 8, 16, 64, 1e3):
        fi = outer_source(exp.V, exp.u, exp.kernel, cap=TruncationLevel(cap))
        gaps.append(lq_norm(exp.V, f - fi, exp.r) / lq_norm(exp.V, f, exp.r))
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert gaps[0] > 0 and gaps[-1] <= 1e-3


@pytest.mark.parametrize("n", [1, 2])
def test_contraction_factor_at_half_delta_bar(n):
    for seed in range(10):
        exp = _experiment(n, seed)
        assert exp.delta == pytest.approx(DELTA_BAR / 2, rel=1e-10)
        res = contraction_solve(exp, TruncationLevel(1e6))
        assert 0 < res.contraction_factor <= 0.5


@pytest.mark.parametrize("n", [1, 2])
def test_recovery_of_known_u(n):
    exp = _experiment(n, 3)
    m2 = ball_mask(exp.V, 2.0)
    errs = []
    for cap in (1, 10, 1e6):
        w = contraction_solve(exp, TruncationLevel(cap)).w
        errs.append(lq_norm(exp.V, w.flat()[m2] - exp.u.flat()[m2], exp.r) / lq_norm(exp.V, exp.u.flat(), exp.r))
    assert errs[0] > errs[-1]
    assert errs[-1] <= 2e-2


def test_zero_potential_converges_in_one_step():
    k = K1
    r, nu = default_exponents(k)
    rng = np.random.default_rng(4)
    exp = experiment_from_fields(k, 128, 0.0, BumpField.random(rng, 1, base=0.3), BumpField.random(rng, 1), r, nu)
    res = contraction_solve(exp, TruncationLevel(1e6))
    f, h, xi = truncated_parts(exp, TruncationLevel(1e6))
    m2 = ball_mask(exp.V, 2.0)
    np.testing.assert_allclose(res.w.flat()[m2], f + h - xi, rtol=0, atol=1e-15)
    assert res.iterations == 1


def test_contraction_uniqueness_from_two_guesses():
    exp = _experiment(2, 5)
    m2 = ball_mask(exp.V, 2.0)
    rng = np.random.default_rng(6)
    w0 = sample(BumpField.random(rng, 2, base=1.0), 2, RES[2])
    gaps = []
    for steps in range(1, 6):
        a = contraction_solve(exp, 1e6, tol=0.0, max_iter=steps).w.flat()[m2]
        b = contraction_solve(exp, 1e6, tol=0.0, max_iter=steps, w0=w0).w.flat()[m2]
        gaps.append(lq_norm(exp.V, a - b, exp.r))
    ratios = np.array(gaps[1:]) / np.array(gaps[:-1])
    assert np.all(ratios <= 0.5)
    a = contraction_solve(exp, 1e6).w.flat()[m2]
    b = contraction_solve(exp, 1e6, w0=w0).w.flat()[m2]
    assert lq_norm(exp.V, a - b, exp.r) <= 1e-8 * lq_norm(exp.V, a, exp.r)


def test_contraction_rejects_large_delta_and_detects_non_contraction():
    with pytest.raises(ValueError):
        contraction_solve(_experiment(1, delta_target=2 * DELTA_BAR), 1e6)
    big = _experiment(1, 7, delta_target=50.0)
    with pytest.raises(NonContractionError):
        contraction_solve(big, 1e6, delta_bar=100.0)
    with pytest.raises(ValueError):
        contraction_solve(_experiment(1), 1e6, q=1.0)


def test_estimate_degenerate_and_bump_examples():
    k = K1
    r, nu = default_exponents(k)
    zero = experiment_from_fields(k, 128, 0.0, 0.0, 0.0, r, nu)
    est = local_estimate_experiment(zero)
    assert est.ratio == 0.0 and est.degenerate
    u_only = experiment_from_fields(k, 128, 0.0, 0.0, 0.0, r, nu, h=lambda p: np.ones(len(p)))
    assert local_estimate_experiment(u_only).ratio == 0.0 and not local_estimate_experiment(u_only).degenerate
    # u = h = 1 on B_2 (V = 0): ratio below |B_1/2|^(1/nu) / |B_2|^(1/nu) < 1
    bump = lambda p: np.where(np.linalg.norm(p, axis=1) < 2, 1.0, 0.0)  # noqa: E731
    exp = experiment_from_fields(k, 240, 0.0, bump, 0.0, r, nu, h=bump)
    bound = (1.0 / 4.0) ** (1 / nu)
    assert 0 < local_estimate_experiment(exp).ratio <= bound < 1


@pytest.mark.parametrize("n,resolutions", [(1, (256, 512)), (2, (32, 48))])
def test_estimate_ratio_stable_across_resolutions(n, resolutions):
    k = _kernel(n)
    r, nu = default_exponents(k)
    rng = np.random.default_rng(8)
    draws = [random_draw(rng, n) for _ in range(50)]
    maxima = []
    for res in resolutions:
        ratios = [local_estimate_experiment(draw_experiment(d, k, res, r, nu)).ratio for d in draws]
        assert np.all(np.isfinite(ratios))
        maxima.append(max(ratios))
    assert abs(maxima[0] / maxima[1] - 1) <= 0.2


@pytest.mark.parametrize("n", [1, 2])
def test_operator_norm_ratio_bounded(n):
    k = _kernel(n)
    r, _ = default_exponents(k)
    rng = np.random.default_rng(9)
    maxima = []
    for res in ((128, 256) if n == 1 else (32, 48)):
        V = sample(BumpField.random(np.random.default_rng(0), n), n, res)
        ratios = []
        for _ in range(50):
            w = sample(BumpField.random(rng, n), n, res)
            Lw = apply_L(V, w, k).flat()
            ratios.append(lq_norm(V, Lw, r) / (delta_of(V, k) * lq_norm(V, w.flat(), r)))
        maxima.append(max(ratios))
    assert max(maxima) < 10
    assert abs(maxima[0] / maxima[1] - 1) <= 0.2


def test_experiment_validation():
    k = K1
    with pytest.raises(ValueError):
        experiment_from_fields(k, 64, 0.0, 1.0, 0.0, 1.0, 3.0)  # r below n/(n - alpha)
    with pytest.raises(ValueError):
        experiment_from_fields(k, 64, -1.0, 1.0, 0.0, 3.0, 6.0)
    with pytest.raises(ValueError):
        # h far below u breaks the inequality
        experiment_from_fields(k, 64, 0.0, 1.0, None, 3.0, 6.0, h=lambda p: np.zeros(len(p)))
    exp = _experiment(1)
    assert exp.inequality_gap() <= 1e-12


def _radial_V(p):
    return 1.0 / (1.0 + np.sum(np.asarray(p) ** 2, axis=1))


def _radial_u(p):
    return np.exp(-np.sum(np.asarray(p) ** 2, axis=1))


def _big_h(p):
    return 2.0 * np.ones(len(p))


def test_rescale_identity_at_eps_one():
    res = rescale_to_small_delta(_radial_V, _radial_u, _big_h, K2, 1.0, resolution=48)
    direct = experiment_from_fields(K2, 48, _radial_V, _radial_u, None, *default_exponents(K2), h=_big_h)
    np.testing.assert_array_equal(res.experiment.V.values, direct.V.values)
    np.testing.assert_array_equal(res.experiment.u.values, direct.u.values)
    assert res.min_slack >= 0


def test_rescale_norm_identity_half():
    res = rescale_to_small_delta(_radial_V, _radial_u, _big_h, K2, 0.5, resolution=64)
    assert res.norm_identity_gap <= 2e-2
    assert res.min_slack >= 0
    # V_eps in L^(n/alpha)(B_3) equals V in L^(n/alpha)(B_(3/2)), the latter by a finer independent grid
    assert res.delta_source == pytest.approx(lp_norm_ball(sample(_radial_V, 2, 128), 2.0, np.zeros(2), 1.5),
                                             rel=2e-2)


def test_rescale_monotone_ladder_and_support_check():
    deltas = [rescale_to_small_delta(_radial_V, _radial_u, _big_h, K2, e, resolution=48).delta_rescaled
              for e in (1, 0.5, 0.25, 0.125)]
    assert all(b < a for a, b in zip(deltas, deltas[1:]))
    with pytest.raises(ValueError):
        rescale_to_small_delta(_radial_V, _radial_u, _big_h, K2, 2.0, support_radius=3.0)
    with pytest.raises(ValueError):
        rescale_to_small_delta(_radial_V, _radial_u, _big_h, K2, 0.0)
