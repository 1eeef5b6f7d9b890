import math

import numpy as np
import pytest
from scipy import integrate, stats

from app.logic.exceptions import (
    FactorizationError,
    InsufficientSamplesError,
    InvalidInputError,
    RankError,
)
from app.services.ees_service import EesService, cholesky_with_jitter, weight_from_radius
from app.services.tuning_service import TuningService


def finite_difference_grad(fn, x, h=1e-5):
    grad = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        grad[j] = (fn(x + e) - fn(x - e)) / (2 * h)
    return grad


class TestEmpiricalCgf:
    def test_at_origin(self):
        cgf = EesService.empirical_cgf(np.array([[1.0], [2.0], [3.0]]), [0.0])
        assert cgf.value == pytest.approx(0.0, abs=1e-15)
        assert cgf.grad[0] == pytest.approx(2.0)
        assert cgf.hess[0, 0] == pytest.approx(2.0 / 3.0)

    def test_direct_summation(self):
        expected = math.log((math.exp(0.5) + math.exp(1.0) + math.exp(1.5)) / 3)
        cgf = EesService.empirical_cgf(np.array([1.0, 2.0, 3.0]), [0.5])
        assert cgf.value == pytest.approx(expected, rel=1e-12)
        assert cgf.value == pytest.approx(1.08166, abs=1e-5)

    def test_derivatives_match_finite_differences(self, rng, skewed_samples):
        for _ in range(20):
            lam = 0.3 * rng.standard_normal(2)
            cgf = EesService.empirical_cgf(skewed_samples, lam)
            grad = finite_difference_grad(lambda x: EesService.empirical_cgf(skewed_samples, x).value, lam)
            np.testing.assert_allclose(cgf.grad, grad, rtol=1e-5, atol=1e-8)
            hess = np.column_stack([
                finite_difference_grad(lambda x: EesService.empirical_cgf(skewed_samples, x).grad[j], lam)
                for j in range(2)
            ])
            np.testing.assert_allclose(cgf.hess, hess, rtol=1e-5, atol=1e-8)

    def test_large_exponents_do_not_overflow(self):
        cgf = EesService.empirical_cgf(np.array([[1.0], [2.0]]), [700.0])
        assert np.isfinite(cgf.value)
        assert cgf.grad[0] == pytest.approx(2.0)

    def test_non_finite_lambda(self):
        with pytest.raises(InvalidInputError):
            EesService.empirical_cgf(np.array([[1.0], [2.0]]), [np.nan])


class TestGaussianCgf:
    def test_quadratic_form(self):
        cgf = EesService.gaussian_cgf(np.zeros(2), np.eye(2), [1.0, 1.0])
        assert cgf.value == pytest.approx(1.0)
        np.testing.assert_allclose(cgf.grad, [1.0, 1.0])
        np.testing.assert_allclose(cgf.hess, np.eye(2))

    def test_at_origin(self):
        mu = np.array([1.0, -2.0])
        sigma = np.array([[2.0, 0.3], [0.3, 1.0]])
        cgf = EesService.gaussian_cgf(mu, sigma, [0.0, 0.0])
        assert cgf.value == 0.0
        np.testing.assert_allclose(cgf.grad, mu)
        np.testing.assert_allclose(cgf.hess, sigma)

    def test_hand_arithmetic(self):
        cgf = EesService.gaussian_cgf([3.0], [[4.0]], [0.5])
        assert cgf.value == pytest.approx(2.0)
        assert cgf.grad[0] == pytest.approx(5.0)
        assert cgf.hess[0, 0] == pytest.approx(4.0)

    def test_not_positive_definite(self):
        with pytest.raises(FactorizationError):
            EesService.gaussian_cgf(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]), [0.0, 0.0])


class TestMixtureWeight:
    def test_at_mean(self):
        for gamma in (0.0, 0.01, 5.0, 1e6):
            assert EesService.mixture_weight([1.0, 2.0], [1.0, 2.0], np.eye(2), gamma) == 1.0

    def test_zero_gamma(self):
        assert EesService.mixture_weight([50.0], [0.0], [[1.0]], 0.0) == 1.0

    def test_hand_arithmetic(self):
        assert EesService.mixture_weight([1.0], [0.0], [[1.0]], 1.0) == pytest.approx(2.5 / math.e, rel=1e-12)
        assert EesService.mixture_weight([1.0], [0.0], [[1.0]], 1.0) == pytest.approx(0.91970, abs=1e-5)

    def test_gaussian_limit_and_underflow(self):
        assert EesService.mixture_weight([1.0], [0.0], [[1.0]], math.inf) == 0.0
        assert weight_from_radius(1.0, 1e5) == 0.0

    def test_decreasing_in_radius(self):
        weights = [weight_from_radius(r, 0.5) for r in (0.1, 1.0, 4.0, 25.0, 100.0)]
        assert all(a > b for a, b in zip(weights, weights[1:]))
        assert all(0.0 <= w <= 1.0 for w in weights)

    def test_huge_radius_does_not_overflow(self):
        assert weight_from_radius(1e200, 0.01) == 0.0
        assert weight_from_radius(math.inf, 1e-6) == 0.0
        radii = np.logspace(-2, 300, 60)
        weights = [weight_from_radius(r, 1e-3) for r in radii]
        assert all(a >= b for a, b in zip(weights, weights[1:]))
        assert weights[-1] == 0.0

    def test_asymptotic_branch_is_continuous(self):
        below = weight_from_radius(1e8 * (1 - 1e-12), 1e-9)
        above = weight_from_radius(1e8 * (1 + 1e-12), 1e-9)
        assert below == pytest.approx(above, rel=1e-9)

    def test_negative_gamma(self):
        with pytest.raises(InvalidInputError):
            EesService.mixture_weight([1.0], [0.0], [[1.0]], -1.0)


class TestExtendedCgf:
    def test_underflowed_weight_is_gaussian(self, skewed_samples):
        model = EesService.fit(skewed_samples, 1e6)
        s = model.mu_hat + 3.0 * np.sqrt(np.diag(model.sigma_hat))
        lam = np.array([0.2, -0.1])
        ext = EesService.extended_cgf(model, lam, s)
        gauss = EesService.gaussian_cgf(model.mu_hat, model.sigma_hat, lam)
        assert ext.value == pytest.approx(gauss.value, rel=1e-12)
        np.testing.assert_allclose(ext.grad, gauss.grad, rtol=1e-12)
        np.testing.assert_allclose(ext.hess, gauss.hess, rtol=1e-10)

    def test_zero_gamma_is_empirical(self, skewed_samples):
        model = EesService.fit(skewed_samples, 0.0)
        lam = np.array([0.3, 0.1])
        ext = EesService.extended_cgf(model, lam, model.mu_hat + 4.0)
        emp = EesService.empirical_cgf(skewed_samples, lam)
        assert ext.value == pytest.approx(emp.value, rel=1e-10)
        np.testing.assert_allclose(ext.grad, emp.grad, rtol=1e-10)
        np.testing.assert_allclose(ext.hess, emp.hess, rtol=1e-8)

    def test_value_between_components(self, rng, skewed_samples):
        model = EesService.fit(skewed_samples, 0.5)
        for _ in range(10):
            lam = 0.3 * rng.standard_normal(2)
            s = model.mu_hat + rng.standard_normal(2)
            ext = EesService.extended_cgf(model, lam, s).value
            emp = EesService.empirical_cgf(skewed_samples, lam).value
            gauss = EesService.gaussian_cgf(model.mu_hat, model.sigma_hat, lam).value
            assert min(emp, gauss) - 1e-12 <= ext <= max(emp, gauss) + 1e-12

    def test_hessian_positive_definite(self, rng, skewed_samples):
        model = EesService.fit(skewed_samples, 0.1)
        for _ in range(10):
            cgf = EesService.extended_cgf(model, rng.standard_normal(2), model.mu_hat + 2 * rng.standard_normal(2))
            assert np.linalg.eigvalsh(cgf.hess).min() > 0

    def test_derivatives_match_finite_differences(self, rng, skewed_samples):
        model = EesService.fit(skewed_samples, 0.3)
        for _ in range(10):
            s = model.mu_hat + 1.5 * rng.standard_normal(2)
            lam = 0.3 * rng.standard_normal(2)
            cgf = EesService.extended_cgf(model, lam, s)
            grad = finite_difference_grad(lambda x: EesService.extended_cgf(model, x, s).value, lam)
            np.testing.assert_allclose(cgf.grad, grad, rtol=1e-5, atol=1e-8)
            hess = np.column_stack([
                finite_difference_grad(lambda x: EesService.extended_cgf(model, x, s).grad[j], lam)
                for j in range(2)
            ])
            np.testing.assert_allclose(cgf.hess, hess, rtol=1e-5, atol=1e-8)

    def test_hessian_bounded_below_by_gaussian_share(self, rng, skewed_samples):
        model = EesService.fit(skewed_samples, 0.05)
        sigma_min = np.linalg.eigvalsh(model.sigma_hat).min()
        for _ in range(20):
            s = model.mu_hat + 4.0 * rng.standard_normal(2)
            g = EesService.weight_at(model, s)
            cgf = EesService.extended_cgf(model, 2.0 * rng.standard_normal(2), s)
            assert np.linalg.eigvalsh(cgf.hess).min() >= (1.0 - g) * sigma_min - 1e-10


class TestSolveSaddlepoint:
    def test_gaussian_branch_closed_form(self, skewed_samples):
        model = EesService.fit(skewed_samples, math.inf)
        s = model.mu_hat + np.array([1.5, -0.5])
        solution = EesService.solve_saddlepoint(model, s)
        expected = np.linalg.solve(model.sigma_hat, s - model.mu_hat)
        np.testing.assert_allclose(solution.lambda_hat, expected, rtol=1e-10)
        assert solution.mixture_weight == 0.0

    def test_at_mean(self, skewed_samples):
        model = EesService.fit(skewed_samples, 0.0)
        solution = EesService.solve_saddlepoint(model, model.mu_hat)
        np.testing.assert_allclose(solution.lambda_hat, 0.0, atol=1e-10)

    def test_far_tail_residual(self, rng):
        samples = rng.exponential(1.0, size=(500, 2))
        model = EesService.fit(samples, 0.01)
        s = model.mu_hat + np.array([10.0 * samples[:, 0].std(ddof=1), 0.0])
        solution = EesService.solve_saddlepoint(model, s, tol=1e-10)
        assert solution.residual_norm <= 1e-8
        grad = EesService.extended_cgf(model, solution.lambda_hat, s).grad
        assert np.linalg.norm(grad - s) <= 1e-8

    def test_astronomically_far_point(self, rng):
        model = EesService.fit(rng.exponential(1.0, size=(500, 2)), 0.01)
        s = model.mu_hat + np.array([1e77, 1e77])
        solution = EesService.solve_saddlepoint(model, s)
        assert solution.mixture_weight == 0.0
        assert solution.residual_norm <= 1e-8 * (1.0 + np.linalg.norm(s))

    @pytest.mark.parametrize("gamma", [1e-3, 1e-2, 1e-1])
    def test_converges_outside_the_sample_hull(self, rng, gamma):
        samples = rng.exponential(1.0, size=(500, 2))
        model = EesService.fit(samples, gamma)
        sd = samples.std(axis=0, ddof=1)
        lower = samples.min(axis=0) - 10.0 * sd
        upper = samples.max(axis=0) + 10.0 * sd
        points = rng.uniform(lower, upper, size=(100, 2))
        for s in points:
            solution = EesService.solve_saddlepoint(model, s)
            assert solution.residual_norm <= 1e-8 * (1.0 + np.linalg.norm(s))


class TestLogDensity:
    @pytest.mark.parametrize("d", [1, 2, 5])
    def test_gaussian_exactness(self, rng, d):
        samples = rng.gamma(shape=2.0, scale=1.0, size=(500, d))
        model = EesService.normalize(EesService.fit(samples, math.inf), 50, rng_seed=1)
        exact = stats.multivariate_normal(model.mu_hat, model.sigma_hat)
        points = model.mu_hat + 3.0 * rng.standard_normal((100, d))
        for s in points:
            assert EesService.ees_log_density(model, s) == pytest.approx(exact.logpdf(s), abs=1e-8)
            assert EesService.gaussian_log_density(model, s) == pytest.approx(exact.logpdf(s), abs=1e-8)

    def test_affine_equivariance(self, rng, skewed_samples):
        model = EesService.fit(skewed_samples, 0.5)
        offsets = (np.zeros(2), np.array([0.8, 0.4]), np.array([-0.5, -0.2]))
        for _ in range(20):
            a = 3.0 * rng.standard_normal(2)
            Q, _ = np.linalg.qr(rng.standard_normal((2, 2)))
            B = Q @ np.diag(rng.uniform(0.5, 2.0, size=2)) @ np.linalg.qr(rng.standard_normal((2, 2)))[0]
            moved = EesService.fit(a + skewed_samples @ B.T, 0.5)
            log_det_B = math.log(abs(np.linalg.det(B)))
            for offset in offsets:
                s = model.mu_hat + offset
                expected = EesService.ees_log_density(model, s) - log_det_B
                assert EesService.ees_log_density(moved, a + B @ s) == pytest.approx(expected, abs=1e-6)

    def test_matches_unstandardized_evaluation(self, skewed_samples):
        model = EesService.fit(skewed_samples, 0.0)
        s = model.mu_hat + np.array([0.7, -0.4])
        log_p, solution = EesService.log_density_detail(model, s, tol=1e-10)
        emp = EesService.empirical_cgf(skewed_samples, solution.lambda_hat)
        _, log_det = np.linalg.slogdet(emp.hess)
        direct = -math.log(2 * math.pi) - 0.5 * log_det + emp.value - solution.lambda_hat @ s
        assert log_p == pytest.approx(direct, abs=1e-7)

    def test_standard_normal_at_origin(self, rng):
        model = EesService.fit(rng.standard_normal((4000, 2)), 1.0)
        assert EesService.ees_log_density(model, [0.0, 0.0]) == pytest.approx(-math.log(2 * math.pi), abs=0.1)

    @pytest.mark.slow
    def test_standard_normal_at_origin_with_selected_gamma(self, rng):
        samples = rng.standard_normal((4000, 2))
        cv = TuningService.cross_validate_gamma(samples, k=5, l=200, rng_seed=3)
        model = EesService.fit(samples, cv.selected_gamma)
        assert EesService.ees_log_density(model, [0.0, 0.0]) == pytest.approx(-math.log(2 * math.pi), abs=0.05)

    def test_error_at_gaussian_centre_shrinks_with_m(self):
        exact = -math.log(2 * math.pi)
        mean_errors = []
        for m in (250, 1000, 4000):
            errors = []
            for replicate in range(20):
                samples = np.random.default_rng([m, replicate]).standard_normal((m, 2))
                model = EesService.fit(samples, 0.0)
                errors.append(abs(EesService.ees_log_density(model, [0.0, 0.0]) - exact))
            mean_errors.append(np.mean(errors))
        assert mean_errors[0] > mean_errors[1] > mean_errors[2]

    def test_batch_matches_pointwise(self, skewed_samples):
        model = EesService.fit(skewed_samples, 0.2)
        points = model.mu_hat + np.array([[0.0, 0.0], [1.0, 0.5], [-0.5, 2.0]])
        values, failed = EesService.batch_log_density(model, points, workers=2)
        assert not failed.any()
        np.testing.assert_allclose(values, [EesService.ees_log_density(model, p) for p in points])

    def test_batch_dimension_mismatch(self, skewed_samples):
        model = EesService.fit(skewed_samples, 0.2)
        with pytest.raises(InvalidInputError):
            EesService.batch_log_density(model, np.zeros((3, 3)))

    def test_query_with_nan(self, skewed_samples):
        model = EesService.fit(skewed_samples, 0.2)
        with pytest.raises(InvalidInputError):
            EesService.ees_log_density(model, [np.nan, 0.0])


class TestFit:
    def test_duplicated_column(self, rng):
        x = rng.standard_normal(50)
        with pytest.raises(RankError):
            EesService.fit(np.column_stack([x, x]), 1.0)

    def test_too_few_samples(self):
        with pytest.raises(InsufficientSamplesError):
            EesService.fit(np.array([[1.0, 2.0], [3.0, 5.0]]), 1.0)

    def test_standardized_samples(self, skewed_samples):
        model = EesService.fit(skewed_samples, 1.0, seed=7)
        np.testing.assert_allclose(model.samples.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(np.cov(model.samples, rowvar=False), np.eye(2), atol=1e-10)
        np.testing.assert_allclose(model.raw_samples(), skewed_samples, atol=1e-10)
        assert model.seed == 7
        assert not model.is_normalized


class TestNormalize:
    def test_gaussian_limit_is_proper(self, gaussian_samples):
        model = EesService.normalize(EesService.fit(gaussian_samples, math.inf), 200, rng_seed=3)
        assert model.log_z == pytest.approx(0.0, abs=1e-10)
        assert model.z_std_error == pytest.approx(0.0, abs=1e-10)

    def test_single_draw(self, skewed_samples):
        model = EesService.fit(skewed_samples, 0.5)
        normalized = EesService.normalize(model, 1, rng_seed=11)
        draw = np.random.default_rng(11).standard_normal((1, 2))
        x = model.mu_hat + draw[0] @ model.sigma_factor.T
        log_q = stats.multivariate_normal(model.mu_hat, model.sigma_hat).logpdf(x)
        assert normalized.log_z == pytest.approx(EesService.ees_log_density(model, x) - log_q, abs=1e-9)
        assert normalized.z_std_error is None

    def test_normalized_density_shifts_by_log_z(self, skewed_samples):
        model = EesService.fit(skewed_samples, 0.5)
        normalized = EesService.normalize(model, 100, rng_seed=5)
        s = model.mu_hat + 0.3
        assert EesService.ees_log_density(normalized, s) == pytest.approx(
            EesService.ees_log_density(model, s) - normalized.log_z
        )

    def test_deterministic(self, skewed_samples):
        model = EesService.fit(skewed_samples, 0.5)
        a = EesService.normalize(model, 100, rng_seed=5, workers=1)
        b = EesService.normalize(model, 100, rng_seed=5, workers=4)
        assert a.log_z == b.log_z

    @pytest.mark.slow
    def test_matches_quadrature(self, rng):
        samples = rng.exponential(2.0, size=(10000, 1))
        model = EesService.normalize(EesService.fit(samples, 5e-3), 10000, rng_seed=1)
        unnormalized = model.model_copy(update={"log_z": None, "z_std_error": None})
        grid = np.linspace(-10.0, 40.0, 4001)
        values, _ = EesService.batch_log_density(unnormalized, grid[:, None], gaussian_fallback=True)
        z_quad = integrate.trapezoid(np.exp(values), grid)
        assert abs(math.exp(model.log_z) - z_quad) <= 3 * model.z_std_error


def test_jitter_ladder():
    singular = np.array([[1.0, 1.0], [1.0, 1.0]])
    factor, jitter = cholesky_with_jitter(singular)
    assert jitter > 0
    np.testing.assert_allclose(factor @ factor.T, singular, atol=1e-6)
