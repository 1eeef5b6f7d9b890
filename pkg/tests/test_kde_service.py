import math

import numpy as np
import pytest
from scipy import stats

from app.logic.exceptions import FactorizationError, InvalidInputError, ValidationError
from app.services.kde_service import KernelDensityService


def test_silverman_bandwidth_in_one_dimension(rng):
    x = rng.normal(3.0, 2.0, size=500)
    kde = KernelDensityService.fit(x)
    expected = (4 / 3) ** 0.2 * 500 ** -0.2 * x.std(ddof=1)
    assert math.sqrt(kde.covariance[0, 0]) == pytest.approx(expected)


def test_scale_multiplies_sample_covariance(rng):
    X = rng.standard_normal((200, 2)) @ np.array([[1.0, 0.4], [0.0, 0.7]])
    kde = KernelDensityService.fit(X, scale=0.2)
    np.testing.assert_allclose(kde.covariance, 0.2 * np.cov(X, rowvar=False), rtol=1e-12)


def test_explicit_scale_against_direct_sum(rng):
    X = rng.standard_normal((50, 1))
    kde = KernelDensityService.fit(X, scale=0.25 / X[:, 0].var(ddof=1))
    values = KernelDensityService.log_density([[0.3]], kde)
    expected = math.log(np.mean(stats.norm.pdf(0.3, loc=X[:, 0], scale=0.5)))
    assert values[0] == pytest.approx(expected, rel=1e-10)


def test_kernel_factor_whitens(rng):
    X = rng.standard_normal((300, 3))
    kde = KernelDensityService.fit(X)
    L = KernelDensityService.kernel_factor(kde)
    np.testing.assert_allclose(L @ L.T, kde.covariance, rtol=1e-12)


def test_dimension_mismatch(rng):
    kde = KernelDensityService.fit(rng.standard_normal((20, 2)))
    with pytest.raises(InvalidInputError):
        KernelDensityService.log_density(np.zeros((2, 3)), kde)


def test_degenerate_samples(rng):
    column = rng.standard_normal((30, 1))
    with pytest.raises(FactorizationError):
        KernelDensityService.fit(np.hstack([column, column]))


@pytest.mark.parametrize("scale", [0.0, -1.0])
def test_invalid_scale(rng, scale):
    with pytest.raises(ValidationError):
        KernelDensityService.fit(rng.standard_normal((20, 2)), scale=scale)
