import numpy as np
import pytest

from app.logic.exceptions import ValidationError
from app.services.simulator_service import ShiftedExpSimulator
from app.services.tuning_service import TuningService


def test_fold_partition_covers_every_row():
    folds = TuningService.fold_partition(103, 10, seed=4)
    assert len(folds) == 10
    rows = np.concatenate(folds)
    assert sorted(rows.tolist()) == list(range(103))
    assert all(len(f) == 10 for f in folds[:-1])
    assert len(folds[-1]) == 13


def test_fold_partition_is_seeded():
    a = TuningService.fold_partition(50, 5, seed=1)
    b = TuningService.fold_partition(50, 5, seed=1)
    c = TuningService.fold_partition(50, 5, seed=2)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not all(np.array_equal(x, y) for x, y in zip(a, c))


def test_fold_partition_too_few_rows():
    with pytest.raises(ValidationError):
        TuningService.fold_partition(3, 5, seed=0)


def test_single_grid_value(gaussian_samples):
    result = TuningService.cross_validate_gamma(gaussian_samples[:60], [0.3], k=2, l=20, rng_seed=0)
    assert result.selected_gamma == 0.3
    assert result.fold_losses.shape == (2, 1)
    assert result.k == 2


def test_curve_shape_and_selection(skewed_samples):
    grid = [1e-2, 1e0, 1e2]
    result = TuningService.cross_validate_gamma(skewed_samples[:200], grid, k=4, l=50, rng_seed=3)
    assert result.fold_losses.shape == (4, 3)
    np.testing.assert_allclose(result.mean_loss, result.fold_losses.mean(axis=0))
    assert result.selected_gamma == grid[int(np.argmin(result.mean_loss))]
    assert np.all(np.isfinite(result.fold_losses))
    assert result.failure_counts.shape == (4, 3)
    assert len(result.seeds) == 4


def test_deterministic_across_workers(skewed_samples):
    grid = [1e-2, 1.0]
    a = TuningService.cross_validate_gamma(skewed_samples[:120], grid, k=3, l=30, rng_seed=9, workers=1)
    b = TuningService.cross_validate_gamma(skewed_samples[:120], grid, k=3, l=30, rng_seed=9, workers=4)
    np.testing.assert_array_equal(a.fold_losses, b.fold_losses)


@pytest.mark.parametrize("grid", [[], [1.0, 0.5], [0.0, 1.0], [1.0, np.inf]])
def test_invalid_grid(gaussian_samples, grid):
    with pytest.raises(ValidationError):
        TuningService.cross_validate_gamma(gaussian_samples, grid, k=2, l=10)


def test_kde_scale_selection(gaussian_samples):
    scales = [0.01, 0.1, 1.0]
    result = TuningService.cross_validate_kde_scale(gaussian_samples, scales, k=4, rng_seed=2)
    assert result.selected_scale in scales
    assert result.fold_losses.shape == (4, 3)
    assert result.selected_scale == scales[int(np.argmin(result.mean_loss))]


@pytest.mark.slow
def test_gaussian_data_prefers_gaussian_limit():
    grid = np.logspace(-4, 2, 13).tolist()
    picks = 0
    for r in range(20):
        S = np.random.default_rng(r).standard_normal((2000, 2))
        result = TuningService.cross_validate_gamma(S, grid, k=5, l=200, rng_seed=r)
        picks += result.selected_gamma == grid[-1]
    assert picks >= 18


@pytest.mark.slow
def test_shifted_exponential_selects_small_gamma():
    grid = np.logspace(-4, 0, 9).tolist()
    S = ShiftedExpSimulator(10, 0.5).simulate_many(np.zeros(10), 10000, rng_seed=0)
    result = TuningService.cross_validate_gamma(S, grid, k=10, l=1000, rng_seed=0)
    assert 5e-3 / np.sqrt(10) <= result.selected_gamma <= 5e-3 * np.sqrt(10)
