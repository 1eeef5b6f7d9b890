from typing import List, Optional, Sequence
import logging

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from app.ReqResModels.tuningmodels import DEFAULT_GAMMA_GRID, CvRequest, CvResult, KdeCvResult
from app.logic.exceptions import (
    InsufficientSamplesError,
    NormalizationError,
    TuningError,
    ValidationError,
)
from app.services.ees_service import EesService, as_stat_matrix
from app.services.kde_service import KernelDensityService
from app.services.seeding import derive_seed, parallel_map

logger = logging.getLogger(__name__)

# a fold whose validation points fall back to the Gaussian branch more often than this is rejected
MAX_FAILURE_FRACTION = 0.10


class TuningService:
    """k-fold cross-validation of the mixture parameter with nested normalization"""

    @staticmethod
    def fold_partition(m: int, k: int, seed: int) -> List[np.ndarray]:
        """Seeded shuffle of range(m) cut into k folds; the last fold absorbs the remainder"""
        if k < 2 or m < k:
            raise ValidationError(f"Cannot split {m} vectors into {k} folds")
        order = np.random.default_rng(derive_seed(seed, 0)).permutation(m)
        size = m // k
        folds = [order[t * size:(t + 1) * size] for t in range(k - 1)]
        folds.append(order[(k - 1) * size:])
        return folds

    @staticmethod
    def _training_rows(folds: Sequence[np.ndarray], t: int) -> np.ndarray:
        return np.concatenate([f for j, f in enumerate(folds) if j != t])

    @staticmethod
    def cross_validate_gamma(samples, gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID,
                             k: int = 10, l: int = 1000, rng_seed: int = 0,
                             workers: Optional[int] = None) -> CvResult:
        """Select gamma minimizing the fold-averaged negative log-likelihood of the normalized estimator"""
        try:
            request = CvRequest(gamma_grid=list(gamma_grid), k=k, l=l, seed=rng_seed)
        except PydanticValidationError as e:
            raise ValidationError(f"Invalid cross-validation request: {e}")

        S = as_stat_matrix(samples)
        m, d = S.shape
        grid = np.asarray(request.gamma_grid, dtype=float)
        folds = TuningService.fold_partition(m, request.k, request.seed)
        if m - len(folds[-1]) <= d:
            raise InsufficientSamplesError(f"Training folds hold too few vectors for d={d}")

        fold_seeds = [derive_seed(request.seed, t + 1) for t in range(request.k)]
        base_models = [
            EesService.fit(S[TuningService._training_rows(folds, t)], grid[0], seed=fold_seeds[t])
            for t in range(request.k)
        ]

        def run_cell(cell):
            i, t = cell
            validation = S[folds[t]]
            cell_seed = derive_seed(fold_seeds[t], i)
            model = base_models[t].model_copy(update={"gamma": float(grid[i]), "seed": cell_seed})
            try:
                model = EesService.normalize(model, request.l, rng_seed=cell_seed, workers=1)
            except NormalizationError as e:
                raise TuningError(f"Normalization failed for gamma={grid[i]:g}, fold {t + 1}: {e.message}")
            values, failed = EesService.batch_log_density(model, validation, gaussian_fallback=True, workers=1)
            n_failed = int(failed.sum())
            if n_failed > MAX_FAILURE_FRACTION * len(validation):
                raise TuningError(
                    f"{n_failed} of {len(validation)} validation points failed for gamma={grid[i]:g}, fold {t + 1}"
                )
            return -float(np.mean(values)), n_failed

        cells = [(i, t) for i in range(len(grid)) for t in range(request.k)]
        results = parallel_map(run_cell, cells, workers)

        fold_losses = np.empty((request.k, len(grid)))
        failure_counts = np.zeros((request.k, len(grid)), dtype=int)
        for (i, t), (loss, n_failed) in zip(cells, results):
            fold_losses[t, i] = loss
            failure_counts[t, i] = n_failed

        if not np.all(np.isfinite(fold_losses)):
            raise TuningError("Cross-validation produced non-finite fold losses")

        mean_loss = fold_losses.mean(axis=0)
        # ties go to the larger, smoother gamma
        best = int(np.flatnonzero(mean_loss == mean_loss.min())[-1])
        logger.info(f"Cross-validation selected gamma={grid[best]:g} (loss {mean_loss[best]:.6g})")

        return CvResult(
            gamma_grid=grid,
            fold_losses=fold_losses,
            mean_loss=mean_loss,
            selected_gamma=float(grid[best]),
            seeds=fold_seeds,
            failure_counts=failure_counts,
        )

    @staticmethod
    def cross_validate_kde_scale(samples, scale_grid: Sequence[float], k: int = 10,
                                 rng_seed: int = 0) -> KdeCvResult:
        """Choose alpha for a Gaussian kernel estimator with kernel covariance alpha * Sigma_hat"""
        grid = np.asarray(scale_grid, dtype=float)
        if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise ValidationError("scale_grid must be strictly increasing and positive")
        S = as_stat_matrix(samples)
        folds = TuningService.fold_partition(S.shape[0], k, rng_seed)

        fold_losses = np.empty((k, len(grid)))
        for t in range(k):
            train = S[TuningService._training_rows(folds, t)]
            validation = S[folds[t]]
            for i, alpha in enumerate(grid):
                kde = KernelDensityService.fit(train, scale=float(alpha))
                values = KernelDensityService.log_density(validation, kde)
                fold_losses[t, i] = -float(np.mean(values))

        mean_loss = fold_losses.mean(axis=0)
        best = int(np.flatnonzero(mean_loss == mean_loss.min())[-1])
        return KdeCvResult(
            scale_grid=grid,
            fold_losses=fold_losses,
            mean_loss=mean_loss,
            selected_scale=float(grid[best]),
        )
