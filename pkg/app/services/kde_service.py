from typing import Optional
import logging
import math

import numpy as np
from scipy import linalg, stats

from app.logic.exceptions import FactorizationError, InvalidInputError, ValidationError
from app.services.ees_service import as_stat_matrix

logger = logging.getLogger(__name__)


class KernelDensityService:
    """Gaussian kernel density estimates on scipy's gaussian_kde"""

    @staticmethod
    def fit(samples, scale: Optional[float] = None) -> stats.gaussian_kde:
        """Kernel estimate on the rows of `samples`.

        The kernel covariance is scale * Sigma_hat, or Silverman's rule when no scale is given.
        """
        X = as_stat_matrix(samples)
        if X.shape[0] < 2:
            raise ValidationError("A kernel estimate needs at least two samples")
        if scale is not None and not scale > 0:
            raise ValidationError(f"Kernel scale must be positive, got {scale}")
        if np.linalg.matrix_rank(X - X.mean(axis=0)) < X.shape[1]:
            raise FactorizationError("Kernel covariance is singular: samples span fewer than d dimensions")
        bw_method = "silverman" if scale is None else math.sqrt(scale)
        try:
            kde = stats.gaussian_kde(X.T, bw_method=bw_method)
        except (linalg.LinAlgError, ValueError) as e:
            raise FactorizationError(f"Kernel covariance is not positive definite: {e}")
        logger.debug(f"Kernel estimate on n={kde.n} points, bandwidth factor {kde.factor:.4g}")
        return kde

    @staticmethod
    def log_density(points, kde: stats.gaussian_kde) -> np.ndarray:
        """log (1/n) sum_i N(x; x_i, H) at each row of `points`"""
        P = as_stat_matrix(points)
        if P.shape[1] != kde.d:
            raise InvalidInputError(f"Points have dimension {P.shape[1]}, samples have {kde.d}")
        return np.atleast_1d(kde.logpdf(P.T))

    @staticmethod
    def kernel_factor(kde: stats.gaussian_kde) -> np.ndarray:
        """Lower Cholesky factor of the kernel covariance"""
        try:
            return linalg.cholesky(np.atleast_2d(kde.covariance), lower=True)
        except (linalg.LinAlgError, ValueError):
            raise FactorizationError("Kernel covariance is not positive definite")
