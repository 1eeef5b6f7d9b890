from typing import Callable, Optional, Tuple, Union
import logging
import math

import numpy as np
from scipy import linalg

from app.ReqResModels.parammodels import ParamVector
from app.ReqResModels.synthlikmodels import EstimatorKind, SlDiagnostics, SlEstimate
from app.logic.exceptions import (
    EstimateError,
    FactorizationError,
    InsufficientSamplesError,
    NumericalError,
    RankError,
    ValidationError,
)
from app.services.ees_service import LOG_2PI, EesService, as_vector, cholesky_with_jitter
from app.services.seeding import derive_seed
from app.services.simulator_service import Simulator

logger = logging.getLogger(__name__)

MAX_INVALID_FRACTION = 0.20

# scales a median absolute deviation to a normal standard deviation
MAD_TO_SD = 1.4826


class SynthLikService:
    """Pointwise synthetic likelihood under the Gaussian and the EES density estimators"""

    @staticmethod
    def _param(sim: Simulator, theta: Union[ParamVector, np.ndarray]) -> ParamVector:
        if isinstance(theta, ParamVector):
            return theta
        return sim.param_vector(theta)

    @staticmethod
    def simulate_statistics(sim: Simulator, theta, m: int, rng_seed: int,
                            workers: Optional[int] = None) -> Tuple[np.ndarray, int]:
        """m statistic vectors at theta with non-finite rows dropped and counted"""
        S = sim.simulate_many(SynthLikService._param(sim, theta), m, derive_seed(rng_seed, 0), workers)
        valid = np.all(np.isfinite(S), axis=1)
        invalid = int(m - valid.sum())
        if invalid > MAX_INVALID_FRACTION * m:
            raise EstimateError(f"{invalid} of {m} simulations produced non-finite statistics")
        if invalid:
            logger.warning(f"Dropped {invalid} of {m} simulations with non-finite statistics")
        return S[valid], invalid

    @staticmethod
    def robust_moments(S: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Median centre and MAD scales combined with the sample correlation"""
        center = np.median(S, axis=0)
        scale = MAD_TO_SD * np.median(np.abs(S - center), axis=0)
        sd = S.std(axis=0, ddof=1)
        scale = np.where(scale > 0, scale, sd)
        corr = np.atleast_2d(np.corrcoef(S, rowvar=False))
        return center, corr * np.outer(scale, scale)

    @staticmethod
    def gaussian_sl(s0, theta, sim: Simulator, m: int, rng_seed: int, robust: bool = False,
                    workers: Optional[int] = None) -> SlEstimate:
        """Multivariate normal log density of s0 with moments of m simulated statistics"""
        d = sim.n_stats
        if m <= d + 1:
            raise ValidationError(f"Gaussian synthetic likelihood needs m > d + 1 = {d + 1}, got {m}")
        s0 = as_vector(s0, d, "s0")
        theta = SynthLikService._param(sim, theta)

        S, invalid = SynthLikService.simulate_statistics(sim, theta, m, rng_seed, workers)
        if S.shape[0] <= d + 1:
            raise EstimateError("Too few valid simulations to estimate a covariance")
        if robust:
            mu, sigma = SynthLikService.robust_moments(S)
        else:
            mu = S.mean(axis=0)
            centered = S - mu
            sigma = centered.T @ centered / (S.shape[0] - 1)

        try:
            factor, jitter = cholesky_with_jitter(sigma)
        except FactorizationError as e:
            raise EstimateError(f"Simulated statistics have a singular covariance: {e.message}")
        if jitter > 0:
            logger.warning(f"Gaussian synthetic likelihood covariance needed jitter {jitter:g}")

        z = linalg.solve_triangular(factor, s0 - mu, lower=True)
        log_sl = -0.5 * d * LOG_2PI - float(np.sum(np.log(np.diag(factor)))) - 0.5 * float(z @ z)
        return SlEstimate(
            log_sl=log_sl,
            theta=theta,
            m=int(S.shape[0]),
            estimator_kind=EstimatorKind.GAUSSIAN,
            diagnostics=SlDiagnostics(invalid_count=invalid, jitter=jitter),
        )

    @staticmethod
    def ees_sl(s0, theta, sim: Simulator, m: int, gamma: float, l: int = 0, rng_seed: int = 0,
               workers: Optional[int] = None) -> SlEstimate:
        """EES log density of s0 fitted to m simulated statistics; normalized only when l > 0"""
        d = sim.n_stats
        if m <= d + 1:
            raise ValidationError(f"EES synthetic likelihood needs m > d + 1 = {d + 1}, got {m}")
        s0 = as_vector(s0, d, "s0")
        theta = SynthLikService._param(sim, theta)

        S, invalid = SynthLikService.simulate_statistics(sim, theta, m, rng_seed, workers)
        try:
            model = EesService.fit(S, gamma, seed=derive_seed(rng_seed, 1))
        except (RankError, InsufficientSamplesError) as e:
            raise EstimateError(f"Cannot fit the saddlepoint estimator: {e.message}")
        if l > 0:
            model = EesService.normalize(model, l, workers=workers)

        log_sl, solution = EesService.log_density_detail(model, s0)
        return SlEstimate(
            log_sl=log_sl,
            theta=theta,
            m=int(S.shape[0]),
            estimator_kind=EstimatorKind.EES,
            diagnostics=SlDiagnostics(
                saddle=solution,
                mixture_weight=solution.mixture_weight,
                invalid_count=invalid,
                log_z=model.log_z,
            ),
        )

    @staticmethod
    def estimate(kind: EstimatorKind, s0, theta, sim: Simulator, m: int, rng_seed: int,
                 gamma: float = math.inf, l: int = 0, robust: bool = False,
                 workers: Optional[int] = None) -> SlEstimate:
        if EstimatorKind(kind) == EstimatorKind.GAUSSIAN:
            return SynthLikService.gaussian_sl(s0, theta, sim, m, rng_seed, robust=robust, workers=workers)
        return SynthLikService.ees_sl(s0, theta, sim, m, gamma, l=l, rng_seed=rng_seed, workers=workers)

    @staticmethod
    def make_objective(kind: EstimatorKind, s0, sim: Simulator, m: int, gamma: float = math.inf,
                       l: int = 0, robust: bool = False) -> Callable[[np.ndarray, int], float]:
        """(theta, seed) -> log synthetic likelihood, with estimation failures mapped to -inf"""
        def objective(theta: np.ndarray, seed: int) -> float:
            try:
                return SynthLikService.estimate(
                    kind, s0, theta, sim, m, seed, gamma=gamma, l=l, robust=robust, workers=1
                ).log_sl
            except (NumericalError, ValidationError) as e:
                logger.debug(f"Synthetic likelihood failed at {np.round(theta, 6)}: {e.message}")
                return -math.inf
        return objective
