from typing import Callable
import logging
import math

import numpy as np
from scipy import linalg

from app.ReqResModels.optimizermodels import IfConfig, IfTrace
from app.logic.exceptions import BaseCustomError, OptimizationError
from app.services.seeding import derive_seed, parallel_map

logger = logging.getLogger(__name__)

LOG_EVERY = 10


class OptimizerService:
    """Synthetic likelihood maximization by iterated filtering with a cooled Gaussian kernel"""

    @staticmethod
    def _safe_eval(sl_fn: Callable[[np.ndarray, int], float], theta: np.ndarray, seed: int) -> float:
        try:
            value = float(sl_fn(theta, seed))
        except (BaseCustomError, ArithmeticError, ValueError) as e:
            logger.debug(f"Objective failed at {theta}: {e}")
            return -math.inf
        return value if math.isfinite(value) else -math.inf

    @staticmethod
    def update(particles_u: np.ndarray, log_sl: np.ndarray):
        """Likelihood-weighted mean of the particles and the effective sample size of the weights"""
        top = log_sl.max()
        w = np.exp(log_sl - top)
        ess = float(w.sum() ** 2 / np.sum(w ** 2))
        return (w[:, None] * particles_u).sum(axis=0) / w.sum(), ess

    @staticmethod
    def maximize_sl(sl_fn: Callable[[np.ndarray, int], float], config: IfConfig) -> IfTrace:
        theta0 = config.theta0
        p = theta0.size
        N = config.n_particles
        factor = linalg.cholesky(config.proposal_matrix(), lower=True)

        center = theta0.to_unconstrained()
        thetas = np.empty((config.iterations, p))
        particles = np.empty((config.iterations, N, p))
        log_sls = np.empty((config.iterations, N))
        ess = np.empty(config.iterations)
        sigma_sq = np.array([config.cooling(k) for k in range(1, config.iterations + 1)])

        def partial_trace(upto: int) -> IfTrace:
            return IfTrace(
                names=list(theta0.names), theta0=theta0.as_array(), thetas=thetas[:upto],
                particles=particles[:upto], log_sl=log_sls[:upto], ess=ess[:upto],
                sigma_sq=sigma_sq[:upto], seed=config.seed,
            )

        logger.info(f"Iterated filtering: {config.iterations} iterations x {N} particles from {theta0.to_dict()}")
        for k in range(1, config.iterations + 1):
            rng = np.random.default_rng(derive_seed(config.seed, k))
            eps = rng.standard_normal((N, p))
            proposals_u = center + math.sqrt(sigma_sq[k - 1]) * eps @ factor.T
            natural = theta0.from_unconstrained(proposals_u)

            values = parallel_map(
                lambda i: OptimizerService._safe_eval(sl_fn, natural[i], derive_seed(config.seed, k, i)),
                list(range(N)), config.workers,
            )
            log_sl = np.asarray(values, dtype=float)
            particles[k - 1] = natural
            log_sls[k - 1] = log_sl

            if not np.any(np.isfinite(log_sl)):
                logger.error(f"All {N} particles failed at iteration {k}")
                raise OptimizationError(f"All particles have log synthetic likelihood -inf at iteration {k}",
                                        trace=partial_trace(k - 1))

            center, ess[k - 1] = OptimizerService.update(proposals_u, log_sl)
            thetas[k - 1] = theta0.from_unconstrained(center)
            if k % LOG_EVERY == 0 or k == config.iterations:
                logger.info(f"Iteration {k}: theta={np.round(thetas[k - 1], 5).tolist()} "
                            f"max log SL={log_sl[np.isfinite(log_sl)].max():.4f} ESS={ess[k - 1]:.2f}")

        return partial_trace(config.iterations)

