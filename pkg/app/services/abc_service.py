from typing import List, Optional, Sequence
import logging
import math

import numpy as np
from pydantic import ValidationError as PydanticValidationError
from scipy import linalg
from scipy.optimize import bisect

from app.ReqResModels.abcmodels import AbcAnalytic, AbcMcmcConfig, AbcMcmcResult
from app.ReqResModels.parammodels import ParamVector
from app.logic.exceptions import CalibrationError, InfeasibleError, InvalidInputError, ValidationError
from app.services.ees_service import as_stat_matrix, as_vector
from app.services.kde_service import KernelDensityService
from app.services.seeding import derive_seed, parallel_map
from app.services.simulator_service import Simulator

logger = logging.getLogger(__name__)

CALIBRATION_CHUNK = 1000
BISECT_XTOL = 1e-14
BISECT_MAXITER = 500
# bracket doublings tried when searching for a prior bound
MAX_EXPANSIONS = 60
MEAN_SHIFT_TOL = 1e-8
MEAN_SHIFT_MAX_ITER = 1000


class AbcService:
    """Approximate Bayesian computation comparators"""

    # analytic shifted-exponential ABC, s0 = 0

    @staticmethod
    def abc_likelihood_1d(theta, epsilon: float, beta: float):
        """P(|theta + X| < epsilon) for X ~ Exp(beta)"""
        if epsilon <= 0 or beta <= 0:
            raise ValidationError("epsilon and beta must be positive")
        t = np.asarray(theta, dtype=float)
        inside = -np.expm1(-beta * (epsilon - t))
        below = np.exp(-beta * (-epsilon - np.minimum(t, -epsilon))) - np.exp(-beta * (epsilon - t))
        out = np.where(t > epsilon, 0.0, np.where(t >= -epsilon, inside, below))
        return float(out) if out.ndim == 0 else out

    @staticmethod
    def abc_likelihood(theta, epsilon: float, beta: float) -> float:
        """Product of the one-dimensional likelihoods over coordinates"""
        values = np.atleast_1d(AbcService.abc_likelihood_1d(np.atleast_1d(theta), epsilon, beta))
        return float(np.prod(values))

    @staticmethod
    def abc_map_mse(epsilon: float) -> float:
        """Per-coordinate squared error of the ABC MAP at -epsilon against the MLE at 0"""
        if epsilon < 0:
            raise ValidationError("epsilon must be nonnegative")
        return float(epsilon) ** 2

    @staticmethod
    def map_acceptance(epsilon: float, beta: float, d: int = 1) -> float:
        """Acceptance probability at the MAP, F(2 epsilon)^d"""
        return float((-math.expm1(-2.0 * beta * epsilon)) ** d)

    @staticmethod
    def acceptance_probability(psi: float, epsilon: float, beta: float, d: int = 1) -> float:
        """Prior acceptance probability of the tolerance band under U(psi, 0) priors, to the d-th power"""
        if not psi < 0 or epsilon <= 0 or beta <= 0:
            raise ValidationError("need psi < 0, epsilon > 0 and beta > 0")
        inner = (1.0 + math.exp(beta * psi) * (math.exp(-beta * epsilon) - math.exp(beta * epsilon))
                 - math.exp(-beta * epsilon)) / beta + epsilon
        return float((-inner / psi) ** d)

    @staticmethod
    def _solve(f, a: float, b: float, what: str) -> float:
        fa, fb = f(a), f(b)
        if fa == 0:
            return a
        if fb == 0:
            return b
        if np.sign(fa) == np.sign(fb):
            raise InfeasibleError(f"No {what} on [{a:g}, {b:g}] reaches the target acceptance")
        return float(bisect(f, a, b, xtol=BISECT_XTOL, maxiter=BISECT_MAXITER))

    @staticmethod
    def calibrate_tolerance(psi: float, phi: float, beta: float, d: int = 1) -> float:
        """epsilon in (0, -psi) whose d-dimensional prior acceptance equals phi"""
        if not 0 < phi < 1:
            raise ValidationError("phi must lie in (0, 1)")
        target = phi ** (1.0 / d)
        f = lambda eps: AbcService.acceptance_probability(psi, eps, beta) - target
        epsilon = AbcService._solve(f, 1e-12 * -psi, -psi * (1 - 1e-12), "tolerance")
        AbcAnalytic(epsilon=epsilon, beta=beta, psi=psi, d=d)
        return epsilon

    @staticmethod
    def calibrate_prior(epsilon: float, phi: float, beta: float, d: int = 1) -> float:
        """psi < -epsilon whose d-dimensional prior acceptance equals phi"""
        if not 0 < phi < 1:
            raise ValidationError("phi must lie in (0, 1)")
        target = phi ** (1.0 / d)
        f = lambda psi: AbcService.acceptance_probability(psi, epsilon, beta) - target
        hi = -epsilon
        span = max(epsilon, 1.0)
        lo = hi - span
        for _ in range(MAX_EXPANSIONS):
            if f(lo) < 0:
                break
            span *= 2.0
            lo = hi - span
        psi = AbcService._solve(f, lo, hi, "prior bound")
        if psi >= -epsilon:
            raise InfeasibleError("Calibrated prior collapses onto the tolerance band")
        return psi

    # MCMC-ABC

    @staticmethod
    def _reflect(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
        width = upper - lower
        y = np.mod(x - lower, 2.0 * width)
        return lower + np.where(y > width, 2.0 * width - y, y)

    @staticmethod
    def _distance(S: np.ndarray, s0: np.ndarray, scales: np.ndarray) -> np.ndarray:
        dist = np.max(np.abs(S - s0) / scales, axis=-1)
        return np.where(np.all(np.isfinite(S), axis=-1), dist, np.inf)

    @staticmethod
    def _prior_predictive(sim: Simulator, config: AbcMcmcConfig):
        lower, upper = config.lower_array(), config.upper_array()
        rng = np.random.default_rng(derive_seed(config.seed, 0))
        thetas = lower + (upper - lower) * rng.random((config.calibration_sims, lower.size))
        starts = list(range(0, config.calibration_sims, CALIBRATION_CHUNK))

        def run(c: int) -> np.ndarray:
            return sim.simulate_batch(thetas[starts[c]:starts[c] + CALIBRATION_CHUNK], derive_seed(config.seed, 1, c))

        return thetas, np.vstack(parallel_map(run, list(range(len(starts))), config.workers))

    @staticmethod
    def mcmc_abc(sim: Simulator, config: AbcMcmcConfig, s0) -> AbcMcmcResult:
        """Marjoram-style ABC chain under a uniform prior box with a calibrated tolerance"""
        p = len(sim.param_names)
        if len(config.lower) != p:
            raise ValidationError(f"Prior box has {len(config.lower)} coordinates, model has {p}")
        s0 = as_vector(s0, sim.n_stats, "s0")
        lower, upper = config.lower_array(), config.upper_array()

        thetas, S = AbcService._prior_predictive(sim, config)
        finite = np.all(np.isfinite(S), axis=1)
        if finite.sum() < 2:
            raise CalibrationError("Prior-predictive simulations produced fewer than two finite statistic vectors")
        scales = S[finite].std(axis=0, ddof=1)
        scales = np.where(scales > 0, scales, 1.0)
        dist = AbcService._distance(S, s0, scales)

        epsilon = config.epsilon
        if epsilon is None:
            epsilon = float(np.quantile(dist[np.isfinite(dist)], config.target_acceptance))
        accepted = dist <= epsilon
        if not accepted.any():
            raise CalibrationError(f"No prior-predictive draw lies within epsilon={epsilon:g}")
        calibration_acceptance = float(accepted.mean())
        logger.info(f"ABC tolerance {epsilon:g} accepts {accepted.sum()} of {config.calibration_sims} prior draws")

        theta = np.asarray(config.init, dtype=float) if config.init is not None else thetas[int(np.argmin(dist))]
        step = config.proposal_fraction * (upper - lower)
        rng = np.random.default_rng(derive_seed(config.seed, 2))
        thin, burn_in = config.thin_steps, config.burn_in_steps

        kept: List[np.ndarray] = []
        n_accepted = 0
        for t in range(config.chain_length):
            proposal = AbcService._reflect(theta + step * rng.standard_normal(p), lower, upper)
            s = sim.simulate(proposal, derive_seed(config.seed, 3, t))
            if AbcService._distance(s[None, :], s0, scales)[0] <= epsilon:
                theta = proposal
                n_accepted += 1
            if t >= burn_in and (t - burn_in) % thin == 0:
                kept.append(theta.copy())

        acceptance_rate = n_accepted / config.chain_length
        logger.info(f"ABC chain accepted {n_accepted} of {config.chain_length} proposals, kept {len(kept)} samples")
        return AbcMcmcResult(
            names=list(sim.param_names),
            samples=np.asarray(kept, dtype=float).reshape(-1, p),
            epsilon=float(epsilon),
            acceptance_rate=acceptance_rate,
            calibration_acceptance=calibration_acceptance,
            stat_scales=scales,
            n_chain_simulations=config.chain_length,
            n_calibration_simulations=config.calibration_sims,
            seed=config.seed,
        )

    # posterior mode

    @staticmethod
    def _shift_to_mode(start: np.ndarray, Yw: np.ndarray):
        y = start
        for it in range(1, MEAN_SHIFT_MAX_ITER + 1):
            logw = -0.5 * np.sum((Yw - y) ** 2, axis=1)
            w = np.exp(logw - logw.max())
            nxt = w @ Yw / w.sum()
            if np.linalg.norm(nxt - y) < MEAN_SHIFT_TOL:
                return nxt, True
            y = nxt
        return y, False

    @staticmethod
    def mean_shift_map(samples, n_starts: int = 500, rng_seed: int = 0,
                       names: Optional[Sequence[str]] = None, workers: Optional[int] = None) -> ParamVector:
        """Highest-density mode of a Gaussian kernel estimate with Silverman bandwidth, by multi-start mean shift"""
        X = as_stat_matrix(samples)
        n, d = X.shape
        if n == 0:
            raise InvalidInputError("mean shift needs at least one sample")
        if n == 1:
            return AbcService._as_param(X[0], names)

        kde = KernelDensityService.fit(X)
        factor = KernelDensityService.kernel_factor(kde)
        Yw = linalg.solve_triangular(factor, X.T, lower=True).T

        rng = np.random.default_rng(derive_seed(rng_seed, 0))
        starts = rng.choice(n, size=n_starts, replace=n < n_starts)
        results = parallel_map(lambda i: AbcService._shift_to_mode(Yw[i], Yw), list(starts), workers)

        modes = np.array([y for y, ok in results if ok])
        dropped = len(results) - len(modes)
        if dropped:
            logger.warning(f"Mean shift dropped {dropped} of {len(results)} starts that did not converge")
        if len(modes) == 0:
            modes = np.array([y for y, _ in results])

        modes = modes @ factor.T
        log_dens = KernelDensityService.log_density(modes, kde)
        return AbcService._as_param(modes[int(np.argmax(log_dens))], names)

    @staticmethod
    def _as_param(values: np.ndarray, names: Optional[Sequence[str]]) -> ParamVector:
        if names is None:
            return ParamVector.unnamed(values)
        try:
            return ParamVector(names=list(names), values=[float(v) for v in values])
        except PydanticValidationError as e:
            raise ValidationError(f"Invalid parameter names: {e}")
