from typing import Optional, Tuple
import logging
import math

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from app.ReqResModels.eesmodels import CgfEval, EesModel, SaddleSolution
from app.logic.exceptions import (
    FactorizationError,
    InsufficientSamplesError,
    InvalidInputError,
    NormalizationError,
    RankError,
    SolverFailureError,
    ValidationError,
)
from app.services.seeding import parallel_map

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

# exp(-745) is the smallest positive double
UNDERFLOW_LOG = 745.0

JITTER_LADDER = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)

NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 200
ARMIJO = 1e-4
MIN_STEP = 2.0 ** -40


def as_vector(x, d: int, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape != (d,):
        raise InvalidInputError(f"{name} must have length {d}, got shape {np.shape(x)}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} must be finite")
    return v


def as_stat_matrix(samples) -> np.ndarray:
    S = np.asarray(samples, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.ndim != 2 or S.shape[0] == 0 or S.shape[1] == 0:
        raise ValidationError(f"Statistics must be an m x d matrix, got shape {np.shape(samples)}")
    return S


def cholesky_with_jitter(matrix: np.ndarray, ladder=JITTER_LADDER) -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor, adding diagonal jitter from `ladder` until it succeeds"""
    A = 0.5 * (matrix + matrix.T)
    scale = max(1.0, float(np.mean(np.abs(np.diag(A)))))
    eye = np.eye(A.shape[0])
    for jitter in ladder:
        try:
            factor = linalg.cholesky(A + jitter * scale * eye, lower=True)
        except (linalg.LinAlgError, ValueError):
            continue
        if jitter > 0:
            logger.debug(f"Cholesky needed jitter {jitter:g}")
        return factor, jitter
    raise FactorizationError(f"Matrix is not positive definite even with jitter {ladder[-1]:g}")


# above this radius the log base is evaluated as log(r^2 / 2) + log1p(2/r + 2/r^2) - r
LARGE_RADIUS = 1e8


def _log_base(radius: float) -> float:
    # log[(r(1 + r/2) + 1) e^{-r}], never positive
    if not math.isfinite(radius):
        return -math.inf
    if radius > LARGE_RADIUS:
        value = 2.0 * math.log(radius) - math.log(2.0) + math.log1p(2.0 / radius + 2.0 / radius / radius) - radius
    else:
        value = math.log1p(radius * (1.0 + 0.5 * radius)) - radius
    return min(0.0, value)


def weight_from_radius(radius: float, gamma: float) -> float:
    """g(s, gamma) given the squared Mahalanobis radius of s"""
    if math.isinf(gamma):
        return 0.0
    if gamma == 0.0 or radius == 0.0:
        return 1.0
    log_g = gamma * _log_base(radius)
    if -log_g > UNDERFLOW_LOG:
        return 0.0
    return min(1.0, math.exp(log_g))


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if math.isnan(gamma) or gamma < 0:
        raise InvalidInputError(f"gamma must be nonnegative, got {gamma}")
    return gamma


class EesService:
    """Empirical, Gaussian and extended CGFs and the saddlepoint density built on them"""

    @staticmethod
    def empirical_cgf(samples: np.ndarray, lam) -> CgfEval:
        """K(lambda) = log mean exp(lambda' s_i) with its exact gradient and Hessian"""
        S = as_stat_matrix(samples)
        m, d = S.shape
        lam = as_vector(lam, d, "lambda")

        exponents = S @ lam
        log_total = logsumexp(exponents)
        weights = np.exp(exponents - log_total)

        grad = weights @ S
        centered = S - grad
        hess = (centered * weights[:, None]).T @ centered
        hess = 0.5 * (hess + hess.T)
        return CgfEval(value=float(log_total - math.log(m)), grad=grad, hess=hess)

    @staticmethod
    def gaussian_cgf(mu, sigma, lam) -> CgfEval:
        mu = np.asarray(mu, dtype=float).reshape(-1)
        d = mu.shape[0]
        sigma = np.asarray(sigma, dtype=float).reshape(d, d)
        lam = as_vector(lam, d, "lambda")
        try:
            linalg.cholesky(sigma, lower=True)
        except (linalg.LinAlgError, ValueError):
            raise FactorizationError("Gaussian CGF covariance is not positive definite")

        return CgfEval(
            value=float(lam @ mu + 0.5 * lam @ sigma @ lam),
            grad=mu + sigma @ lam,
            hess=sigma.copy(),
        )

    @staticmethod
    def mixture_weight(s, mu_hat, sigma_hat, gamma: float) -> float:
        """g(s, gamma) = [(r(1 + r/2) + 1) e^{-r}]^gamma, r the Mahalanobis radius of s"""
        gamma = _check_gamma(gamma)
        mu_hat = np.asarray(mu_hat, dtype=float).reshape(-1)
        d = mu_hat.shape[0]
        s = as_vector(s, d, "s")
        try:
            factor = linalg.cholesky(np.asarray(sigma_hat, dtype=float).reshape(d, d), lower=True)
        except (linalg.LinAlgError, ValueError):
            raise FactorizationError("sigma_hat is not positive definite")
        z = linalg.solve_triangular(factor, s - mu_hat, lower=True)
        return weight_from_radius(float(z @ z), gamma)

    @staticmethod
    def fit(samples, gamma: float, seed: int = 0) -> EesModel:
        """Estimate moments, factor the covariance and store whitened samples"""
        S = as_stat_matrix(samples)
        m, d = S.shape
        gamma = _check_gamma(gamma)
        if m <= d:
            raise InsufficientSamplesError(f"Need more than d={d} statistic vectors, got m={m}")
        if not np.all(np.isfinite(S)):
            raise InvalidInputError("Statistics contain non-finite entries")

        mu_hat = S.mean(axis=0)
        centered = S - mu_hat
        if np.linalg.matrix_rank(centered) < d:
            raise RankError(f"Centered statistics have rank below d={d}")

        sigma_hat = centered.T @ centered / (m - 1)
        sigma_hat = 0.5 * (sigma_hat + sigma_hat.T)
        try:
            factor = linalg.cholesky(sigma_hat, lower=True)
        except linalg.LinAlgError:
            raise RankError("Sample covariance is numerically singular")

        standardized = linalg.solve_triangular(factor, centered.T, lower=True).T
        logger.debug(f"Fitted EES model with m={m}, d={d}, gamma={gamma:g}")
        return EesModel(
            samples=standardized,
            mu_hat=mu_hat,
            sigma_hat=sigma_hat,
            sigma_factor=factor,
            gamma=gamma,
            seed=int(seed),
        )

    @staticmethod
    def standardize(model: EesModel, s) -> np.ndarray:
        s = as_vector(s, model.d, "s")
        return linalg.solve_triangular(model.sigma_factor, s - model.mu_hat, lower=True)

    @staticmethod
    def weight_at(model: EesModel, s) -> float:
        z = EesService.standardize(model, s)
        return weight_from_radius(float(z @ z), model.gamma)

    @staticmethod
    def _standardized_cgf(model: EesModel, eta: np.ndarray, weight: float) -> CgfEval:
        # In whitened coordinates the Gaussian component has mean 0 and covariance I
        d = model.d
        gauss_value = 0.5 * float(eta @ eta)
        if weight == 0.0:
            return CgfEval(value=gauss_value, grad=eta.copy(), hess=np.eye(d))
        emp = EesService.empirical_cgf(model.samples, eta)
        if weight == 1.0:
            return emp
        return CgfEval(
            value=weight * emp.value + (1.0 - weight) * gauss_value,
            grad=weight * emp.grad + (1.0 - weight) * eta,
            hess=weight * emp.hess + (1.0 - weight) * np.eye(d),
        )

    @staticmethod
    def extended_cgf(model: EesModel, lam, s) -> CgfEval:
        """g(s) K_emp(lambda) + (1 - g(s)) K_gauss(lambda), in the units of the statistics"""
        lam = as_vector(lam, model.d, "lambda")
        weight = EesService.weight_at(model, s)
        L = model.sigma_factor
        eta = L.T @ lam
        cz = EesService._standardized_cgf(model, eta, weight)
        return CgfEval(
            value=float(lam @ model.mu_hat + cz.value),
            grad=model.mu_hat + L @ cz.grad,
            hess=L @ cz.hess @ L.T,
        )

    @staticmethod
    def _solve_standardized(model: EesModel, z: np.ndarray, weight: float, threshold: float,
                            max_iter: int) -> Tuple[np.ndarray, CgfEval, int, float]:
        """Damped Newton on K'(eta) = z; residuals are measured in original units"""
        L = model.sigma_factor
        if weight == 0.0:
            # Gaussian branch: K'(eta) = eta
            return z.copy(), EesService._standardized_cgf(model, z, 0.0), 0, 0.0

        eta = np.zeros(model.d)
        cgf = EesService._standardized_cgf(model, eta, weight)
        residual = L @ (cgf.grad - z)
        res_sq = float(residual @ residual)

        for iteration in range(max_iter + 1):
            res_norm = math.sqrt(res_sq)
            if res_norm <= threshold:
                return eta, cgf, iteration, res_norm
            if iteration == max_iter:
                break

            try:
                factor, _ = cholesky_with_jitter(cgf.hess)
            except FactorizationError:
                raise SolverFailureError(
                    "Saddlepoint Hessian became singular", last_iterate=eta,
                    residual_norm=res_norm, iterations=iteration,
                )
            step = -linalg.cho_solve((factor, True), cgf.grad - z)

            t = 1.0
            while True:
                candidate = eta + t * step
                cand_cgf = EesService._standardized_cgf(model, candidate, weight)
                cand_residual = L @ (cand_cgf.grad - z)
                cand_sq = float(cand_residual @ cand_residual)
                if math.isfinite(cand_sq) and 0.5 * cand_sq <= 0.5 * res_sq - ARMIJO * t * res_sq:
                    break
                t *= 0.5
                if t < MIN_STEP:
                    raise SolverFailureError(
                        "Line search stalled before the saddlepoint equation was solved",
                        last_iterate=eta, residual_norm=res_norm, iterations=iteration,
                    )
            eta, cgf, res_sq = candidate, cand_cgf, cand_sq

        raise SolverFailureError(
            f"Saddlepoint solver hit the iteration cap of {max_iter}",
            last_iterate=eta, residual_norm=math.sqrt(res_sq), iterations=max_iter,
        )

    @staticmethod
    def _solve(model: EesModel, s, tol: float, max_iter: int):
        s = as_vector(s, model.d, "s")
        z = linalg.solve_triangular(model.sigma_factor, s - model.mu_hat, lower=True)
        weight = weight_from_radius(float(z @ z), model.gamma)
        threshold = tol * (1.0 + float(np.linalg.norm(s)))
        try:
            eta, cgf, iterations, res_norm = EesService._solve_standardized(
                model, z, weight, threshold, max_iter
            )
        except SolverFailureError as e:
            if e.last_iterate is not None:
                e.last_iterate = linalg.solve_triangular(model.sigma_factor.T, e.last_iterate, lower=False)
            raise
        return z, weight, eta, cgf, iterations, res_norm

    @staticmethod
    def solve_saddlepoint(model: EesModel, s, tol: float = NEWTON_TOL,
                          max_iter: int = NEWTON_MAX_ITER) -> SaddleSolution:
        _, weight, eta, _, iterations, res_norm = EesService._solve(model, s, tol, max_iter)
        return SaddleSolution(
            lambda_hat=linalg.solve_triangular(model.sigma_factor.T, eta, lower=False),
            residual_norm=res_norm,
            iterations=iterations,
            mixture_weight=weight,
        )

    @staticmethod
    def log_density_detail(model: EesModel, s, tol: float = NEWTON_TOL,
                           max_iter: int = NEWTON_MAX_ITER) -> Tuple[float, SaddleSolution]:
        """EES log density at s together with the saddlepoint that produced it"""
        z, weight, eta, cgf, iterations, res_norm = EesService._solve(model, s, tol, max_iter)
        d = model.d
        if weight == 0.0:
            half_log_det = 0.0
        else:
            factor, _ = cholesky_with_jitter(cgf.hess)
            half_log_det = float(np.sum(np.log(np.diag(factor))))

        log_p = -0.5 * d * LOG_2PI - half_log_det + cgf.value - float(eta @ z) - model.log_det_factor
        if model.log_z is not None:
            log_p -= model.log_z

        solution = SaddleSolution(
            lambda_hat=linalg.solve_triangular(model.sigma_factor.T, eta, lower=False),
            residual_norm=res_norm,
            iterations=iterations,
            mixture_weight=weight,
        )
        return float(log_p), solution

    @staticmethod
    def ees_log_density(model: EesModel, s) -> float:
        log_p, _ = EesService.log_density_detail(model, s)
        return log_p

    @staticmethod
    def gaussian_log_density(model: EesModel, s) -> float:
        """log N(s; mu_hat, sigma_hat), the gamma -> inf limit of the estimator"""
        z = EesService.standardize(model, s)
        return float(-0.5 * model.d * LOG_2PI - 0.5 * z @ z - model.log_det_factor)

    @staticmethod
    def batch_log_density(model: EesModel, points, gaussian_fallback: bool = False,
                          workers: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Log densities at each row of `points` and a mask of solver failures.

        Without `gaussian_fallback` the first failure is raised.
        """
        P = as_stat_matrix(points)
        if P.shape[1] != model.d:
            raise InvalidInputError(f"Points have dimension {P.shape[1]}, model has {model.d}")

        def evaluate(row: np.ndarray) -> Tuple[float, bool]:
            try:
                return EesService.ees_log_density(model, row), False
            except SolverFailureError:
                if not gaussian_fallback:
                    raise
                return EesService.gaussian_log_density(model, row), True

        results = parallel_map(evaluate, list(P), workers)
        values = np.array([r[0] for r in results], dtype=float)
        failed = np.array([r[1] for r in results], dtype=bool)
        if failed.any():
            logger.warning(f"Saddlepoint solver failed at {int(failed.sum())} of {len(P)} points; used Gaussian branch")
        return values, failed

    @staticmethod
    def normalize(model: EesModel, l: int, rng_seed: Optional[int] = None,
                  workers: Optional[int] = None) -> EesModel:
        """Importance-sampling estimate of the normalizing constant, q = N(mu_hat, sigma_hat)"""
        if l < 1:
            raise ValidationError(f"Need at least one importance sample, got l={l}")
        seed = model.seed if rng_seed is None else int(rng_seed)
        rng = np.random.default_rng(seed)

        unnormalized = model.model_copy(update={"log_z": None, "z_std_error": None})
        draws = rng.standard_normal((l, model.d))
        proposals = model.mu_hat + draws @ model.sigma_factor.T
        log_q = -0.5 * model.d * LOG_2PI - 0.5 * np.sum(draws ** 2, axis=1) - model.log_det_factor

        try:
            log_p, _ = EesService.batch_log_density(unnormalized, proposals, workers=workers)
        except SolverFailureError as e:
            raise NormalizationError(f"Saddlepoint solver failed at an importance sample: {e.message}")

        log_w = log_p - log_q
        if not np.all(np.isfinite(log_w)):
            raise NormalizationError("Non-finite importance weight")

        log_z = float(logsumexp(log_w) - math.log(l))
        std_error = None
        if l > 1:
            scaled = np.exp(log_w - log_z)
            std_error = float(math.exp(log_z) * np.std(scaled, ddof=1) / math.sqrt(l))
        logger.info(f"Normalized EES model: z_hat={math.exp(log_z):.6g} (se {std_error}), l={l}")
        return model.model_copy(update={"log_z": log_z, "z_std_error": std_error})
