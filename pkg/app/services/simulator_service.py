from abc import ABC, abstractmethod
from typing import List, Optional, Sequence
import logging
import math

import numpy as np
from scipy import linalg
from scipy.special import log_ndtr, ndtri

from app.ReqResModels.parammodels import ParamVector, Transform
from app.ReqResModels.simulatormodels import BoomBustParams, ShiftedExpParams
from app.logic.exceptions import ValidationError
from app.services.seeding import derive_seed, parallel_map

logger = logging.getLogger(__name__)

# a drop of at least this size between consecutive steps marks a peak
PEAK_DROP = 30

# simulations per task in simulate_many
CHUNK = 500


class SimulatorService:
    """The population model, the shifted exponential and its Gaussian-copula variant"""

    @staticmethod
    def boom_bust_batch(r, kappa, alpha, beta, T: int, N0: int, rng: np.random.Generator) -> np.ndarray:
        """Trajectories N_1..N_T for each row of the (broadcast) parameter arrays"""
        r, kappa, alpha, beta = np.broadcast_arrays(
            np.atleast_1d(np.asarray(r, dtype=float)),
            np.atleast_1d(np.asarray(kappa, dtype=float)),
            np.atleast_1d(np.asarray(alpha, dtype=float)),
            np.atleast_1d(np.asarray(beta, dtype=float)),
        )
        n = r.shape[0]
        N = np.full(n, int(N0), dtype=np.int64)
        out = np.empty((n, T), dtype=np.int64)
        for t in range(T):
            below = N <= kappa
            grown = rng.poisson(np.where(below, N * (1.0 + r), 0.0))
            survived = rng.binomial(np.where(below, 0, N), alpha)
            N = np.where(below, grown, survived) + rng.poisson(beta)
            out[:, t] = N
        return out

    @staticmethod
    def simulate_boom_bust(params: BoomBustParams, rng_seed: int) -> np.ndarray:
        rng = np.random.default_rng(rng_seed)
        return SimulatorService.boom_bust_batch(
            params.r, params.kappa, params.alpha, params.beta, params.T, params.N0, rng
        )[0]

    @staticmethod
    def boom_bust_stats_batch(trajectories: np.ndarray, burn_in: int) -> np.ndarray:
        """Five statistics per trajectory row, computed on the post-burn-in window"""
        X = np.atleast_2d(np.asarray(trajectories, dtype=float))
        if X.shape[1] <= burn_in:
            raise ValidationError(f"Trajectory length {X.shape[1]} must exceed burn_in={burn_in}")
        window = X[:, burn_in:]
        width = window.shape[1]
        peaks = np.diff(window, axis=1) <= -PEAK_DROP

        gap_stat = np.full(window.shape[0], math.sqrt(width))
        for i in np.flatnonzero(peaks.sum(axis=1) >= 2):
            times = np.flatnonzero(peaks[i])
            gap_stat[i] = math.sqrt(np.diff(times).min())

        return np.column_stack([
            window.mean(axis=1),
            window.min(axis=1),
            (window <= 1).sum(axis=1),
            peaks.sum(axis=1),
            gap_stat,
        ])

    @staticmethod
    def boom_bust_stats(trajectory, burn_in: int) -> np.ndarray:
        return SimulatorService.boom_bust_stats_batch(np.asarray(trajectory)[None, :], burn_in)[0]

    @staticmethod
    def shifted_exp_batch(thetas: np.ndarray, beta: float, correlation: Optional[np.ndarray],
                          rng: np.random.Generator) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        n, d = thetas.shape
        if correlation is None:
            return thetas + rng.exponential(1.0 / beta, size=(n, d))
        factor = linalg.cholesky(correlation, lower=True)
        z = rng.standard_normal((n, d)) @ factor.T
        # Exp(beta) quantile of Phi(z): -log(1 - Phi(z)) / beta = -log Phi(-z) / beta
        return thetas - log_ndtr(-z) / beta

    @staticmethod
    def simulate_shifted_exp(params: ShiftedExpParams, rng_seed: int) -> np.ndarray:
        rng = np.random.default_rng(rng_seed)
        return SimulatorService.shifted_exp_batch(
            np.asarray(params.theta)[None, :], params.beta, params.correlation_array(), rng
        )[0]

    @staticmethod
    def gaussian_copula_log_density(u, correlation: np.ndarray) -> np.ndarray:
        """log c(u | R) = -1/2 log det R + 1/2 q'(I - R^{-1})q with q = Phi^{-1}(u)"""
        q = ndtri(np.atleast_2d(np.asarray(u, dtype=float)))
        return SimulatorService._copula_log_density_q(q, np.asarray(correlation, dtype=float))

    @staticmethod
    def _copula_log_density_q(q: np.ndarray, R: np.ndarray) -> np.ndarray:
        factor = linalg.cholesky(R, lower=True)
        half_log_det = float(np.sum(np.log(np.diag(factor))))
        w = linalg.solve_triangular(factor, q.T, lower=True).T
        return -half_log_det + 0.5 * (np.sum(q ** 2, axis=1) - np.sum(w ** 2, axis=1))

    @staticmethod
    def shifted_exp_log_density(points, params: ShiftedExpParams) -> np.ndarray:
        """Exact log density of the (possibly copula-correlated) shifted exponential"""
        S = np.atleast_2d(np.asarray(points, dtype=float))
        x = S - np.asarray(params.theta)[None, :]
        out = np.full(S.shape[0], -np.inf)
        inside = np.all(x >= 0, axis=1)
        xi = x[inside]
        log_marginal = np.sum(math.log(params.beta) - params.beta * xi, axis=1)
        R = params.correlation_array()
        if R is not None:
            # q = Phi^{-1}(1 - e^{-beta x}) = -Phi^{-1}(e^{-beta x})
            q = -ndtri(np.exp(-params.beta * xi))
            log_marginal = log_marginal + SimulatorService._copula_log_density_q(q, R)
        out[inside] = log_marginal
        return out

    @staticmethod
    def random_correlation(d: int, rng_seed: int, eta: float = 1.0) -> np.ndarray:
        """Dense random correlation matrix built from random partial correlations on a C-vine"""
        if d < 2:
            raise ValidationError(f"random_correlation needs d >= 2, got {d}")
        rng = np.random.default_rng(rng_seed)
        partial = np.zeros((d, d))
        R = np.eye(d)
        b = eta + (d - 1) / 2.0
        for k in range(d - 1):
            b -= 0.5
            for i in range(k + 1, d):
                partial[k, i] = 2.0 * rng.beta(b, b) - 1.0
                p = partial[k, i]
                # convert the partial correlation to a raw correlation through the vine
                for j in range(k - 1, -1, -1):
                    p = p * math.sqrt((1 - partial[j, i] ** 2) * (1 - partial[j, k] ** 2)) + partial[j, i] * partial[j, k]
                R[k, i] = R[i, k] = p
        return R


class Simulator(ABC):
    """Maps a parameter point and a seed to a vector of summary statistics"""

    name: str = "simulator"

    @property
    @abstractmethod
    def n_stats(self) -> int:
        ...

    @property
    @abstractmethod
    def param_names(self) -> List[str]:
        ...

    @abstractmethod
    def simulate_batch(self, thetas: np.ndarray, rng_seed: int) -> np.ndarray:
        """Statistics for each row of `thetas` (n x p), deterministic given the seed"""

    def bounds(self):
        p = len(self.param_names)
        return [-math.inf] * p, [math.inf] * p

    def transforms(self) -> List[Transform]:
        return [Transform.IDENTITY] * len(self.param_names)

    def param_vector(self, values) -> ParamVector:
        lower, upper = self.bounds()
        return ParamVector(
            names=self.param_names,
            values=[float(v) for v in np.asarray(values, dtype=float).reshape(-1)],
            lower=lower,
            upper=upper,
            transforms=self.transforms(),
        )

    def simulate(self, theta, rng_seed: int) -> np.ndarray:
        theta = np.asarray(getattr(theta, "values", theta), dtype=float)
        return self.simulate_batch(theta[None, :], rng_seed)[0]

    def simulate_many(self, theta, m: int, rng_seed: int, workers: Optional[int] = None) -> np.ndarray:
        """m statistic vectors at one parameter point, simulated in seeded chunks"""
        theta = np.asarray(getattr(theta, "values", theta), dtype=float)
        starts = list(range(0, m, CHUNK))

        def run(c: int) -> np.ndarray:
            size = min(CHUNK, m - starts[c])
            return self.simulate_batch(np.tile(theta, (size, 1)), derive_seed(rng_seed, c))

        return np.vstack(parallel_map(run, list(range(len(starts))), workers))


class BoomBustSimulator(Simulator):
    name = "boom-bust"

    def __init__(self, T: int = 300, N0: int = 10, burn_in: int = 50,
                 lower: Sequence[float] = (0.0, 10.0, 0.0, 0.0),
                 upper: Sequence[float] = (1.0, 80.0, 1.0, 1.0)):
        if T <= burn_in:
            raise ValidationError(f"T={T} must exceed burn_in={burn_in}")
        self.T = T
        self.N0 = N0
        self.burn_in = burn_in
        self._lower = list(lower)
        self._upper = list(upper)

    @property
    def n_stats(self) -> int:
        return 5

    @property
    def param_names(self) -> List[str]:
        return ["r", "kappa", "alpha", "beta"]

    def bounds(self):
        return self._lower, self._upper

    def transforms(self) -> List[Transform]:
        # every coordinate has a finite box, so each maps through the scaled logit
        return [Transform.LOGIT] * 4

    def trajectories(self, thetas: np.ndarray, rng_seed: int) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        rng = np.random.default_rng(rng_seed)
        return SimulatorService.boom_bust_batch(
            thetas[:, 0], thetas[:, 1], thetas[:, 2], thetas[:, 3], self.T, self.N0, rng
        )

    def simulate_batch(self, thetas: np.ndarray, rng_seed: int) -> np.ndarray:
        return SimulatorService.boom_bust_stats_batch(self.trajectories(thetas, rng_seed), self.burn_in)


class ShiftedExpSimulator(Simulator):
    """Shifted exponential statistics; the parameters are the d shifts"""
    name = "shifted-exp"

    def __init__(self, d: int, beta: float, correlation: Optional[np.ndarray] = None,
                 lower: Optional[Sequence[float]] = None, upper: Optional[Sequence[float]] = None):
        if d < 1 or beta <= 0:
            raise ValidationError("shifted exponential needs d >= 1 and beta > 0")
        if correlation is not None:
            ShiftedExpParams(theta=[0.0] * d, beta=beta, correlation=np.asarray(correlation).tolist())
            self.name = "copula-exp"
        self.d = d
        self.beta = beta
        self.correlation = None if correlation is None else np.asarray(correlation, dtype=float)
        self._lower = list(lower) if lower is not None else [-math.inf] * d
        self._upper = list(upper) if upper is not None else [math.inf] * d

    @property
    def n_stats(self) -> int:
        return self.d

    @property
    def param_names(self) -> List[str]:
        return [f"theta_{k + 1}" for k in range(self.d)]

    def bounds(self):
        return self._lower, self._upper

    def params(self, theta) -> ShiftedExpParams:
        return ShiftedExpParams(
            theta=[float(t) for t in np.asarray(theta).reshape(-1)],
            beta=self.beta,
            correlation=None if self.correlation is None else self.correlation.tolist(),
        )

    def simulate_batch(self, thetas: np.ndarray, rng_seed: int) -> np.ndarray:
        rng = np.random.default_rng(rng_seed)
        return SimulatorService.shifted_exp_batch(thetas, self.beta, self.correlation, rng)


SIMULATOR_NAMES = ("boom-bust", "shifted-exp", "copula-exp")


def get_simulator(name: str, d: int = 10, beta: float = 0.5, T: int = 300, N0: int = 10,
                  burn_in: int = 50, correlation_seed: int = 0) -> Simulator:
    """Simulator by registry name"""
    if name == "boom-bust":
        return BoomBustSimulator(T=T, N0=N0, burn_in=burn_in)
    if name == "shifted-exp":
        return ShiftedExpSimulator(d=d, beta=beta)
    if name == "copula-exp":
        return ShiftedExpSimulator(d=d, beta=beta, correlation=SimulatorService.random_correlation(d, correlation_seed))
    raise ValidationError(f"Unknown model {name!r}; choose one of {', '.join(SIMULATOR_NAMES)}")
