from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import List, Optional

import numpy as np

from app.ReqResModels.parammodels import ParamVector

# transformed-space width assumed for coordinates whose transformed box is unbounded
FALLBACK_WIDTH = 4.0
PROPOSAL_WIDTH_FRACTION = 0.1


class IfConfig(BaseModel):
    n_particles: int = Field(default=24, ge=2, description="Particles per iteration")
    iterations: int = Field(default=100, ge=1, description="Number of filtering iterations")
    sigma0_sq: float = Field(default=0.95, gt=0, lt=1, description="Cooling base; step k uses sigma0_sq ** k")
    proposal_cov: Optional[List[List[float]]] = Field(None, description="Proposal covariance in transformed space")
    theta0: ParamVector = Field(..., description="Initial estimate with its box and transforms")
    seed: int = Field(default=0, ge=0, description="Root seed")
    workers: Optional[int] = Field(None, ge=1, description="Parallel particle evaluations")

    @field_validator("proposal_cov")
    def validate_proposal_cov(cls, v):
        if v is None:
            return v
        cov = np.asarray(v, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("proposal_cov must be a square matrix")
        if not np.all(np.isfinite(cov)) or not np.allclose(cov, cov.T):
            raise ValueError("proposal_cov must be finite and symmetric")
        if np.linalg.eigvalsh(cov).min() <= 0:
            raise ValueError("proposal_cov must be positive definite")
        return v

    @model_validator(mode="after")
    def validate_dimension(self):
        if self.proposal_cov is not None and len(self.proposal_cov) != self.theta0.size:
            raise ValueError(f"proposal_cov must be {self.theta0.size} x {self.theta0.size}")
        return self

    def cooling(self, k: int) -> float:
        return self.sigma0_sq ** k

    def proposal_matrix(self) -> np.ndarray:
        """Proposal covariance, defaulting to a diagonal of (0.1 x transformed box width)^2"""
        if self.proposal_cov is not None:
            return np.asarray(self.proposal_cov, dtype=float)
        widths = self.theta0.unconstrained_widths()
        widths = np.where(np.isfinite(widths), widths, FALLBACK_WIDTH)
        return np.diag((PROPOSAL_WIDTH_FRACTION * widths) ** 2)


class IfTrace(BaseModel):
    """Per-iteration record of an iterated-filtering run"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    names: List[str] = Field(..., description="Parameter names")
    theta0: np.ndarray = Field(..., description="Initial estimate")
    thetas: np.ndarray = Field(..., description="iterations x p estimates after each update")
    particles: np.ndarray = Field(..., description="iterations x N x p particles in natural units")
    log_sl: np.ndarray = Field(..., description="iterations x N particle log synthetic likelihoods")
    ess: np.ndarray = Field(..., description="Effective sample size of the weights per iteration")
    sigma_sq: np.ndarray = Field(..., description="Cooling factor per iteration")
    seed: int = Field(..., description="Root seed")

    @property
    def iterations(self) -> int:
        return self.thetas.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.thetas[-1]

    def tail_average(self, n: int = 10) -> np.ndarray:
        n = max(1, min(n, self.iterations))
        return self.thetas[-n:].mean(axis=0)

    def to_rows(self) -> List[dict]:
        rows = []
        for k in range(self.iterations):
            finite = self.log_sl[k][np.isfinite(self.log_sl[k])]
            row = {"iteration": k + 1, "sigma_sq": float(self.sigma_sq[k]), "ess": float(self.ess[k])}
            row.update({name: float(v) for name, v in zip(self.names, self.thetas[k])})
            row["max_log_sl"] = float(finite.max()) if finite.size else float("-inf")
            row["n_failed"] = int(self.log_sl.shape[1] - finite.size)
            rows.append(row)
        return rows
