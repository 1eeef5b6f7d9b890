from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Optional
import math

import numpy as np


class CgfEval(BaseModel):
    """Value, gradient and Hessian of a cumulant generating function at one point"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    value: float = Field(..., description="K(lambda)")
    grad: np.ndarray = Field(..., description="K'(lambda), length d")
    hess: np.ndarray = Field(..., description="K''(lambda), d x d and symmetric")


class SaddleSolution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    lambda_hat: np.ndarray = Field(..., description="Saddlepoint in the units of the statistics")
    residual_norm: float = Field(..., ge=0, description="||K'(lambda_hat) - s||_2")
    iterations: int = Field(..., ge=0, description="Newton iterations used")
    mixture_weight: float = Field(..., ge=0, le=1, description="g(s, gamma) at the query point")

    def to_dict(self) -> dict:
        return {
            "lambda_hat": self.lambda_hat.tolist(),
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "mixture_weight": self.mixture_weight,
        }


class EesModel(BaseModel):
    """Fitted extended empirical saddlepoint estimator.

    `samples` holds the standardized statistics z_i = L^{-1}(s_i - mu_hat),
    where L = `sigma_factor` is the lower Cholesky factor of `sigma_hat`.
    The model is immutable; `normalize` returns a copy with `log_z` set.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    samples: np.ndarray = Field(..., description="m x d standardized statistics")
    mu_hat: np.ndarray = Field(..., description="Sample mean, original units")
    sigma_hat: np.ndarray = Field(..., description="Unbiased sample covariance, original units")
    sigma_factor: np.ndarray = Field(..., description="Lower-triangular factor of sigma_hat")
    gamma: float = Field(..., ge=0, description="Mixture tuning parameter; inf is the Gaussian limit")
    log_z: Optional[float] = Field(None, description="Log normalizing constant, when normalized")
    z_std_error: Optional[float] = Field(None, ge=0, description="Monte Carlo standard error of z")
    seed: int = Field(default=0, ge=0, description="RNG seed recorded at fit time")

    @field_validator("log_z")
    def validate_log_z(cls, v):
        if v is not None and not math.isfinite(v):
            raise ValueError("log_z must be finite")
        return v

    @model_validator(mode="after")
    def validate_shapes(self):
        m, d = self.samples.shape
        if self.mu_hat.shape != (d,) or self.sigma_hat.shape != (d, d) or self.sigma_factor.shape != (d, d):
            raise ValueError("mu_hat, sigma_hat and sigma_factor must match the sample dimension")
        return self

    @property
    def m(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    @property
    def log_det_factor(self) -> float:
        """log det L, i.e. half the log determinant of sigma_hat"""
        return float(np.sum(np.log(np.diag(self.sigma_factor))))

    @property
    def is_normalized(self) -> bool:
        return self.log_z is not None

    def raw_samples(self) -> np.ndarray:
        return self.mu_hat + self.samples @ self.sigma_factor.T
