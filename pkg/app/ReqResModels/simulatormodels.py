from pydantic import BaseModel, Field, field_validator, model_validator
from typing import List, Optional

import numpy as np


class BoomBustParams(BaseModel):
    r: float = Field(..., gt=0, description="Growth rate")
    kappa: float = Field(..., gt=0, description="Carrying capacity")
    alpha: float = Field(..., gt=0, lt=1, description="Survival probability after a crash")
    beta: float = Field(..., ge=0, description="Rate of the Poisson arrival process")
    T: int = Field(default=300, gt=0, description="Trajectory length")
    N0: int = Field(default=10, ge=0, description="Initial population")
    burn_in: int = Field(default=50, ge=0, description="Leading steps dropped before computing statistics")

    @model_validator(mode="after")
    def validate_horizon(self):
        if self.T <= self.burn_in:
            raise ValueError(f"T={self.T} must exceed burn_in={self.burn_in}")
        return self


class ShiftedExpParams(BaseModel):
    theta: List[float] = Field(..., min_length=1, description="Shift of each coordinate")
    beta: float = Field(..., gt=0, description="Exponential rate")
    correlation: Optional[List[List[float]]] = Field(None, description="Gaussian copula correlation matrix R")

    @field_validator("correlation")
    def validate_correlation(cls, v):
        if v is None:
            return v
        R = np.asarray(v, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ValueError("correlation must be a square matrix")
        if not np.allclose(R, R.T, atol=1e-10):
            raise ValueError("correlation must be symmetric")
        if not np.allclose(np.diag(R), 1.0, atol=1e-10):
            raise ValueError("correlation must have a unit diagonal")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("correlation must be positive definite")
        return v

    @model_validator(mode="after")
    def validate_dimension(self):
        if self.correlation is not None and len(self.correlation) != len(self.theta):
            raise ValueError("correlation dimension must match theta")
        return self

    @property
    def d(self) -> int:
        return len(self.theta)

    def correlation_array(self) -> Optional[np.ndarray]:
        return None if self.correlation is None else np.asarray(self.correlation, dtype=float)
