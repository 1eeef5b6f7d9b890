from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing import List, Optional

import numpy as np

DEFAULT_GAMMA_GRID = tuple(np.logspace(-4, 2, 13).tolist())


class CvRequest(BaseModel):
    gamma_grid: List[float] = Field(default=list(DEFAULT_GAMMA_GRID), description="Strictly increasing positive gamma values")
    k: int = Field(default=10, ge=2, description="Number of folds")
    l: int = Field(default=1000, ge=1, description="Importance samples per (gamma, fold) cell")
    seed: int = Field(default=0, ge=0, description="Root seed for folds and importance draws")

    @field_validator("gamma_grid")
    def validate_grid(cls, v):
        if len(v) == 0:
            raise ValueError("gamma_grid must not be empty")
        grid = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(grid)) or np.any(grid <= 0):
            raise ValueError("gamma_grid values must be finite and strictly positive")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("gamma_grid must be strictly increasing")
        return [float(x) for x in v]


class CvResult(BaseModel):
    """Cross-validation curve over a gamma grid"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    gamma_grid: np.ndarray = Field(..., description="Increasing positive gamma values, length r")
    fold_losses: np.ndarray = Field(..., description="k x r mean negative validation log-likelihoods")
    mean_loss: np.ndarray = Field(..., description="Fold-averaged loss, length r")
    selected_gamma: float = Field(..., description="Grid point minimizing mean_loss")
    seeds: List[int] = Field(..., description="Base seed of each fold's cells")
    failure_counts: Optional[np.ndarray] = Field(None, description="k x r count of validation points scored by the Gaussian branch")

    @property
    def k(self) -> int:
        return self.fold_losses.shape[0]


class KdeCvResult(BaseModel):
    """Cross-validation curve for the scale of a Gaussian kernel density estimator"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    scale_grid: np.ndarray = Field(..., description="Candidate kernel covariance scales")
    fold_losses: np.ndarray = Field(..., description="k x r mean negative validation log-likelihoods")
    mean_loss: np.ndarray = Field(..., description="Fold-averaged loss")
    selected_scale: float = Field(..., description="Scale minimizing mean_loss")
