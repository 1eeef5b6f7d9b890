from pydantic import BaseModel, Field
from typing import Optional
from enum import Enum

from app.ReqResModels.eesmodels import SaddleSolution
from app.ReqResModels.parammodels import ParamVector


class EstimatorKind(str, Enum):
    GAUSSIAN = "gauss"
    EES = "ees"


class SlDiagnostics(BaseModel):
    saddle: Optional[SaddleSolution] = Field(None, description="Saddlepoint at s0 (EES only)")
    mixture_weight: Optional[float] = Field(None, ge=0, le=1, description="g(s0, gamma) (EES only)")
    invalid_count: int = Field(default=0, ge=0, description="Simulations dropped for non-finite statistics")
    jitter: float = Field(default=0.0, ge=0, description="Diagonal jitter added to the Gaussian covariance")
    log_z: Optional[float] = Field(None, description="Log normalizing constant when the EES density was normalized")

    def to_dict(self) -> dict:
        return {
            "saddle": None if self.saddle is None else self.saddle.to_dict(),
            "mixture_weight": self.mixture_weight,
            "invalid_count": self.invalid_count,
            "jitter": self.jitter,
            "log_z": self.log_z,
        }


class SlEstimate(BaseModel):
    log_sl: float = Field(..., description="Log synthetic likelihood at s0")
    theta: ParamVector = Field(..., description="Parameter point")
    m: int = Field(..., ge=1, description="Valid simulations used")
    estimator_kind: EstimatorKind = Field(..., description="Density estimator")
    diagnostics: SlDiagnostics = Field(default_factory=SlDiagnostics)

    def to_dict(self) -> dict:
        return {
            "log_sl": self.log_sl,
            "theta": self.theta.to_dict(),
            "m": self.m,
            "estimator_kind": self.estimator_kind.value,
            "diagnostics": self.diagnostics.to_dict(),
        }
