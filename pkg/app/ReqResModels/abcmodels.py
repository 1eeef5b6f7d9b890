from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import List, Optional
import math

import numpy as np

# stored/total and dropped/stored proportions of the long boom-bust chain
STORED_PER_STEP = 22.0 / 12000.0
BURN_IN_FRACTION = 4.0 / 22.0


class AbcAnalytic(BaseModel):
    """Analytic ABC for the shifted exponential with s0 = 0 and a U(psi, 0) prior per coordinate"""
    epsilon: float = Field(..., gt=0, description="Tolerance")
    beta: float = Field(..., gt=0, description="Exponential rate")
    psi: Optional[float] = Field(None, description="Prior lower bound, below -epsilon")
    d: int = Field(default=1, ge=1, description="Dimension")

    @model_validator(mode="after")
    def validate_prior(self):
        if self.psi is not None and not self.psi < -self.epsilon:
            raise ValueError(f"psi={self.psi} must lie below -epsilon={-self.epsilon}")
        return self


class AbcMcmcConfig(BaseModel):
    lower: List[float] = Field(..., min_length=1, description="Uniform prior lower bounds")
    upper: List[float] = Field(..., min_length=1, description="Uniform prior upper bounds")
    epsilon: Optional[float] = Field(None, gt=0, description="Tolerance; calibrated from the prior when absent")
    target_acceptance: float = Field(default=1e-3, gt=0, lt=1, description="Prior acceptance rate used to calibrate epsilon")
    calibration_sims: int = Field(default=100_000, ge=1, description="Prior-predictive simulations of the pre-pass")
    chain_length: int = Field(default=1_200_000, ge=1, description="Metropolis steps")
    thin: Optional[int] = Field(None, ge=1, description="Keep every thin-th step")
    burn_in: Optional[int] = Field(None, ge=0, description="Leading steps discarded")
    proposal_fraction: float = Field(default=0.05, gt=0, description="Random-walk scale as a fraction of prior width")
    init: Optional[List[float]] = Field(None, description="Chain start; defaults to the closest pre-pass draw")
    seed: int = Field(default=0, ge=0, description="Root seed")
    workers: Optional[int] = Field(None, ge=1, description="Parallel calibration chunks")

    @model_validator(mode="after")
    def validate_chain(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper must have equal lengths")
        for lo, hi in zip(self.lower, self.upper):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError("prior boxes must be finite with lower < upper")
        if self.init is not None:
            if len(self.init) != len(self.lower):
                raise ValueError("init must match the prior dimension")
            if any(not lo <= v <= hi for v, lo, hi in zip(self.init, self.lower, self.upper)):
                raise ValueError("init must lie inside the prior box")
        if self.chain_length <= self.burn_in_steps:
            raise ValueError(f"chain_length={self.chain_length} must exceed burn_in={self.burn_in_steps}")
        return self

    @property
    def thin_steps(self) -> int:
        return self.thin if self.thin is not None else max(1, round(1.0 / STORED_PER_STEP))

    @property
    def burn_in_steps(self) -> int:
        return self.burn_in if self.burn_in is not None else int(round(self.chain_length * BURN_IN_FRACTION))

    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    def upper_array(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)


class AbcMcmcResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    names: List[str] = Field(..., description="Parameter names")
    samples: np.ndarray = Field(..., description="Thinned post-burn-in chain, n x p")
    epsilon: float = Field(..., description="Tolerance used by the chain")
    acceptance_rate: float = Field(..., ge=0, le=1, description="Accepted proposals per chain step")
    calibration_acceptance: float = Field(..., ge=0, le=1, description="Fraction of pre-pass draws within epsilon")
    stat_scales: np.ndarray = Field(..., description="Prior-predictive standard deviations of the statistics")
    n_chain_simulations: int = Field(..., ge=0)
    n_calibration_simulations: int = Field(..., ge=0)
    seed: int = Field(..., description="Root seed")

    def to_dict(self) -> dict:
        return {
            "names": self.names,
            "n_samples": int(self.samples.shape[0]),
            "epsilon": self.epsilon,
            "acceptance_rate": self.acceptance_rate,
            "calibration_acceptance": self.calibration_acceptance,
            "stat_scales": self.stat_scales.tolist(),
            "n_chain_simulations": self.n_chain_simulations,
            "n_calibration_simulations": self.n_calibration_simulations,
            "seed": self.seed,
        }
