from pydantic import BaseModel, Field, field_validator, model_validator
from typing import Dict, List, Optional, Union
from enum import Enum

from app.ReqResModels.tuningmodels import DEFAULT_GAMMA_GRID

DEFAULT_KDE_SCALES = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0]
BOOM_BUST_TRUTH = [0.4, 50.0, 0.09, 0.05]
BOOM_BUST_INIT = [0.3, 30.0, 0.15, 0.03]


class ExperimentName(str, Enum):
    BOOM_BUST = "boom-bust"
    SHIFTED_EXP = "shifted-exp"
    COPULA = "copula"
    CV_DEMO = "cv-demo"


# estimators each experiment can run; abc only runs when requested
EXPERIMENT_ESTIMATORS: Dict[ExperimentName, List[str]] = {
    ExperimentName.BOOM_BUST: ["gauss", "ees", "abc"],
    ExperimentName.SHIFTED_EXP: ["gauss", "ees"],
    ExperimentName.COPULA: ["gauss", "ees", "kde"],
    ExperimentName.CV_DEMO: ["ees"],
}

DEFAULT_M = {
    ExperimentName.BOOM_BUST: 5000,
    ExperimentName.SHIFTED_EXP: 10000,
    ExperimentName.COPULA: 1000,
    ExperimentName.CV_DEMO: 10000,
}


class ExperimentConfig(BaseModel):
    experiment: ExperimentName = Field(..., description="Which study to run")
    replicates: int = Field(default=20, ge=1, description="Independent pseudo-observed datasets")
    m: Optional[int] = Field(None, ge=3, description="Simulations per likelihood estimate or training set size")
    l: int = Field(default=1000, ge=1, description="Importance samples used by cross-validation and density normalization")
    sl_l: int = Field(default=0, ge=0, description="Importance samples inside each synthetic likelihood (0 = unnormalized)")
    gamma: Union[float, str] = Field(default="cv", description="Fixed gamma, or 'cv' to select it by cross-validation")
    gamma_grid: List[float] = Field(default=list(DEFAULT_GAMMA_GRID), description="Cross-validation grid")
    k: int = Field(default=10, ge=2, description="Cross-validation folds")
    estimators: Optional[List[str]] = Field(None, description="Estimators to run; defaults per experiment")
    seed: int = Field(default=0, ge=0, description="Root seed")
    output_dir: str = Field(default="./results", description="Directory receiving the report files")
    workers: Optional[int] = Field(None, ge=1, description="Replicates run in parallel")

    # models
    d: int = Field(default=10, ge=1, description="Shifted exponential dimension")
    dims: List[int] = Field(default=[2, 3, 4, 5], description="Dimensions of the copula density study")
    beta: float = Field(default=0.5, gt=0, description="Shifted exponential rate")
    correlated: bool = Field(default=False, description="Gaussian-copula dependence in the shifted-exp study")
    cv_data: str = Field(default="shifted-exp", description="Data of the cv-demo study: shifted-exp or gaussian")
    T: int = Field(default=300, gt=0)
    N0: int = Field(default=10, ge=0)
    burn_in: int = Field(default=50, ge=0)
    true_theta: Optional[List[float]] = Field(None, description="Data-generating parameters")
    init: Optional[List[float]] = Field(None, description="Optimizer start")

    # optimizer
    iterations: int = Field(default=100, ge=1)
    particles: int = Field(default=24, ge=2)
    tail_average: int = Field(default=10, ge=1, description="Trailing iterations averaged into the point estimate")

    # density study
    test_size: int = Field(default=5000, ge=1)
    kde_scales: List[float] = Field(default=list(DEFAULT_KDE_SCALES))

    # ABC
    abc_calibration_sims: int = Field(default=100_000, ge=1)
    abc_chain_length: int = Field(default=1_200_000, ge=1)
    abc_target_acceptance: float = Field(default=1e-3, gt=0, lt=1)
    mean_shift_starts: int = Field(default=500, ge=1)

    @field_validator("gamma")
    def validate_gamma(cls, v):
        if isinstance(v, str):
            if v.lower() == "cv":
                return "cv"
            try:
                v = float(v)
            except ValueError:
                raise ValueError("gamma must be a nonnegative number or 'cv'")
        if v < 0:
            raise ValueError("gamma must be nonnegative")
        return float(v)

    @field_validator("cv_data")
    def validate_cv_data(cls, v):
        if v not in ("shifted-exp", "gaussian"):
            raise ValueError("cv_data must be shifted-exp or gaussian")
        return v

    @model_validator(mode="after")
    def validate_experiment(self):
        supported = EXPERIMENT_ESTIMATORS[self.experiment]
        if self.estimators is None:
            self.estimators = [e for e in supported if e != "abc"]
        unknown = [e for e in self.estimators if e not in supported]
        if unknown:
            raise ValueError(f"{self.experiment.value} does not implement estimators {unknown}")
        if not self.estimators:
            raise ValueError("at least one estimator is required")
        if self.m is None:
            self.m = DEFAULT_M[self.experiment]
        if self.T <= self.burn_in:
            raise ValueError(f"T={self.T} must exceed burn_in={self.burn_in}")
        if any(d < 2 for d in self.dims):
            raise ValueError("copula dimensions must be at least 2")
        return self

    @property
    def uses_cv(self) -> bool:
        return self.gamma == "cv"


class ExperimentReport(BaseModel):
    experiment: ExperimentName
    seed: int
    directory: str = Field(..., description="Directory holding every report file")
    results_path: str
    summary_path: str
    manifest_path: str
    n_replicates: int
    n_failed: int = Field(default=0, ge=0)
    gamma: Optional[float] = Field(None, description="Gamma used by the EES estimators")
    summary: List[dict] = Field(default_factory=list)
