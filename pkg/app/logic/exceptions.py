from typing import Any, Optional

import numpy as np


class BaseCustomError(Exception):
    """Base exception class for custom errors"""
    def __init__(self, message: str, error_code: Optional[str] = None):
        self.message = message
        self.error_code = error_code
        super().__init__(self.message)


class ValidationError(BaseCustomError):
    """Raised when validation fails"""
    def __init__(self, message: str):
        super().__init__(message, "VALIDATION_ERROR")


class InvalidInputError(BaseCustomError):
    """Raised when a query point or tuning value is not usable"""
    def __init__(self, message: str):
        super().__init__(message, "INVALID_INPUT")


class StorageError(BaseCustomError):
    """Raised when a matrix file or manifest cannot be read or written"""
    def __init__(self, message: str):
        super().__init__(message, "STORAGE_ERROR")


class NumericalError(BaseCustomError):
    """Base class for failures of the numerical pipeline"""


class InsufficientSamplesError(NumericalError):
    """Raised when fewer than d+1 statistic vectors are available"""
    def __init__(self, message: str):
        super().__init__(message, "INSUFFICIENT_SAMPLES")


class RankError(NumericalError):
    """Raised when the centered statistics do not span all d directions"""
    def __init__(self, message: str):
        super().__init__(message, "RANK_ERROR")


class FactorizationError(NumericalError):
    """Raised when a matrix is not positive definite, even after jitter"""
    def __init__(self, message: str):
        super().__init__(message, "FACTORIZATION_ERROR")


class SolverFailureError(NumericalError):
    """Raised when the saddlepoint equation could not be solved"""
    def __init__(self, message: str, last_iterate: Optional[np.ndarray] = None,
                 residual_norm: float = float("nan"), iterations: int = 0):
        super().__init__(message, "SOLVER_FAILURE")
        self.last_iterate = last_iterate
        self.residual_norm = residual_norm
        self.iterations = iterations


class NormalizationError(NumericalError):
    """Raised when an importance weight is not finite"""
    def __init__(self, message: str):
        super().__init__(message, "NORMALIZATION_ERROR")


class TuningError(NumericalError):
    """Raised when cross-validation cannot score a fold"""
    def __init__(self, message: str):
        super().__init__(message, "TUNING_ERROR")


class EstimateError(NumericalError):
    """Raised when a synthetic likelihood estimate cannot be formed"""
    def __init__(self, message: str):
        super().__init__(message, "ESTIMATE_ERROR")


class OptimizationError(NumericalError):
    """Raised when every particle of an iteration is rejected"""
    def __init__(self, message: str, trace: Any = None):
        super().__init__(message, "OPTIMIZATION_ERROR")
        self.trace = trace


class CalibrationError(NumericalError):
    """Raised when the ABC tolerance pre-pass accepts nothing"""
    def __init__(self, message: str):
        super().__init__(message, "CALIBRATION_ERROR")


class InfeasibleError(NumericalError):
    """Raised when a calibration equation has no root on its bracket"""
    def __init__(self, message: str):
        super().__init__(message, "INFEASIBLE")


class ExperimentError(NumericalError):
    """Raised when too many replicates of an experiment fail"""
    def __init__(self, message: str):
        super().__init__(message, "EXPERIMENT_ERROR")
