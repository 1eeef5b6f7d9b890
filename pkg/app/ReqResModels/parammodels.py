from pydantic import BaseModel, Field, model_validator
from typing import List, Optional
from enum import Enum
import math

import numpy as np
from scipy.special import expit, logit


class Transform(str, Enum):
    IDENTITY = "identity"
    LOG = "log"
    LOGIT = "logit"


class ParamVector(BaseModel):
    """A model parameter point with its box and the map to unconstrained space"""
    names: List[str] = Field(..., description="Parameter names")
    values: List[float] = Field(..., description="Parameter values in natural units")
    lower: Optional[List[float]] = Field(None, description="Lower box bounds (-inf when absent)")
    upper: Optional[List[float]] = Field(None, description="Upper box bounds (+inf when absent)")
    transforms: Optional[List[Transform]] = Field(None, description="Per-coordinate transform to unconstrained space")

    @model_validator(mode="after")
    def fill_and_validate(self):
        p = len(self.names)
        if len(self.values) != p:
            raise ValueError(f"Expected {p} values, got {len(self.values)}")
        if self.lower is None:
            self.lower = [-math.inf] * p
        if self.upper is None:
            self.upper = [math.inf] * p
        if self.transforms is None:
            self.transforms = [Transform.IDENTITY] * p
        if not (len(self.lower) == len(self.upper) == len(self.transforms) == p):
            raise ValueError("names, values, bounds and transforms must have equal lengths")

        for name, v, lo, hi, tr in zip(self.names, self.values, self.lower, self.upper, self.transforms):
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            if lo >= hi:
                raise ValueError(f"{name}: lower bound must be below upper bound")
            if not lo <= v <= hi:
                raise ValueError(f"{name}={v} lies outside [{lo}, {hi}]")
            if tr == Transform.LOG and (lo < 0 or v <= 0):
                raise ValueError(f"{name}: log transform needs a positive value and nonnegative lower bound")
            if tr == Transform.LOGIT:
                if not (math.isfinite(lo) and math.isfinite(hi)):
                    raise ValueError(f"{name}: logit transform needs a finite box")
                if not lo < v < hi:
                    raise ValueError(f"{name}: logit transform needs a value strictly inside the box")
        return self

    @classmethod
    def unnamed(cls, values) -> "ParamVector":
        values = [float(v) for v in np.asarray(values, dtype=float).reshape(-1)]
        return cls(names=[f"theta_{i + 1}" for i in range(len(values))], values=values)

    @property
    def size(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    def upper_array(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    def to_unconstrained(self, values=None) -> np.ndarray:
        x = self.as_array() if values is None else np.asarray(values, dtype=float)
        out = np.empty_like(x, dtype=float)
        for j, tr in enumerate(self.transforms):
            if tr == Transform.LOG:
                out[..., j] = np.log(x[..., j])
            elif tr == Transform.LOGIT:
                lo, hi = self.lower[j], self.upper[j]
                out[..., j] = logit((x[..., j] - lo) / (hi - lo))
            else:
                out[..., j] = x[..., j]
        return out

    def from_unconstrained(self, u) -> np.ndarray:
        """Natural-space values for unconstrained points, clipped into the box"""
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        for j, tr in enumerate(self.transforms):
            if tr == Transform.LOG:
                out[..., j] = np.exp(u[..., j])
            elif tr == Transform.LOGIT:
                lo, hi = self.lower[j], self.upper[j]
                out[..., j] = lo + (hi - lo) * expit(u[..., j])
            else:
                out[..., j] = u[..., j]
        return np.clip(out, self.lower_array(), self.upper_array())

    def unconstrained_widths(self) -> np.ndarray:
        """Box widths in unconstrained space; inf where the transformed box is unbounded"""
        lo = self.lower_array()
        hi = self.upper_array()
        widths = np.empty(self.size)
        for j, tr in enumerate(self.transforms):
            if tr == Transform.LOG:
                widths[j] = math.log(hi[j]) - math.log(lo[j]) if lo[j] > 0 and math.isfinite(hi[j]) else math.inf
            elif tr == Transform.LOGIT:
                widths[j] = math.inf
            else:
                widths[j] = hi[j] - lo[j]
        return widths

    def to_dict(self) -> dict:
        return dict(zip(self.names, self.values))
