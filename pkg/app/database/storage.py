from pathlib import Path
from typing import Any, Dict, List, Optional, Union
import json
import logging
import math
import platform

import numpy as np
import pandas as pd
import pydantic
import scipy
from pydantic import ValidationError as PydanticValidationError

from app.ReqResModels.eesmodels import EesModel
from app.ReqResModels.optimizermodels import IfTrace
from app.ReqResModels.tuningmodels import CvResult
from app.logic.exceptions import StorageError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MODEL_MANIFEST = "model.json"
MODEL_SAMPLES = "samples.csv"
FLOAT_FORMAT = "%.17g"


def _ensure_parent(path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StorageError(f"Cannot create directory {path.parent}: {e}")


def _json_safe(value: Any) -> Any:
    """Plain JSON types, with non-finite floats as their string names"""
    if isinstance(value, np.ndarray):
        value = value.tolist()
    elif isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def versions() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
    }


# statistic matrices: headerless CSV, one vector per row

def save_matrix(path: PathLike, matrix) -> Path:
    path = Path(path)
    _ensure_parent(path)
    M = np.asarray(matrix, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    try:
        np.savetxt(path, M, delimiter=",", fmt=FLOAT_FORMAT)
    except OSError as e:
        raise StorageError(f"Cannot write {path}: {e}")
    logger.debug(f"Wrote {M.shape[0]} x {M.shape[1]} matrix to {path}")
    return path


def load_matrix(path: PathLike) -> np.ndarray:
    path = Path(path)
    try:
        M = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as e:
        raise StorageError(f"Cannot read {path}: {e}")
    except ValueError as e:
        raise StorageError(f"Malformed matrix file {path}: {e}")
    if M.size == 0:
        raise StorageError(f"Matrix file {path} is empty")
    return M


def load_vector(path: PathLike) -> np.ndarray:
    """A single statistic vector stored as one CSV row or one column"""
    M = load_matrix(path)
    if M.shape[0] != 1 and M.shape[1] != 1:
        raise StorageError(f"{path} holds a {M.shape[0]} x {M.shape[1]} matrix, expected one vector")
    return M.reshape(-1)


# JSON

def write_json(path: PathLike, payload: Dict[str, Any]) -> Path:
    path = Path(path)
    _ensure_parent(path)
    try:
        path.write_text(json.dumps(_json_safe(payload), indent=2, default=str))
    except (OSError, TypeError) as e:
        raise StorageError(f"Cannot write {path}: {e}")
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as e:
        raise StorageError(f"Cannot read {path}: {e}")
    except json.JSONDecodeError as e:
        raise StorageError(f"Malformed JSON in {path}: {e}")
    if not isinstance(payload, dict):
        raise StorageError(f"{path} must hold a JSON object")
    return payload


# fitted estimators: a directory with a JSON manifest and the whitened samples

def save_model(model: EesModel, directory: PathLike) -> Path:
    directory = Path(directory)
    save_matrix(directory / MODEL_SAMPLES, model.samples)
    write_json(directory / MODEL_MANIFEST, {
        "m": model.m,
        "d": model.d,
        "gamma": model.gamma,
        "mu_hat": model.mu_hat,
        "sigma_hat": model.sigma_hat,
        "sigma_factor": model.sigma_factor,
        "log_z": model.log_z,
        "z_std_error": model.z_std_error,
        "seed": model.seed,
        "samples_file": MODEL_SAMPLES,
        "versions": versions(),
    })
    logger.info(f"Saved EES model (m={model.m}, d={model.d}) to {directory}")
    return directory


def load_model(directory: PathLike) -> EesModel:
    directory = Path(directory)
    manifest = read_json(directory / MODEL_MANIFEST)
    try:
        samples = load_matrix(directory / manifest.get("samples_file", MODEL_SAMPLES))
        gamma = manifest["gamma"]
        return EesModel(
            samples=samples,
            mu_hat=np.asarray(manifest["mu_hat"], dtype=float).reshape(-1),
            sigma_hat=np.atleast_2d(np.asarray(manifest["sigma_hat"], dtype=float)),
            sigma_factor=np.atleast_2d(np.asarray(manifest["sigma_factor"], dtype=float)),
            gamma=math.inf if gamma in ("inf", "Infinity") else float(gamma),
            log_z=manifest.get("log_z"),
            z_std_error=manifest.get("z_std_error"),
            seed=int(manifest.get("seed", 0)),
        )
    except KeyError as e:
        raise StorageError(f"Model manifest in {directory} lacks {e}")
    except (PydanticValidationError, ValueError, TypeError) as e:
        raise StorageError(f"Model manifest in {directory} is invalid: {e}")


# tables

def _stamp(frame: pd.DataFrame, root_seed: Optional[int]) -> pd.DataFrame:
    # experiment outputs lead with the root seed they were derived from
    if root_seed is not None:
        frame.insert(0, "root_seed", int(root_seed))
    return frame


def write_table(path: PathLike, rows: List[Dict[str, Any]], columns: Optional[List[str]] = None,
                root_seed: Optional[int] = None) -> Path:
    path = Path(path)
    _ensure_parent(path)
    try:
        _stamp(pd.DataFrame(rows, columns=columns), root_seed).to_csv(path, index=False)
    except OSError as e:
        raise StorageError(f"Cannot write {path}: {e}")
    return path


def read_table(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    try:
        return pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise StorageError(f"Cannot read table {path}: {e}")


def save_cv_curve(path: PathLike, result: CvResult, root_seed: Optional[int] = None) -> Path:
    """gamma, fold_1..fold_k, mean: one row per grid point"""
    table = {"gamma": result.gamma_grid}
    for t in range(result.k):
        table[f"fold_{t + 1}"] = result.fold_losses[t]
    table["mean"] = result.mean_loss
    path = Path(path)
    _ensure_parent(path)
    try:
        _stamp(pd.DataFrame(table), root_seed).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    except OSError as e:
        raise StorageError(f"Cannot write {path}: {e}")
    return path


def save_trace(path: PathLike, trace: IfTrace, root_seed: Optional[int] = None) -> Path:
    return write_table(path, trace.to_rows(), root_seed=root_seed)


def to_json(payload: Dict[str, Any]) -> str:
    return json.dumps(_json_safe(payload), indent=2, default=str)
