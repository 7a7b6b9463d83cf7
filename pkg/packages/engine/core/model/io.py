"""
KDEXP - Model File I/O
Delimited-text readers and writers for exposure ensembles and outcome tables.
Floats are written with 17 significant digits and read back with the
round-trip parser, so write -> read reproduces every value exactly.
"""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from packages.engine.core.model.data import HealthDataset
from packages.shared.exceptions import DataFormatError, InvalidParameterError
from packages.shared.utils import atomic_write_text

logger = logging.getLogger("KDEXP.ModelIO")

FLOAT_FORMAT = "%.17g"
PathLike = Union[str, Path]


def _read_table(path: PathLike, **kwargs) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataFormatError("file not found", path=str(path))
    try:
        return pd.read_csv(path, float_precision="round_trip", skipinitialspace=True, **kwargs)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataFormatError(f"cannot parse delimited text: {exc}", path=str(path)) from exc


def _first_bad_row(frame: pd.DataFrame, first_line: int) -> Optional[int]:
    values = frame.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float, na_value=np.nan)
    bad = ~np.isfinite(values).all(axis=1)
    if bad.any():
        return first_line + int(np.flatnonzero(bad)[0])
    return None


def _has_header(path: PathLike) -> bool:
    with open(path, "r", encoding="utf-8") as handle:
        first = handle.readline()
    try:
        [float(cell) for cell in first.strip().split(",") if cell.strip()]
    except ValueError:
        return True
    return False


def read_ensemble(path: PathLike) -> np.ndarray:
    """n x m matrix; rows are data points, columns are draws; header optional"""
    header = 0 if Path(path).exists() and _has_header(path) else None
    frame = _read_table(path, header=header)
    if frame.empty:
        raise DataFormatError("ensemble file has no rows", path=str(path))
    bad_line = _first_bad_row(frame, first_line=2 if header == 0 else 1)
    if bad_line is not None:
        raise DataFormatError("non-numeric or non-finite entry", path=str(path), line=bad_line)
    return frame.to_numpy(dtype=float)


def write_ensemble(path: PathLike, Z_star: np.ndarray, header: bool = True) -> Path:
    Z_star = np.atleast_2d(np.asarray(Z_star, dtype=float))
    columns = [f"draw_{j + 1}" for j in range(Z_star.shape[1])]
    frame = pd.DataFrame(Z_star, columns=columns)
    text = frame.to_csv(index=False, header=header, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Writing ensemble {Z_star.shape[0]}x{Z_star.shape[1]} to {path}")
    return atomic_write_text(path, text)


def read_health_dataset(path: PathLike, family: str) -> HealthDataset:
    """Columnar outcome table: y, optional offset, covariates x_*; an intercept is prepended"""
    frame = _read_table(path, header=0)
    if "y" not in frame.columns:
        raise DataFormatError("missing outcome column", path=str(path), field="y")
    unknown = [c for c in frame.columns if c not in ("y", "offset") and not str(c).startswith("x_")]
    if unknown:
        raise DataFormatError("unexpected column", path=str(path), field=str(unknown[0]))
    bad_line = _first_bad_row(frame, first_line=2)
    if bad_line is not None:
        raise DataFormatError("non-numeric or non-finite entry", path=str(path), line=bad_line)

    covariates = [c for c in frame.columns if str(c).startswith("x_")]
    X = np.column_stack([np.ones(len(frame))] + [frame[c].to_numpy(dtype=float) for c in covariates])
    offset = frame["offset"].to_numpy(dtype=float) if "offset" in frame.columns else None
    try:
        return HealthDataset(Y=frame["y"].to_numpy(dtype=float), X=X, family=family, O=offset)
    except InvalidParameterError as exc:
        raise DataFormatError(str(exc), path=str(path)) from exc


def write_health_dataset(path: PathLike, data: HealthDataset) -> Path:
    frame = pd.DataFrame({"y": data.Y})
    if np.any(data.O != 0.0):
        frame["offset"] = data.O
    for k in range(1, data.p):
        frame[f"x_{k}"] = data.X[:, k]
    text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return atomic_write_text(path, text)
