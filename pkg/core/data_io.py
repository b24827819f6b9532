"""
CSV Input and Output
====================

Reading numeric tables with a header row and writing them back at full
precision. Rows are reported 1-based, counting data rows only.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from models.simulation import SampleDraw
from utils.exceptions import DataError, ParseError, SchemaMismatch

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
RESPONSE_COLUMN = "y"
PREDICTION_COLUMN = "yhat"

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class LabeledTable:
    """
    Covariates and responses read from one CSV file

    Attributes:
        x (np.ndarray): Covariates, shape (n, p)
        y (np.ndarray): Responses, shape (n,)
        covariates (List[str]): Covariate column names in file order
        response (str): Response column name
    """

    x: np.ndarray
    y: np.ndarray
    covariates: List[str]
    response: str


def covariate_names(p: int) -> List[str]:
    """Default column names x1..xp"""
    return [f"x{i + 1}" for i in range(p)]


def _read_frame(path: PathLike) -> pd.DataFrame:
    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, skipinitialspace=True
        )
    except FileNotFoundError as e:
        raise DataError(f"File not found: {path}") from e
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"{path} is empty") from e
    except pd.errors.ParserError as e:
        raise ParseError(f"{path} is not a valid CSV file: {e}") from e
    if frame.shape[1] == 0:
        raise ParseError(f"{path} has no columns")
    return frame


def _numeric(frame: pd.DataFrame, path: PathLike) -> np.ndarray:
    """Convert every cell to float, locating the first bad cell"""
    values = np.empty(frame.shape, dtype=float)
    for j, column in enumerate(frame.columns):
        cells = frame[column]
        try:
            converted = cells.astype(float).to_numpy()
        except ValueError:
            bad = np.flatnonzero(
                pd.to_numeric(cells, errors="coerce").isna().to_numpy()
            )
            row = int(bad[0]) if bad.size else 0
            raise ParseError(
                f"Non-numeric value {cells.iloc[row]!r} in {path}",
                row=row + 1,
                column=str(column),
            )
        finite = np.isfinite(converted)
        if not finite.all():
            row = int(np.flatnonzero(~finite)[0])
            raise ParseError(
                f"Non-finite value {cells.iloc[row]!r} in {path}",
                row=row + 1,
                column=str(column),
            )
        values[:, j] = converted
    return values


def read_labeled_csv(path: PathLike, response: Optional[str] = None) -> LabeledTable:
    """
    Read covariates and responses

    Args:
        path (PathLike): CSV file with a header row
        response (str, optional): Response column; defaults to the last column

    Returns:
        LabeledTable: Parsed table

    Raises:
        ParseError: If a cell is not a finite number
        SchemaMismatch: If the response column is missing
    """
    frame = _read_frame(path)
    columns = [str(c) for c in frame.columns]
    if response is None:
        response = columns[-1]
    if response not in columns:
        raise SchemaMismatch(f"Response column '{response}' not found in {path}")
    covariates = [c for c in columns if c != response]
    if not covariates:
        raise SchemaMismatch(f"{path} has no covariate columns")
    if frame.shape[0] == 0:
        raise ParseError(f"{path} has no data rows")

    values = _numeric(frame[covariates + [response]], path)
    logger.info(f"Read {values.shape[0]} labeled rows from {path}")
    return LabeledTable(
        x=values[:, :-1].copy(),
        y=values[:, -1].copy(),
        covariates=covariates,
        response=response,
    )


def read_covariates_csv(
    path: PathLike,
    columns: Optional[Sequence[str]] = None,
    strict: bool = True,
) -> np.ndarray:
    """
    Read a covariate matrix

    Args:
        path (PathLike): CSV file with a header row
        columns (Sequence[str], optional): Expected covariate columns
        strict (bool): Require exactly these columns in this order; when
            False, the named columns are selected and others ignored

    Returns:
        np.ndarray: Covariates, shape (n, p)

    Raises:
        ParseError: If a cell is not a finite number
        SchemaMismatch: If the header does not match columns
    """
    frame = _read_frame(path)
    found = [str(c) for c in frame.columns]
    if columns is not None:
        columns = list(columns)
        if strict and found != columns:
            raise SchemaMismatch(
                f"{path} has columns {found}, expected {columns}"
            )
        missing = [c for c in columns if c not in found]
        if missing:
            raise SchemaMismatch(f"{path} is missing columns {missing}")
        frame = frame[columns]
    x = _numeric(frame, path)
    logger.info(f"Read {x.shape[0]} covariate rows from {path}")
    return x


def write_csv(frame: pd.DataFrame, path: PathLike) -> None:
    """Write a table without index at 17 significant digits"""
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_predictions(yhat: np.ndarray, path: PathLike) -> None:
    write_csv(pd.DataFrame({PREDICTION_COLUMN: np.asarray(yhat, dtype=float)}), path)


def sample_frame(
    draw: SampleDraw,
    names: Optional[List[str]] = None,
    with_response: bool = True,
) -> pd.DataFrame:
    """Table of a simulated sample: covariates, then the response"""
    names = names or covariate_names(draw.x.shape[1])
    frame = pd.DataFrame(draw.x, columns=names)
    if with_response:
        frame[RESPONSE_COLUMN] = draw.y
    return frame


def latent_frame(draw: SampleDraw) -> pd.DataFrame:
    """Table of the latent labels of a simulated sample"""
    return pd.DataFrame(
        {"z": draw.z.astype(int), "tilde_z": draw.tilde_z.astype(int)}
    )


def read_latents_csv(path: PathLike) -> pd.DataFrame:
    frame = _read_frame(path)
    missing = {"z", "tilde_z"} - set(frame.columns)
    if missing:
        raise SchemaMismatch(f"{path} is missing columns {sorted(missing)}")
    values = _numeric(frame[["z", "tilde_z"]], path)
    return pd.DataFrame(values.astype(int), columns=["z", "tilde_z"])
