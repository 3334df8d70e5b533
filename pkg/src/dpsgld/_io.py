"""
Dataset ingestion and tabular output.

Input CSVs carry a header row, feature columns and an integer label column. Rows whose L2 norm exceeds the
certified bound are rescaled onto the bound, never rejected, and the number of rescaled rows is reported.
Output tables are written with 17 significant digits so that re-parsing reproduces every double exactly.
"""

import json
import logging
import re
import typing as t
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from ._errors import InvalidInputError, ParseError
from ._types import Dataset
from ._util import FLOAT_FORMAT

logger = logging.getLogger(__name__)

#: Fraction of the generated blobs that goes into the training split.
TRAIN_FRACTION = 0.8

_PANDAS_LINE = re.compile(r"line (\d+)")


@dataclass(frozen=True)
class LoadedData:
    data: Dataset

    #: Number of rows that were rescaled onto the norm bound.
    rescaled: int


def rescale_rows(features: np.ndarray, norm_bound: float) -> t.Tuple[np.ndarray, int]:
    """Scale every row with ‖x‖₂ > *norm_bound* to norm exactly *norm_bound*, keeping its direction."""

    norms = np.linalg.norm(features, axis=1)
    over = norms > norm_bound
    scaled = features.copy()
    scaled[over] *= (norm_bound / norms[over])[:, None]
    return scaled, int(np.count_nonzero(over))


def _undecodable_line(path: Path) -> int:
    for number, raw in enumerate(path.read_bytes().splitlines(), 1):
        try:
            raw.decode("utf-8")
        except UnicodeDecodeError:
            return number
    return 0


def _read_frame(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True, encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror or exc}", str(path), 0)
    except UnicodeDecodeError:
        raise ParseError("file is not valid UTF-8", str(path), _undecodable_line(path))
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty", str(path), 1)
    except pd.errors.ParserError as exc:
        match = _PANDAS_LINE.search(str(exc))
        raise ParseError(str(exc).strip(), str(path), int(match.group(1)) if match else 0)


def load_csv(path: t.Union[str, Path], norm_bound: float, label_column: str = "label") -> LoadedData:
    """
    Parse a feature CSV into a #Dataset with rows bounded by *norm_bound*.

    @raises ParseError: If the label column is missing, a cell is not a number or a label is not an integer.
    """

    path = Path(path)
    frame = _read_frame(path)
    if label_column not in frame.columns:
        raise ParseError(f"missing label column {label_column!r}", str(path), 1, ",".join(frame.columns))
    feature_columns = [c for c in frame.columns if c != label_column]
    if not feature_columns:
        raise ParseError("no feature columns", str(path), 1, ",".join(frame.columns))
    if frame.empty:
        raise ParseError("no data rows", str(path), 2)

    def raw_line(index: int) -> str:
        return ",".join(str(v) for v in frame.iloc[index].tolist())

    numeric = frame[feature_columns].apply(pd.to_numeric, errors="coerce")
    bad_rows = np.flatnonzero(~np.isfinite(numeric.to_numpy(dtype=np.float64)).all(axis=1))
    if bad_rows.size:
        row = int(bad_rows[0])
        raise ParseError("malformed feature value", str(path), row + 2, raw_line(row))

    labels = pd.to_numeric(frame[label_column], errors="coerce").to_numpy(dtype=np.float64)
    bad_labels = np.flatnonzero(~np.isfinite(labels) | (labels != np.round(labels)) | (labels < 0))
    if bad_labels.size:
        row = int(bad_labels[0])
        raise ParseError("label is not a non-negative integer", str(path), row + 2, raw_line(row))

    features, rescaled = rescale_rows(numeric.to_numpy(dtype=np.float64), norm_bound)
    if rescaled:
        logger.warning("%s: rescaled %d rows onto the norm bound %g", path, rescaled, norm_bound)
    classes = max(int(labels.max()) + 1, 2)
    return LoadedData(Dataset(features, labels.astype(np.int64), norm_bound, classes), rescaled)


def make_blobs(
    n: int, p: int, classes: int, separation: float, seed: int, norm_bound: float = 1.0
) -> t.Tuple[Dataset, Dataset]:
    """
    Gaussian blobs with class means `separation * e_c` and unit noise, rescaled to norm ≤ *norm_bound* and split
    80/20 into train and test sets.
    """

    if classes < 2 or p < classes:
        raise InvalidInputError(f"blobs need 2 <= classes <= p, got classes={classes}, p={p}")
    if n < 10:
        raise InvalidInputError(f"blobs need at least 10 rows for the train/test split, got {n}")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % classes)
    centres = separation * np.eye(classes, p)
    features, _ = rescale_rows(centres[labels] + rng.standard_normal((n, p)), norm_bound)
    cut = int(round(TRAIN_FRACTION * n))
    return (
        Dataset(features[:cut], labels[:cut], norm_bound, classes),
        Dataset(features[cut:], labels[cut:], norm_bound, classes),
    )


def write_table(path: t.Union[str, Path], frame: pd.DataFrame) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def read_table(path: t.Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def _builtin(value: t.Any) -> t.Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialise {type(value).__name__}")


def write_json(path: t.Union[str, Path], payload: t.Any) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=_builtin)
    Path(path).write_text(text + "\n", encoding="utf-8")
