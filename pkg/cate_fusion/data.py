"""
Ingestion of parallel trial/OS data, covariate reductions and train/validation splits.
"""

import logging
import re
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .exceptions import ConfigurationError, DataFormatError, InsufficientDataError
from .models import (
    CsvSchema,
    EvaluationGrid,
    Link,
    ReductionSpec,
    StudyDataset,
)
from .nuisance import fit_response, predict_response

logger = logging.getLogger(__name__)

_COVARIATE_COLUMN = re.compile(r"^x(\d+)$")

PathLike = Union[str, Path]


def _covariate_columns(header: List[str], schema: CsvSchema) -> List[str]:
    if schema.x is not None:
        return list(schema.x)
    found = [(int(m.group(1)), col) for col in header if (m := _COVARIATE_COLUMN.match(col))]
    return [col for _, col in sorted(found)]


def load_csv(path: PathLike, schema: Optional[CsvSchema] = None) -> StudyDataset:
    """
    Reads a pooled trial/OS file with one row per subject.

    Args:
        path: CSV file with a header row, UTF-8, `.` decimal separator.
        schema: Optional column mapping; defaults to `z,t,y` and every `x<k>` column
                ordered by k.

    Returns:
        A StudyDataset with rows in file order.

    Raises:
        DataFormatError: For missing columns, empty or non-numeric cells, indicators
                         outside {0, 1}, or a file without data rows. Row numbers are
                         1-based data rows (the header is not counted).
    """
    schema = schema or CsvSchema()
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as e:
        raise DataFormatError(f"Cannot read {path}: {e}") from e
    except pd.errors.EmptyDataError as e:
        raise DataFormatError(f"{path} is empty.") from e

    header = [str(c).strip() for c in frame.columns]
    frame.columns = header
    x_cols = _covariate_columns(header, schema)
    if not x_cols:
        raise DataFormatError("No covariate columns found.", column="x1")
    for col in [schema.z, schema.t, schema.y, *x_cols]:
        if col not in header:
            raise DataFormatError("Missing required column.", column=col)
    if frame.empty:
        raise DataFormatError(f"{path} has no data rows.")

    values = {}
    for col in [schema.z, schema.t, schema.y, *x_cols]:
        raw = frame[col].str.strip()
        parsed = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float, na_value=np.nan)
        bad = ~np.isfinite(parsed)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            problem = "Missing value." if raw.iloc[row] == "" else f"Non-numeric value '{raw.iloc[row]}'."
            raise DataFormatError(problem, row=row + 1, column=col)
        values[col] = parsed

    for col in (schema.z, schema.t):
        outside = ~np.isin(values[col], (0.0, 1.0))
        if outside.any():
            row = int(np.flatnonzero(outside)[0])
            raise DataFormatError(
                f"Value {values[col][row]:g} is not 0 or 1.", row=row + 1, column=col
            )

    data = StudyDataset(
        z=values[schema.z],
        t=values[schema.t],
        y=values[schema.y],
        x=np.column_stack([values[c] for c in x_cols]),
    )
    logger.info("Loaded %s: n=%d (trial %d, OS %d), p=%d", path, data.n, data.n0, data.n1, data.p)
    return data


def write_csv(data: StudyDataset, path: PathLike, schema: Optional[CsvSchema] = None) -> None:
    """Writes `data` in the layout `load_csv` reads back."""
    schema = schema or CsvSchema()
    x_cols = schema.x if schema.x is not None else [f"x{j + 1}" for j in range(data.p)]
    if len(x_cols) != data.p:
        raise ConfigurationError(f"Schema names {len(x_cols)} covariates but data has {data.p}.")
    frame = pd.DataFrame({schema.z: data.z.astype(int), schema.t: data.t.astype(int), schema.y: data.y})
    for j, col in enumerate(x_cols):
        frame[col] = data.x[:, j]
    frame.to_csv(path, index=False)


def split_train_validation(
    data: StudyDataset, fraction: float, seed: int
) -> Tuple[StudyDataset, StudyDataset]:
    """
    Splits `data` into training and validation parts, stratified by study.

    Each study contributes round(fraction * n_z) records to training, clamped so that
    both parts keep at least one record of that study. Row order is preserved within
    each part.

    Args:
        data: The pooled dataset.
        fraction: Training share, in (0, 1).
        seed: Seed for numpy's Generator; equal seeds give equal partitions.

    Returns:
        (train, valid).

    Raises:
        InsufficientDataError: If a study has fewer than two records, so it cannot
                               appear in both parts.
    """
    if not 0 < fraction < 1:
        raise ConfigurationError(f"Training fraction must be in (0, 1), got {fraction}.")
    rng = np.random.default_rng(seed)
    train_idx = []
    for study in (0, 1):
        members = np.flatnonzero(data.z == study)
        if members.size < 2:
            raise InsufficientDataError(
                f"Study z={study} has {members.size} record(s); both parts need at least one."
            )
        k = int(np.clip(round(fraction * members.size), 1, members.size - 1))
        train_idx.append(rng.permutation(members)[:k])
    in_train = np.zeros(data.n, dtype=bool)
    in_train[np.concatenate(train_idx)] = True
    return data.subset(np.flatnonzero(in_train)), data.subset(np.flatnonzero(~in_train))


def parse_reduction(text: str) -> ReductionSpec:
    """
    Parses the CLI reduction grammar.

    `col:<i>` uses raw column i (0-based), `pct:<i>` its reference percentile and
    `pct-score` the percentile of the predicted treatment difference. Several columns
    may be given as `col:0,2`.
    """
    text = text.strip()
    if text == "pct-score":
        return ReductionSpec(kind="percentile_of_score")
    kind, _, cols = text.partition(":")
    kinds = {"col": "column", "pct": "percentile"}
    if kind not in kinds or not cols:
        raise ConfigurationError(f"Unknown reduction '{text}'; use col:<i>, pct:<i> or pct-score.")
    try:
        columns = tuple(int(c) for c in cols.split(","))
    except ValueError as e:
        raise ConfigurationError(f"Bad column list in reduction '{text}'.") from e
    if any(c < 0 for c in columns):
        raise ConfigurationError(f"Column indices are 0-based and non-negative: '{text}'.")
    return ReductionSpec(kind=kinds[kind], columns=columns)


def _check_columns(spec: ReductionSpec, data: StudyDataset) -> None:
    for c in spec.columns:
        if c >= data.p:
            raise ConfigurationError(f"Reduction column {c} is out of range for p={data.p}.")


def _score(spec: ReductionSpec, x: np.ndarray) -> np.ndarray:
    treated, control = spec.score_models
    return predict_response(treated, x) - predict_response(control, x)


def _raw_values(spec: ReductionSpec, data: StudyDataset) -> np.ndarray:
    if spec.kind == "percentile_of_score":
        if spec.score_models is None:
            raise ConfigurationError("percentile-of-score reduction has no fitted score; call fit_score_reduction.")
        return _score(spec, data.x).reshape(-1, 1)
    _check_columns(spec, data)
    return data.x[:, list(spec.columns)]


def ecdf(reference: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Right-continuous empirical CDF: #{reference <= value} / m."""
    ref = np.sort(np.asarray(reference, dtype=float))
    if ref.size == 0:
        raise InsufficientDataError("The reference sample for a percentile reduction is empty.")
    return np.searchsorted(ref, values, side="right") / ref.size


def fit_score_reduction(reference: StudyDataset, outcome_link: Link = "identity") -> ReductionSpec:
    """
    Builds the percentile-of-score reduction on `reference`.

    Separate outcome regressions of Y ~ X are fitted among treated and untreated
    records of the pooled reference data; the score is the difference of their
    predictions and V is its percentile in the reference sample.
    """
    treated = reference.t == 1
    if treated.all() or not treated.any():
        raise InsufficientDataError("The score reduction needs treated and untreated records.")
    models = (
        fit_response(reference.y[treated], reference.x[treated], outcome_link, name="score_treated"),
        fit_response(reference.y[~treated], reference.x[~treated], outcome_link, name="score_control"),
    )
    spec = ReductionSpec(kind="percentile_of_score", score_models=models)
    return fit_reduction(spec, reference)


def fit_reduction(spec: ReductionSpec, reference: StudyDataset) -> ReductionSpec:
    """Stores the reference values a percentile reduction needs, making it a fixed map."""
    if spec.kind == "column":
        return spec
    if reference.n == 0:
        raise InsufficientDataError("The reference dataset for a percentile reduction is empty.")
    raw = _raw_values(spec, reference)
    stored = tuple(tuple(np.sort(raw[:, j]).tolist()) for j in range(raw.shape[1]))
    return spec.model_copy(update={"reference_values": stored})


def apply_reduction(
    spec: ReductionSpec, data: StudyDataset, reference: Optional[StudyDataset] = None
) -> np.ndarray:
    """
    Maps every record of `data` to V.

    Args:
        spec: The reduction.
        data: Records to transform.
        reference: Reference sample for percentile kinds. If omitted, the values
                   stored by `fit_reduction` are used.

    Returns:
        Array of shape (n, d). Column kinds return raw (0-based) columns; percentile
        kinds return reference ECDF values in [0, 1].
    """
    raw = _raw_values(spec, data)
    if spec.kind == "column":
        return raw
    if reference is not None:
        if spec.kind == "percentile_of_score" and spec.score_models is None:
            spec = fit_score_reduction(reference)
        ref = _raw_values(spec, reference)
        columns = [ref[:, j] for j in range(ref.shape[1])]
    elif spec.reference_values is not None:
        columns = [np.asarray(vals) for vals in spec.reference_values]
    else:
        raise ConfigurationError("A percentile reduction needs a reference dataset.")
    return np.column_stack([ecdf(columns[j], raw[:, j]) for j in range(raw.shape[1])])


def make_evaluation_grid(
    size: int, d: int = 1, low: Union[float, Sequence[float]] = 0.0, high: Union[float, Sequence[float]] = 1.0
) -> EvaluationGrid:
    """
    Evenly spaced midpoints (k - 0.5) / size over (low, high); for d > 1 the
    Cartesian product of the one-dimensional grids. `low` and `high` may be given
    per coordinate.
    """
    if size < 1:
        raise ConfigurationError("An evaluation grid needs at least one point.")
    lows = np.broadcast_to(np.asarray(low, dtype=float), (d,))
    highs = np.broadcast_to(np.asarray(high, dtype=float), (d,))
    steps = (np.arange(size) + 0.5) / size
    axes = [lo + steps * (hi - lo) for lo, hi in zip(lows, highs)]
    if d == 1:
        return EvaluationGrid(points=axes[0].reshape(-1, 1))
    mesh = np.meshgrid(*axes, indexing="ij")
    return EvaluationGrid(points=np.column_stack([m.ravel() for m in mesh]))


def parse_evaluation_points(text: str, d: int = 1) -> EvaluationGrid:
    """`"50"` gives a 50-point grid; `"0.1,0.5,0.9"` gives exactly those points (d = 1)."""
    text = text.strip()
    if "," not in text:
        try:
            return make_evaluation_grid(int(text), d=d)
        except ValueError:
            pass
    try:
        points = [float(p) for p in text.split(",") if p.strip()]
    except ValueError as e:
        raise ConfigurationError(f"Bad evaluation points '{text}'.") from e
    if not points:
        raise ConfigurationError("No evaluation points given.")
    if not np.isfinite(points).all():
        raise ConfigurationError(f"Evaluation points must be finite, got '{text}'.")
    return EvaluationGrid(points=np.asarray(points).reshape(-1, 1))
