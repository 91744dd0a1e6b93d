"""Core value types: covariate tables and screening results.

All arrays held by these types are marked read-only after construction.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyTable,
    NonFiniteValue,
    RaggedRows,
    UnparseableValue,
)


class Origin(enum.Enum):
    MEASURED = "measured"
    SIMULATED = "simulated"


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Column-labelled covariate matrix with an optional response vector.

    Values are kept in the units they were read in; standardization is a
    separate step (see :mod:`condsurrogate.metric`).
    """

    column_names: tuple
    X: np.ndarray
    y: Optional[np.ndarray] = None
    origin: Origin = Origin.SIMULATED
    response_name: str = "y"

    def __post_init__(self):
        X = _frozen(self.X)
        if X.ndim == 1:
            X = _frozen(X.reshape(-1, 1))
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise EmptyTable(f"covariate matrix must be n x d with n, d >= 1, got shape {X.shape}")
        names = tuple(str(c) for c in self.column_names)
        if len(names) != X.shape[1]:
            raise DimensionMismatch(f"{len(names)} column names for {X.shape[1]} columns")
        bad = np.argwhere(~np.isfinite(X))
        if len(bad):
            raise NonFiniteValue(int(bad[0, 0]), int(bad[0, 1]))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "column_names", names)
        if self.y is not None:
            y = _frozen(self.y).ravel()
            if y.shape[0] != X.shape[0]:
                raise DimensionMismatch(f"response length {y.shape[0]} != row count {X.shape[0]}")
            bad = np.flatnonzero(~np.isfinite(y))
            if len(bad):
                raise NonFiniteValue(int(bad[0]), X.shape[1])
            object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def has_response(self) -> bool:
        return self.y is not None

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            self.column_names,
            self.X[rows],
            None if self.y is None else self.y[rows],
            self.origin,
            self.response_name,
        )

    def with_X(self, X) -> "Dataset":
        return Dataset(self.column_names, X, self.y, self.origin, self.response_name)

    def without_response(self) -> "Dataset":
        return Dataset(self.column_names, self.X, None, self.origin, self.response_name)


def validate_dataset(
    table: Sequence[Sequence[str]],
    origin: Origin = Origin.SIMULATED,
    response_column: Optional[str] = "y",
) -> Dataset:
    """Turn a parsed CSV table (header row first) into a :class:`Dataset`.

    Row and column numbers in errors are 0-based and count data rows only,
    so the first row after the header is row 0. Cells that parse to NaN or
    an infinity raise :class:`NonFiniteValue`; empty or non-numeric cells
    raise :class:`UnparseableValue`. Missing values are never imputed.
    """
    if len(table) == 0:
        raise EmptyTable("table has no header row")
    header = [str(h).strip() for h in table[0]]
    rows = table[1:]
    if len(rows) == 0:
        raise EmptyTable("table has a header but no data rows")
    width = len(header)
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise RaggedRows(i, width, len(row))
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except (TypeError, ValueError):
                raise UnparseableValue(i, j, cell) from None
            if not math.isfinite(v):
                raise NonFiniteValue(i, j, cell)
            values[i, j] = v

    y = None
    names = header
    if response_column is not None and response_column in header:
        ycol = header.index(response_column)
        y = values[:, ycol]
        keep = [j for j in range(width) if j != ycol]
        values = values[:, keep]
        names = [header[j] for j in keep]
    if values.shape[1] == 0:
        raise EmptyTable("table has no covariate columns")
    return Dataset(tuple(names), values, y, origin, response_column or "y")


@dataclass(frozen=True)
class ScreeningReport:
    """Outcome of a kNN distance screening.

    ``outlier_flags[i]`` is true exactly when ``avg_distances[i] >= threshold``
    (unless the flat-curve rule suppressed all flags, see ``flat``).
    """

    avg_distances: np.ndarray
    sorted_order: np.ndarray
    tau: int
    threshold: float
    l1_curve: np.ndarray
    outlier_flags: np.ndarray
    k: int = 1
    flat: bool = False
    manual_threshold: bool = False
    raw_l1: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "avg_distances", _frozen(self.avg_distances))
        object.__setattr__(self, "sorted_order", _frozen(self.sorted_order, np.intp))
        object.__setattr__(self, "l1_curve", _frozen(self.l1_curve))
        object.__setattr__(self, "outlier_flags", _frozen(self.outlier_flags, bool))
        if self.raw_l1 is not None:
            object.__setattr__(self, "raw_l1", _frozen(self.raw_l1))

    @property
    def n(self) -> int:
        return self.avg_distances.shape[0]

    @property
    def n_outliers(self) -> int:
        return int(self.outlier_flags.sum())

    @property
    def inliers(self) -> np.ndarray:
        return np.flatnonzero(~self.outlier_flags)

    @property
    def outliers(self) -> np.ndarray:
        return np.flatnonzero(self.outlier_flags)

    @property
    def ranks(self) -> np.ndarray:
        """1-based rank of each point in the ascending distance order."""
        r = np.empty(self.n, dtype=np.intp)
        r[self.sorted_order] = np.arange(1, self.n + 1)
        return r
