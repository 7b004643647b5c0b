"""Right-censored survival data container and CSV ingestion."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Raised when survival data violates the dataset invariants."""


def time_order(time, status):
    """Row order by ascending time, events before censorings within ties."""
    time = np.asarray(time, dtype=float)
    status = np.asarray(status)
    # lexsort: last key is primary
    return np.lexsort((1 - status, time)).astype(np.int64)


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Predictor matrix plus right-censored outcome.

    Instances are immutable; the arrays are flagged read-only on construction.
    """

    X: np.ndarray
    time: np.ndarray
    status: np.ndarray
    col_names: tuple
    sort_index: np.ndarray = field(init=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, order="C", ndmin=2)
        time = np.array(self.time, dtype=np.float64).ravel()
        status_raw = np.asarray(self.status).ravel()
        n = time.shape[0]
        if X.shape[0] != n or status_raw.shape[0] != n:
            raise DataError(
                f"row count mismatch: X has {X.shape[0]}, time {n}, status {status_raw.shape[0]}"
            )
        if n == 0:
            raise DataError("dataset is empty")
        names = tuple(str(c) for c in self.col_names)
        if len(names) != X.shape[1]:
            raise DataError(f"expected {X.shape[1]} column names, got {len(names)}")
        if len(set(names)) != len(names):
            raise DataError("duplicate column names")
        if not np.all(np.isfinite(X)):
            raise DataError("predictors contain missing or non-finite values")
        if not np.all(np.isfinite(time)):
            raise DataError("time contains missing or non-finite values")
        if np.any(time <= 0):
            raise DataError("time must be > 0")
        status_f = np.asarray(status_raw, dtype=np.float64)
        if not np.all(np.isin(status_f, (0.0, 1.0))):
            raise DataError("invalid status: values must be 0 or 1")
        status = status_f.astype(np.int8)
        if status.sum() == 0:
            raise DataError("no events: at least one row needs status = 1")

        order = time_order(time, status)
        for arr in (X, time, status, order):
            arr.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "col_names", names)
        object.__setattr__(self, "sort_index", order)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.status.sum())

    def subset(self, rows) -> "SurvivalDataset":
        rows = np.asarray(rows)
        return SurvivalDataset(self.X[rows], self.time[rows], self.status[rows], self.col_names)

    def with_X(self, X) -> "SurvivalDataset":
        return SurvivalDataset(X, self.time, self.status, self.col_names)


def event_times(ds: SurvivalDataset) -> np.ndarray:
    """Strictly increasing times with at least one event."""
    return np.unique(ds.time[ds.status == 1])


def load_csv(path, time_col: str, status_col: str) -> SurvivalDataset:
    """Read a header-first numeric CSV; every other column becomes a predictor."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        dups = sorted({h for h in header if header.count(h) > 1})
        raise DataError(f"duplicate column names: {', '.join(dups)}")
    for col in (time_col, status_col):
        if col not in header:
            raise DataError(f"column '{col}' not found in {path}")
    body = rows[1:]
    values = np.empty((len(body), len(header)), dtype=np.float64)
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise DataError(f"line {i + 2}: expected {len(header)} fields, got {len(r)}")
        for j, cell in enumerate(r):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"non-numeric cell {cell!r} at line {i + 2}, column '{header[j]}'"
                ) from None
    ti, si = header.index(time_col), header.index(status_col)
    keep = [j for j in range(len(header)) if j not in (ti, si)]
    return SurvivalDataset(
        values[:, keep], values[:, ti], values[:, si], [header[j] for j in keep]
    )


def write_csv(ds: SurvivalDataset, path, time_col: str = "time", status_col: str = "status",
              comment: str | None = None):
    """Write predictors followed by the outcome columns, full float precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(ds.col_names) + [time_col, status_col])
        for i in range(ds.n):
            w.writerow([repr(float(v)) for v in ds.X[i]] + [repr(float(ds.time[i])), int(ds.status[i])])
