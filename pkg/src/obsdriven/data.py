"""Observed series container and CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass
import warnings

import numpy as np

from obsdriven.expfamily import FamilySpec, Support, check_observations
from obsdriven.exceptions import ObsDrivenError

__all__ = ["SeriesData", "ParseError", "read_series_csv"]


class ParseError(ObsDrivenError, ValueError):
    """Malformed input file.  ``line`` is the 1-based line number, if known."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class SeriesData:
    y: np.ndarray
    support: Support = Support.NONNEGATIVE_INTEGER

    @classmethod
    def for_family(cls, y, family: FamilySpec) -> "SeriesData":
        return cls(check_observations(family, y), family.support)

    @property
    def n(self) -> int:
        return int(self.y.size)

    def __len__(self):
        return self.n


def as_array(data) -> np.ndarray:
    if isinstance(data, SeriesData):
        return np.ascontiguousarray(data.y, dtype=float)
    return np.ascontiguousarray(np.asarray(data, dtype=float).ravel())


def read_series_csv(path, column: str = "y") -> np.ndarray:
    """Read the ``y`` column of a CSV file with a header row.

    Extra columns are ignored with a warning.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        header = [h.strip() for h in header]
        if column not in header:
            raise ParseError(f"no {column!r} column in header {header}", line=1)
        idx = header.index(column)
        if len(header) > 1:
            warnings.warn(f"ignoring columns other than {column!r}", UserWarning, stacklevel=2)
        values = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values.append(float(row[idx]))
            except (IndexError, ValueError):
                raise ParseError(f"cannot parse {row!r}", line=line) from None
    if not values:
        raise ParseError("no observations", line=2)
    return np.asarray(values)
