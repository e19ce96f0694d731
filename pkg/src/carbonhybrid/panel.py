"""Daily market panel: CSV ingestion, gap filling and series transforms.

The panel is a date-indexed set of equal-length float64 columns keyed by the
Table-1 variable codes. Panels are treated as immutable; every operation
returns a new instance.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DomainError,
    OrderingError,
    ParseError,
    SchemaError,
    UnusableColumnError,
)

# Order follows the groups of the source variable table.
VARIABLE_CODES: tuple[str, ...] = (
    "SHEA", "SZA", "GDEA",
    "HS300", "BP500", "OY", "MY",
    "CCI500", "YHQ", "QY", "FOB", "WIRED",
    "TRQQH", "TPFQH", "CER", "EUA",
    "SZNY", "SZGY", "SZZR", "CKY", "SSZNY", "ZZY",
    "PM",
)
DERIVED_CODES: tuple[str, ...] = ("GSHEA",)
ALL_CODES: frozenset[str] = frozenset(VARIABLE_CODES + DERIVED_CODES)

TARGET = "SHEA"
MISSING_MARKERS = frozenset({"", "NA"})


@dataclass(frozen=True)
class DatedSeries:
    dates: tuple[dt.date, ...]
    values: np.ndarray

    def __post_init__(self):
        if len(self.dates) != len(self.values):
            raise ValueError("dates and values differ in length")

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class ObservationPanel:
    """Date-indexed matrix of market variables.

    Missing cells are stored as NaN until :func:`fill_missing` is applied.
    """

    dates: tuple[dt.date, ...]
    columns: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.dates)
        frozen = {}
        for code, values in self.columns.items():
            if code not in ALL_CODES:
                raise SchemaError(f"unknown variable code {code!r}")
            if len(values) != n:
                raise SchemaError(f"column {code} has length {len(values)}, expected {n}")
            arr = np.array(values, dtype=np.float64)
            arr.flags.writeable = False
            frozen[code] = arr
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "columns", frozen)
        for prev, cur in zip(self.dates, self.dates[1:]):
            if cur == prev:
                raise OrderingError(f"duplicate date {cur.isoformat()}")
            if cur < prev:
                raise OrderingError(f"dates not increasing at {cur.isoformat()}")

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(self.columns)

    def __getitem__(self, code: str) -> np.ndarray:
        try:
            return self.columns[code]
        except KeyError:
            raise SchemaError(f"panel has no column {code!r}") from None

    def series(self, code: str) -> DatedSeries:
        return DatedSeries(self.dates, self[code])

    def has_missing(self) -> bool:
        return any(np.isnan(v).any() for v in self.columns.values())

    def with_columns(self, **new: np.ndarray) -> "ObservationPanel":
        cols = dict(self.columns)
        for code, values in new.items():
            cols[code] = np.asarray(values, dtype=np.float64)
        return ObservationPanel(self.dates, cols)

    def select(self, codes: Iterable[str]) -> "ObservationPanel":
        return ObservationPanel(self.dates, {c: self[c] for c in codes})

    def slice(self, start: int, stop: int | None = None) -> "ObservationPanel":
        return ObservationPanel(
            self.dates[start:stop],
            {c: v[start:stop] for c, v in self.columns.items()},
        )

    def equals(self, other: "ObservationPanel") -> bool:
        if self.dates != other.dates or set(self.columns) != set(other.columns):
            return False
        return all(
            np.array_equal(self.columns[c], other.columns[c], equal_nan=True)
            for c in self.columns
        )


def _parse_date(text: str, row: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"row {row}, column date: cannot parse date {text!r}") from None


def load_panel(path: str | Path, schema: Sequence[str] | None = None) -> ObservationPanel:
    """Read a panel CSV (``date,<code>,...``).

    Parameters
    ----------
    path : path to a UTF-8 CSV file with a header row.
    schema : expected variable codes. Every code must be present and no
        other columns are allowed. ``None`` accepts any subset of the known
        codes.

    Empty cells and ``NA`` are read as missing (NaN). Column order in the
    file is irrelevant.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"panel file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        rows = list(reader)

    if not header or header[0].lower() != "date":
        raise SchemaError(f"{path}: first column must be 'date'")
    codes = header[1:]
    seen = set()
    for code in codes:
        if code not in ALL_CODES:
            raise SchemaError(f"{path}: unknown column {code!r}")
        if code in seen:
            raise SchemaError(f"{path}: duplicated column {code!r}")
        seen.add(code)
    if schema is not None:
        for code in schema:
            if code not in seen:
                raise SchemaError(f"{path}: missing column {code!r}")
        extra = seen.difference(schema)
        if extra:
            raise SchemaError(f"{path}: unexpected column {sorted(extra)[0]!r}")

    dates: list[dt.date] = []
    data = np.empty((len(rows), len(codes)), dtype=np.float64)
    for i, row in enumerate(rows):
        lineno = i + 2
        if len(row) != len(header):
            raise ParseError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
        dates.append(_parse_date(row[0], lineno))
        for j, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell in MISSING_MARKERS:
                data[i, j] = np.nan
                continue
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(
                    f"row {lineno}, column {codes[j]}: non-numeric value {cell!r}"
                ) from None
            if not math.isfinite(value):
                raise ParseError(f"row {lineno}, column {codes[j]}: non-finite value {cell!r}")
            data[i, j] = value

    order = [c for c in VARIABLE_CODES + DERIVED_CODES if c in seen]
    columns = {c: data[:, codes.index(c)].copy() for c in order}
    return ObservationPanel(tuple(dates), columns)


def _format_value(value: float) -> str:
    if np.isnan(value):
        return "NA"
    return repr(float(value))


def write_panel(panel: ObservationPanel, path: str | Path) -> Path:
    """Write ``panel`` in the canonical CSV dialect read by :func:`load_panel`.

    Values use Python's shortest round-trip float repr, so a load after a
    write reproduces every float bit for bit.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    codes = panel.codes
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", *codes])
        for i, day in enumerate(panel.dates):
            writer.writerow([day.isoformat(), *(_format_value(panel[c][i]) for c in codes)])
    return path


def fill_column(values: np.ndarray, code: str = "?") -> np.ndarray:
    """Fill NaN gaps with the mean of the nearest valid values on each side.

    A gap touching either end of the column takes the single nearest valid
    value. Every cell of an interior run receives the same mean.
    """
    values = np.asarray(values, dtype=np.float64)
    missing = np.isnan(values)
    if not missing.any():
        return values.copy()
    valid = np.flatnonzero(~missing)
    if valid.size == 0:
        raise UnusableColumnError(f"column {code} is entirely missing")
    idx = np.arange(len(values))
    # nearest valid index at or before / at or after each position
    before = np.maximum.accumulate(np.where(~missing, idx, -1))
    after = np.minimum.accumulate(np.where(~missing, idx, len(values))[::-1])[::-1]
    out = values.copy()
    for i in np.flatnonzero(missing):
        lo, hi = before[i], after[i]
        if lo < 0:
            out[i] = values[hi]
        elif hi >= len(values):
            out[i] = values[lo]
        else:
            out[i] = 0.5 * (values[lo] + values[hi])
    return out


def fill_missing(panel: ObservationPanel) -> ObservationPanel:
    return ObservationPanel(
        panel.dates, {c: fill_column(v, c) for c, v in panel.columns.items()}
    )


TRANSFORMS = ("level", "log-return", "first-difference")


@dataclass(frozen=True)
class SeriesTransform:
    kind: str
    source: str

    def __post_init__(self):
        if self.kind not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.kind!r}; expected one of {TRANSFORMS}")


def transform_series(panel: ObservationPanel, t: SeriesTransform) -> np.ndarray:
    x = panel[t.source]
    if t.kind == "level":
        return x.copy()
    if t.kind == "first-difference":
        return np.diff(x)
    bad = np.flatnonzero(~(x > 0))
    if bad.size:
        day = panel.dates[bad[0]].isoformat()
        raise DomainError(f"log-return of {t.source} needs positive values; {x[bad[0]]!r} on {day}")
    return np.diff(np.log(x))


def validate_clean(panel: ObservationPanel, positive: Iterable[str] | None = None) -> None:
    """Raise unless the panel has no missing cells and positive price columns."""
    for code, values in panel.columns.items():
        if np.isnan(values).any():
            i = int(np.flatnonzero(np.isnan(values))[0])
            raise UnusableColumnError(f"column {code} still missing on {panel.dates[i].isoformat()}")
    for code in positive if positive is not None else panel.codes:
        if code in panel.columns and not (panel[code] > 0).all():
            i = int(np.flatnonzero(~(panel[code] > 0))[0])
            raise DomainError(f"column {code} is non-positive on {panel.dates[i].isoformat()}")
