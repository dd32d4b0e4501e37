"""In-memory columnar backend: CSV ingestion and exact quantized counting.

Quantization is applied implicitly at scan time; neither the quantized
column nor a per-quantum count vector is ever materialized, so the memory
footprint of a query depends on the row count and the number of requested
buckets, not on the quantization domain size.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError, NotFoundError
from .policy import NumericQuantization, Quantization, StringQuantization
from .synopsis import QuantumRange


@dataclass(frozen=True)
class Column:
    kind: str  # "real" | "string"
    values: np.ndarray
    missing: np.ndarray  # bool mask, True where the cell is missing


@dataclass(frozen=True)
class Dataset:
    """Immutable table: typed column vectors with explicit missing masks."""

    name: str
    columns: dict[str, Column]
    parse_warnings: dict[str, int] = field(default_factory=dict)

    @property
    def row_count(self) -> int:
        for column in self.columns.values():
            return len(column.values)
        return 0

    def column(self, name: str) -> Column:
        if name not in self.columns:
            raise NotFoundError(f"no column named {name!r}")
        return self.columns[name]


@dataclass(frozen=True)
class RangeStats:
    """Exact raw statistics of one column; min/max are None when all rows are missing."""

    minimum: float | str | None
    maximum: float | str | None
    total_rows: int
    non_null_rows: int


@dataclass(frozen=True)
class TrueHistogram:
    """Exact per-bucket counts; missing and out-of-quantization rows land in null_count."""

    counts: np.ndarray  # int64, one entry per bucket
    null_count: int


@dataclass(frozen=True)
class TrueHeatmap:
    counts: np.ndarray  # int64, shape (buckets_x, buckets_y)
    null_count: int


def load_schema(path: str | Path) -> list[tuple[str, str]]:
    """Read the sidecar schema: a JSON list of {name, type} entries."""
    entries = json.loads(Path(path).read_text())
    schema = []
    for entry in entries:
        name, kind = entry["name"], entry["type"]
        if kind not in ("real", "string"):
            raise InvalidParameterError(f"unknown column type {kind!r} for {name!r}")
        schema.append((name, kind))
    return schema


def load_csv(path: str | Path, schema: list[tuple[str, str]], name: str | None = None) -> Dataset:
    """Load a header-row CSV into typed columns.

    Empty fields are missing; unparseable numeric tokens are recorded as
    missing and counted per column in ``parse_warnings`` (exploration data is
    dirty, and a bad token should not abort the load).
    """
    path = Path(path)
    wanted = dict(schema)
    raw: dict[str, list[str]] = {col: [] for col, _ in schema}
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise InvalidParameterError(f"{path} has no header row")
        for col in wanted:
            if col not in reader.fieldnames:
                raise InvalidParameterError(f"{path} is missing column {col!r}")
        for row in reader:
            for col in raw:
                raw[col].append(row.get(col) or "")

    columns: dict[str, Column] = {}
    warnings: dict[str, int] = {}
    for col, kind in schema:
        tokens = raw[col]
        if kind == "real":
            values = np.empty(len(tokens), dtype=np.float64)
            missing = np.zeros(len(tokens), dtype=bool)
            bad = 0
            for i, token in enumerate(tokens):
                if token == "":
                    values[i] = np.nan
                    missing[i] = True
                    continue
                try:
                    parsed = float(token)
                except ValueError:
                    bad += 1
                    parsed = math.nan
                if math.isnan(parsed):
                    values[i] = np.nan
                    missing[i] = True
                else:
                    values[i] = parsed
            if bad:
                warnings[col] = bad
        else:
            values = np.array(tokens, dtype="U")
            missing = np.array([token == "" for token in tokens], dtype=bool)
        values.setflags(write=False)
        missing.setflags(write=False)
        columns[col] = Column(kind, values, missing)
    return Dataset(name or path.stem, columns, warnings)


def dataset_from_arrays(name: str, arrays: dict[str, np.ndarray]) -> Dataset:
    """Build a dataset from in-memory arrays (NaN marks missing in float columns)."""
    columns = {}
    for col, values in arrays.items():
        values = np.asarray(values)
        if values.dtype.kind in "fiu":
            values = values.astype(np.float64)
            missing = np.isnan(values)
            kind = "real"
        else:
            values = values.astype("U")
            missing = values == ""
            kind = "string"
        values.setflags(write=False)
        columns[col] = Column(kind, values, missing)
    return Dataset(name, columns)


def raw_range_stats(dataset: Dataset, column: str) -> RangeStats:
    """Exact min / max / row counts over the raw column.

    This reads unprotected data; the service layer only exposes it to the
    curator on unpublished tables.
    """
    col = dataset.column(column)
    present = ~col.missing
    non_null = int(present.sum())
    if non_null == 0:
        return RangeStats(None, None, len(col.values), 0)
    values = col.values[present]
    if col.kind == "real":
        return RangeStats(float(values.min()), float(values.max()), len(col.values), non_null)
    return RangeStats(str(values.min()), str(values.max()), len(col.values), non_null)


def _quantum_indices(col: Column, q: Quantization) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized quantize-at-scan: per-row quantum index and in-range mask."""
    if isinstance(q, NumericQuantization):
        if col.kind != "real":
            raise InvalidParameterError("numeric quantization applied to a string column")
        values = col.values
        in_range = ~col.missing & (values >= q.qmin) & (values <= q.qmax)
        with np.errstate(invalid="ignore"):
            idx = np.floor((values - q.qmin) / q.granularity)
        idx = np.where(in_range, idx, -1.0)
        idx = np.minimum(idx, q.domain_size - 1).astype(np.int64)
        return idx, in_range
    if col.kind != "string":
        raise InvalidParameterError("string quantization applied to a numeric column")
    encoded = np.char.encode(col.values, "utf-8")
    bounds = np.array([b.encode("utf-8") for b in q.boundaries], dtype="S")
    idx = np.searchsorted(bounds.astype(encoded.dtype), encoded, side="right").astype(np.int64) - 1
    in_range = ~col.missing & (idx >= 0)
    if not q.include_upper:
        in_range &= encoded <= bounds[-1].astype(encoded.dtype)
    idx = np.where(in_range, idx, -1)
    return idx, in_range


def _bucket_assignment(idx: np.ndarray, ranges: list[QuantumRange], domain_size: int) -> np.ndarray:
    """Bucket number per row, or -1 outside every bucket; ranges must be disjoint and ordered."""
    for rng in ranges:
        if rng.hi > domain_size:
            raise InvalidParameterError(
                f"bucket range [{rng.lo}, {rng.hi}) exceeds domain of size {domain_size}"
            )
    for left, right in zip(ranges, ranges[1:]):
        if left.hi > right.lo:
            raise InvalidParameterError("bucket ranges must be disjoint and ordered")
    edges = np.empty(2 * len(ranges), dtype=np.int64)
    edges[0::2] = [rng.lo for rng in ranges]
    edges[1::2] = [rng.hi for rng in ranges]
    pos = np.searchsorted(edges, idx, side="right")
    inside = (pos % 2) == 1
    return np.where(inside, (pos - 1) // 2, -1)


def quantized_histogram(
    dataset: Dataset,
    column: str,
    q: Quantization,
    bucket_ranges: list[QuantumRange],
) -> TrueHistogram:
    """Exact counts of rows whose quantum index falls in each bucket range.

    One streaming pass over the column; rows that are missing or outside the
    quantization range accumulate into ``null_count``.
    """
    col = dataset.column(column)
    idx, in_range = _quantum_indices(col, q)
    if not bucket_ranges:
        return TrueHistogram(np.zeros(0, dtype=np.int64), int((~in_range).sum()))
    bucket = _bucket_assignment(idx, bucket_ranges, q.domain_size)
    bucket = bucket[in_range & (bucket >= 0)]
    counts = np.bincount(bucket, minlength=len(bucket_ranges)).astype(np.int64)
    return TrueHistogram(counts, int((~in_range).sum()))


def quantized_heatmap(
    dataset: Dataset,
    column_x: str,
    column_y: str,
    q_x: Quantization,
    q_y: Quantization,
    ranges_x: list[QuantumRange],
    ranges_y: list[QuantumRange],
) -> TrueHeatmap:
    """2-D analogue: a row counts only when both coordinates are in quantization range."""
    col_x = dataset.column(column_x)
    col_y = dataset.column(column_y)
    idx_x, in_x = _quantum_indices(col_x, q_x)
    idx_y, in_y = _quantum_indices(col_y, q_y)
    valid = in_x & in_y
    null_count = int((~valid).sum())
    if not ranges_x or not ranges_y:
        return TrueHeatmap(np.zeros((len(ranges_x), len(ranges_y)), dtype=np.int64), null_count)
    bx = _bucket_assignment(idx_x, ranges_x, q_x.domain_size)
    by = _bucket_assignment(idx_y, ranges_y, q_y.domain_size)
    keep = valid & (bx >= 0) & (by >= 0)
    flat = bx[keep] * len(ranges_y) + by[keep]
    counts = np.bincount(flat, minlength=len(ranges_x) * len(ranges_y)).astype(np.int64)
    return TrueHeatmap(counts.reshape(len(ranges_x), len(ranges_y)), null_count)


def null_count(dataset: Dataset, column: str, q: Quantization) -> int:
    """Rows that are missing or fall outside the quantization range."""
    col = dataset.column(column)
    _, in_range = _quantum_indices(col, q)
    return int((~in_range).sum())


def distinct_count(dataset: Dataset, column: str) -> int:
    """Distinct raw (pre-quantization) values, missing cells excluded."""
    col = dataset.column(column)
    present = col.values[~col.missing]
    if present.size == 0:
        return 0
    return int(np.unique(present).size)


def raw_histogram(dataset: Dataset, column: str, boundaries) -> np.ndarray:
    """Non-private histogram over raw values; the last bucket includes its upper bound.

    Baseline for the privacy slowdown measurement: same bucketing machinery
    as the quantized path, minus the quantization arithmetic.
    """
    col = dataset.column(column)
    if col.kind != "real":
        raise InvalidParameterError("raw histograms are only defined for numeric columns")
    edges = np.asarray(list(boundaries), dtype=np.float64)
    if edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise InvalidParameterError("bucket boundaries must be strictly sorted")
    values = col.values[~col.missing]
    pos = np.searchsorted(edges, values, side="right") - 1
    pos = np.where(values == edges[-1], len(edges) - 2, pos)
    pos = pos[(pos >= 0) & (pos < len(edges) - 1)]
    return np.bincount(pos, minlength=len(edges) - 1).astype(np.int64)
