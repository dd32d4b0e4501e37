"""Exact-count backends behind one internal interface.

The trusted root talks to a backend for exact (pre-noise) counts only; the
privacy layer sits entirely above this seam.  Two implementations ship: the
in-memory columnar engine, and a thin connector that executes generated SQL
against any DB-API connection holding the same table.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

from .engine import (
    Dataset,
    RangeStats,
    TrueHeatmap,
    TrueHistogram,
    distinct_count,
    null_count,
    quantized_heatmap,
    quantized_histogram,
    raw_range_stats,
)
from .policy import NumericQuantization, Quantization
from .sqlgen import REFERENCE_DIALECT, SqlDialect, gen_range_query, render_identifier
from .synopsis import QuantumRange


class CountBackend(Protocol):
    """Operations the privacy layer needs from a data source."""

    def histogram(self, column: str, q: Quantization, ranges: list[QuantumRange]) -> TrueHistogram: ...

    def heatmap(
        self,
        column_x: str,
        column_y: str,
        q_x: Quantization,
        q_y: Quantization,
        ranges_x: list[QuantumRange],
        ranges_y: list[QuantumRange],
    ) -> TrueHeatmap: ...

    def null_count(self, column: str, q: Quantization) -> int: ...

    def distinct_count(self, column: str) -> int: ...

    def range_stats(self, column: str) -> RangeStats: ...


class MemBackend:
    """In-memory engine adapter; queries run without coordination."""

    def __init__(self, dataset: Dataset):
        self.dataset = dataset

    def histogram(self, column, q, ranges):
        return quantized_histogram(self.dataset, column, q, ranges)

    def heatmap(self, column_x, column_y, q_x, q_y, ranges_x, ranges_y):
        return quantized_heatmap(self.dataset, column_x, column_y, q_x, q_y, ranges_x, ranges_y)

    def null_count(self, column, q):
        return null_count(self.dataset, column, q)

    def distinct_count(self, column):
        return distinct_count(self.dataset, column)

    def range_stats(self, column):
        return raw_range_stats(self.dataset, column)


def _range_predicate(column: str, q: Quantization, rng: QuantumRange, dialect: SqlDialect) -> str | None:
    """Predicate selecting rows whose quantum index lies in [lo, hi), or None when empty."""
    if rng.length == 0:
        return None
    c = render_identifier(column, dialect)
    if isinstance(q, NumericQuantization):
        lo = q.representative(rng.lo)
        upper_open = rng.hi < q.domain_size
        parts = [f"{c} >= {lo!r}"]
        if upper_open:
            parts.append(f"{c} < {q.representative(rng.hi)!r}")
        else:
            parts.append(f"{c} <= {q.qmax!r}")
        return " AND ".join(parts)
    first = q.representative(rng.lo).replace("'", "''")
    parts = [f"{c} >= '{first}'"]
    if rng.hi < q.domain_size:
        nxt = q.representative(rng.hi).replace("'", "''")
        parts.append(f"{c} < '{nxt}'")
    elif not q.include_upper:
        last = q.representative(q.domain_size - 1).replace("'", "''")
        parts.append(f"{c} <= '{last}'")
    return " AND ".join(parts)


class SqlBackend:
    """Connector executing count queries over a DB-API connection.

    The table is queried directly (quantization predicates are inlined), so
    the database needs no preparation beyond holding the raw rows.  DDL such
    as quantized-view creation is the caller's concern; see
    :mod:`privhist.sqlgen` for the statement generators.
    """

    def __init__(self, connection, table: str, dialect: SqlDialect = REFERENCE_DIALECT):
        self.connection = connection
        self.table = render_identifier(table, dialect)
        self.dialect = dialect

    def _scalar(self, statement: str):
        cursor = self.connection.cursor()
        try:
            cursor.execute(statement)
            row = cursor.fetchone()
        finally:
            cursor.close()
        return row[0] if row else None

    def _in_range_predicate(self, column: str, q: Quantization) -> str:
        c = render_identifier(column, self.dialect)
        if isinstance(q, NumericQuantization):
            return f"{c} >= {q.qmin!r} AND {c} <= {q.qmax!r}"
        first = q.boundaries[0].replace("'", "''")
        pred = f"{c} >= '{first}'"
        if not q.include_upper:
            last = q.boundaries[-1].replace("'", "''")
            pred += f" AND {c} <= '{last}'"
        return pred

    def histogram(self, column, q, ranges):
        counts = np.zeros(len(ranges), dtype=np.int64)
        for i, rng in enumerate(ranges):
            predicate = _range_predicate(column, q, rng, self.dialect)
            if predicate is None:
                continue
            counts[i] = int(self._scalar(f"SELECT count(*) FROM {self.table} WHERE {predicate}"))
        in_range = int(
            self._scalar(
                f"SELECT count(*) FROM {self.table} WHERE {self._in_range_predicate(column, q)}"
            )
        )
        total = int(self._scalar(f"SELECT count(*) FROM {self.table}"))
        return TrueHistogram(counts, total - in_range)

    def heatmap(self, column_x, column_y, q_x, q_y, ranges_x, ranges_y):
        counts = np.zeros((len(ranges_x), len(ranges_y)), dtype=np.int64)
        for i, rx in enumerate(ranges_x):
            px = _range_predicate(column_x, q_x, rx, self.dialect)
            if px is None:
                continue
            for j, ry in enumerate(ranges_y):
                py = _range_predicate(column_y, q_y, ry, self.dialect)
                if py is None:
                    continue
                counts[i, j] = int(
                    self._scalar(f"SELECT count(*) FROM {self.table} WHERE {px} AND {py}")
                )
        both = (
            f"({self._in_range_predicate(column_x, q_x)}) AND "
            f"({self._in_range_predicate(column_y, q_y)})"
        )
        in_range = int(self._scalar(f"SELECT count(*) FROM {self.table} WHERE {both}"))
        total = int(self._scalar(f"SELECT count(*) FROM {self.table}"))
        return TrueHeatmap(counts, total - in_range)

    def null_count(self, column, q):
        total = int(self._scalar(f"SELECT count(*) FROM {self.table}"))
        in_range = int(
            self._scalar(
                f"SELECT count(*) FROM {self.table} WHERE {self._in_range_predicate(column, q)}"
            )
        )
        return total - in_range

    def distinct_count(self, column):
        c = render_identifier(column, self.dialect)
        value = self._scalar(
            f"SELECT count(DISTINCT {c}) FROM {self.table} WHERE {c} IS NOT NULL"
        )
        return int(value or 0)

    def range_stats(self, column):
        plan = gen_range_query(self.table, column, self.dialect)
        cursor = self.connection.cursor()
        try:
            cursor.execute(plan.statement)
            minimum, maximum, total, non_null = cursor.fetchone()
        finally:
            cursor.close()
        return RangeStats(minimum, maximum, int(total), int(non_null))


def backend_for(dataset: Dataset) -> CountBackend:
    return MemBackend(dataset)
